// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "rqsep/train.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include "rqsep/error.hpp"

namespace rqsep::train {

namespace {

data::StemSet crop(const data::StemSet& track, std::size_t offset, std::size_t length) {
  data::StemSet c;
  c.names = track.names;
  auto slice = [&](const dsp::Waveform& w) {
    const auto b = w.samples.begin() + static_cast<std::ptrdiff_t>(offset);
    return dsp::Waveform(std::vector<double>(b, b + static_cast<std::ptrdiff_t>(length)), w.sample_rate);
  };
  for (const auto& s : track.stems) c.stems.push_back(slice(s));
  c.mixture = slice(track.mixture);
  return c;
}

std::string rng_state(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

Rng parse_rng(const std::string& text) {
  Rng rng;
  std::istringstream in(text);
  in >> rng;
  if (!in) fail(ErrorKind::kFormat, "checkpoint holds a malformed RNG state");
  return rng;
}

const std::string& meta(const Checkpoint& ckpt, const std::string& key) {
  const auto it = ckpt.metadata.find(key);
  if (it == ckpt.metadata.end()) fail(ErrorKind::kFormat, "checkpoint metadata lacks '" + key + "'");
  return it->second;
}

void load_named(const std::map<std::string, Matrix>& arrays, const std::string& name, double* data, Index rows,
                Index cols) {
  const auto it = arrays.find(name);
  if (it == arrays.end()) fail(ErrorKind::kFormat, "checkpoint lacks array '" + name + "'");
  if (it->second.rows() != rows || it->second.cols() != cols) {
    fail(ErrorKind::kFormat, "checkpoint array '" + name + "' is " + std::to_string(it->second.rows()) + "x" +
                                 std::to_string(it->second.cols()) + ", expected " + std::to_string(rows) + "x" +
                                 std::to_string(cols));
  }
  std::copy(it->second.data(), it->second.data() + it->second.size(), data);
}

void load_model_arrays(codec::CodecModel& model, const std::map<std::string, Matrix>& arrays) {
  for (const auto& p : model.parameters()) load_named(arrays, p.name, p.value->data(), p.value->rows(), p.value->cols());
  for (const auto& b : model.buffers()) load_named(arrays, b.name, b.data, b.rows, b.cols);
}

std::vector<data::StemSet> load_split(const std::vector<std::filesystem::path>& dirs, const Config& config) {
  data::LoadOptions options;
  options.stem_names = config.data.stems;
  options.sample_rate = config.codec.sample_rate;
  options.peak = config.data.peak;
  std::vector<data::StemSet> out;
  for (const auto& dir : dirs) out.push_back(data::load_track(dir, options));
  return out;
}

}  // namespace

double scheduled_learning_rate(const TrainSettings& settings, long long step) {
  double lr = settings.learning_rate;
  if (settings.warmup_steps > 0 && step < settings.warmup_steps) {
    lr *= static_cast<double>(step + 1) / settings.warmup_steps;
  }
  if (settings.final_lr_scale != 1.0 && settings.max_steps > 0) {
    const double progress = std::min(1.0, static_cast<double>(step) / settings.max_steps);
    lr *= 1.0 + (settings.final_lr_scale - 1.0) * progress;
  }
  return lr;
}

CodecTrainer::CodecTrainer(const Config& config, std::vector<data::StemSet> train_tracks,
                           std::vector<data::StemSet> validation_tracks)
    : config_(config), rng_(config.train.seed ^ 0x2545F4914F6CDD1DULL) {
  config_.validate();
  const auto window = static_cast<std::size_t>(config_.codec.context_samples());
  for (auto& t : train_tracks) {
    if (t.length() >= window) train_.push_back(std::move(t));
  }
  if (train_.empty()) {
    fail(ErrorKind::kInvalidArgument, "no training track is at least " + std::to_string(config_.codec.context_seconds) +
                                          " s long");
  }
  for (const auto& t : validation_tracks) {
    for (auto& c : data::chunk(t, config_.codec.context_seconds, config_.codec.context_seconds)) {
      if (static_cast<int>(validation_chunks_.size()) < config_.train.val_chunks) validation_chunks_.push_back(std::move(c));
    }
  }
  model_ = codec::CodecModel(config_.codec, config_.rvq, config_.train.seed);
  AdamConfig adam;
  adam.learning_rate = config_.train.learning_rate;
  adam.clip_norm = config_.train.grad_clip;
  adam_ = Adam(adam);
}

codec::TrainingBatch CodecTrainer::sample_batch() {
  const auto window = static_cast<std::size_t>(config_.codec.context_samples());
  std::vector<data::StemSet> chunks;
  for (int b = 0; b < config_.train.batch_size; ++b) {
    const auto& track = train_[uniform_index(rng_, train_.size())];
    const std::size_t offset = uniform_index(rng_, track.length() - window + 1);
    chunks.push_back(crop(track, offset, window));
  }
  return codec::make_batch(chunks);
}

void CodecTrainer::init_codebooks() {
  const int needed = config_.rvq.codebook_size;
  Matrix rows(0, config_.codec.latent_channels);
  for (int attempt = 0; rows.rows() < needed; ++attempt) {
    if (attempt == 64) {
      fail(ErrorKind::kConfig, "k-means init needs " + std::to_string(needed) +
                                   " latent frames; increase train.batch_size or reduce rvq.codebook_size");
    }
    const codec::EncodeOutput enc = model_.encode(sample_batch().mixture, nn::Mode::kTrain);
    Matrix grown(rows.rows() + enc.latent.rows(), rows.cols());
    grown << rows, enc.latent;
    rows = std::move(grown);
  }
  model_.init_codebooks(rows, config_.rvq.kmeans_iters, rng_());
  ++kmeans_inits_;
}

StepLog CodecTrainer::step() {
  if (kmeans_inits_ == 0) init_codebooks();
  const codec::TrainingBatch batch = sample_batch();
  model_.zero_grad();
  const codec::ForwardOutput out = model_.forward(batch, config_.loss, nn::Mode::kTrain);
  StepLog log;
  log.step = step_ + 1;
  log.loss = out.loss;
  if (!std::isfinite(out.loss.total)) {
    fail(ErrorKind::kNumeric, "training diverged: total loss is non-finite at step " + std::to_string(step_ + 1));
  }
  model_.backward();
  adam_.set_learning_rate(scheduled_learning_rate(config_.train, step_));
  log.grad_norm = adam_.step(model_.parameters());
  rvq::ema_update(model_.quantizer(), out.quantization.grid);
  log.reinitialized = rvq::reinit_dead_codes(model_.quantizer(), out.quantization.residuals, rng_());
  ++step_;
  return log;
}

codec::LossBreakdown CodecTrainer::validate() {
  codec::LossBreakdown mean;
  if (validation_chunks_.empty()) return mean;
  for (const auto& c : validation_chunks_) {
    const auto out = model_.forward(codec::make_batch({c}), config_.loss, nn::Mode::kEval);
    mean.spectral += out.loss.spectral;
    mean.reconstruction += out.loss.reconstruction;
    mean.commitment += out.loss.commitment;
    mean.total += out.loss.total;
  }
  const double n = static_cast<double>(validation_chunks_.size());
  mean.spectral /= n;
  mean.reconstruction /= n;
  mean.commitment /= n;
  mean.total /= n;
  return mean;
}

std::map<std::string, Matrix> codec_arrays(codec::CodecModel& model) {
  std::map<std::string, Matrix> arrays;
  for (const auto& p : model.parameters()) arrays[p.name] = *p.value;
  for (const auto& b : model.buffers()) arrays[b.name] = b.map();
  return arrays;
}

Checkpoint CodecTrainer::checkpoint() {
  Checkpoint ckpt;
  ckpt.kind = "codec";
  ckpt.config = to_ini(config_);
  ckpt.metadata["step"] = std::to_string(step_);
  ckpt.metadata["rng"] = rng_state(rng_);
  ckpt.metadata["kmeans_inits"] = std::to_string(kmeans_inits_);
  ckpt.metadata["adam_steps"] = std::to_string(adam_.steps());
  ckpt.arrays = codec_arrays(model_);
  for (auto& [name, m] : adam_.state()) ckpt.arrays[name] = std::move(m);
  return ckpt;
}

void CodecTrainer::restore(const Checkpoint& ckpt) {
  if (ckpt.kind != "codec") fail(ErrorKind::kFormat, "expected a codec checkpoint, found kind '" + ckpt.kind + "'");
  require_same(config_, parse_config(ckpt.config), codec_sections(), "resume");
  load_model_arrays(model_, ckpt.arrays);
  std::map<std::string, Matrix> moments;
  for (const auto& [name, m] : ckpt.arrays) {
    if (name.rfind("adam.", 0) == 0) moments[name] = m;
  }
  adam_.load_state(moments, std::stoll(meta(ckpt, "adam_steps")));
  rng_ = parse_rng(meta(ckpt, "rng"));
  step_ = std::stoll(meta(ckpt, "step"));
  kmeans_inits_ = std::stoi(meta(ckpt, "kmeans_inits"));
}

std::filesystem::path train_codec(const Config& config, const std::filesystem::path& manifest,
                                  const std::filesystem::path& out_dir, std::ostream& log,
                                  const std::optional<std::filesystem::path>& resume) {
  config.validate();
  const data::DatasetSplit split = data::read_manifest(manifest);
  if (split.train.empty()) fail(ErrorKind::kInvalidArgument, "manifest " + manifest.string() + " has no training tracks");
  CodecTrainer trainer(config, load_split(split.train, config),
                       config.train.val_chunks > 0 ? load_split(split.validation, config) : std::vector<data::StemSet>{});
  if (resume) trainer.restore(load_checkpoint(*resume));
  std::filesystem::create_directories(out_dir);
  const auto final_path = out_dir / "codec.ckpt";
  const auto flags = log.flags();
  log.precision(6);
  while (trainer.steps() < config.train.max_steps) {
    const StepLog s = trainer.step();
    if (s.step % config.train.log_every == 0 || s.step == 1) {
      log << "step=" << s.step << " loss_spec=" << s.loss.spectral << " loss_rec=" << s.loss.reconstruction
          << " loss_comm=" << s.loss.commitment << " loss_total=" << s.loss.total << " grad_norm=" << s.grad_norm
          << " reinit=" << s.reinitialized << std::endl;
    }
    if (s.step % config.train.checkpoint_every == 0 && s.step < config.train.max_steps) {
      save_checkpoint(out_dir / ("codec-" + std::to_string(s.step) + ".ckpt"), trainer.checkpoint());
      if (config.train.val_chunks > 0) {
        const auto v = trainer.validate();
        log << "step=" << s.step << " val_spec=" << v.spectral << " val_rec=" << v.reconstruction
            << " val_comm=" << v.commitment << " val_total=" << v.total << std::endl;
      }
    }
  }
  log.flags(flags);
  save_checkpoint(final_path, trainer.checkpoint());
  return final_path;
}

codec::CodecModel load_codec(const std::filesystem::path& path, Config* config_out, const Config* expected) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.kind != "codec") fail(ErrorKind::kFormat, path.string() + ": expected a codec checkpoint, found '" + ckpt.kind + "'");
  const Config config = parse_config(ckpt.config);
  if (expected) require_same(*expected, config, codec_sections(), path.string());
  codec::CodecModel model(config.codec, config.rvq, 0);
  load_model_arrays(model, ckpt.arrays);
  if (config_out) *config_out = config;
  return model;
}

lm::LMModel load_lm(const std::filesystem::path& path, Config* config_out) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.kind != "lm") fail(ErrorKind::kFormat, path.string() + ": expected an lm checkpoint, found '" + ckpt.kind + "'");
  const Config config = parse_config(ckpt.config);
  lm::LMModel model(config.lm, 0);
  for (const auto& p : model.parameters()) load_named(ckpt.arrays, p.name, p.value->data(), p.value->rows(), p.value->cols());
  if (config_out) *config_out = config;
  return model;
}

void write_grid_cache(const std::filesystem::path& path, std::uint64_t codec_hash, const std::vector<CodeGrid>& grids) {
  std::string bytes = "RQGC";
  auto put = [&bytes](std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  put(codec_hash, 8);
  put(grids.size(), 4);
  for (const auto& g : grids) {
    const auto s = rvq::serialize(g);
    put(s.size(), 4);
    bytes.append(reinterpret_cast<const char*>(s.data()), s.size());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write grid cache " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "short write to " + path.string());
}

std::optional<std::vector<CodeGrid>> read_grid_cache(const std::filesystem::path& path, std::uint64_t codec_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto get = [&](int n) {
    if (bytes.size() - pos < static_cast<std::size_t>(n)) fail(ErrorKind::kFormat, "truncated grid cache " + path.string());
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += static_cast<std::size_t>(n);
    return v;
  };
  if (bytes.size() < 4 || bytes.compare(0, 4, "RQGC") != 0) fail(ErrorKind::kFormat, path.string() + " is not a grid cache");
  pos = 4;
  if (get(8) != codec_hash) return std::nullopt;
  const auto count = get(4);
  std::vector<CodeGrid> grids;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto n = get(4);
    if (bytes.size() - pos < n) fail(ErrorKind::kFormat, "truncated grid cache " + path.string());
    const std::vector<unsigned char> g(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                       bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
    grids.push_back(rvq::deserialize_code_grid(g));
    pos += n;
  }
  return grids;
}

std::filesystem::path train_lm(const Config& config, const std::filesystem::path& codec_checkpoint,
                               const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
                               std::ostream& log) {
  Config codec_config;
  codec::CodecModel codec = load_codec(codec_checkpoint, &codec_config);
  if (config.lm.q_depth != codec_config.rvq.depth) {
    fail(ErrorKind::kConfig, "lm.q_depth = " + std::to_string(config.lm.q_depth) + " does not match the codec's rvq.depth = " +
                                 std::to_string(codec_config.rvq.depth));
  }
  if (config.lm.n_cb != codec_config.rvq.codebook_size) {
    fail(ErrorKind::kConfig, "lm.n_cb = " + std::to_string(config.lm.n_cb) + " does not match the codec's rvq.codebook_size = " +
                                 std::to_string(codec_config.rvq.codebook_size));
  }
  Config run = config;
  run.codec = codec_config.codec;
  run.rvq = codec_config.rvq;
  run.data = codec_config.data;
  run.validate();
  const int positions = codec_config.codec.context_samples() / codec_config.codec.fold();
  if (positions > run.lm.max_positions) {
    fail(ErrorKind::kConfig, "lm.max_positions = " + std::to_string(run.lm.max_positions) + " is below the " +
                                 std::to_string(positions) + " positions of one training context");
  }

  const std::uint64_t codec_hash = hash_arrays(codec_arrays(codec));
  std::filesystem::create_directories(out_dir);
  const auto cache_path = out_dir / "grids.cache";
  if (!read_grid_cache(cache_path, codec_hash)) {
    const data::DatasetSplit split = data::read_manifest(manifest);
    std::vector<CodeGrid> grids;
    for (const auto& track : load_split(split.train, run)) {
      for (const auto& c : data::chunk(track, run.codec.context_seconds, run.lm_train.chunk_hop_seconds)) {
        grids.push_back(codec.encode_codes(c.mixture));
      }
    }
    if (grids.empty()) fail(ErrorKind::kInvalidArgument, "no training chunks to encode");
    write_grid_cache(cache_path, codec_hash, grids);
    log << "cached " << grids.size() << " grids to " << cache_path.string() << std::endl;
  }
  const std::vector<CodeGrid> grids = *read_grid_cache(cache_path, codec_hash);

  lm::LMModel model(run.lm, run.train.seed);
  AdamConfig adam_config;
  adam_config.learning_rate = run.lm_train.learning_rate;
  adam_config.clip_norm = run.train.grad_clip;
  Adam adam(adam_config);
  Rng rng(run.train.seed ^ 0x9E3779B97F4A7C15ULL);
  auto snapshot = [&](int step) {
    Checkpoint ckpt;
    ckpt.kind = "lm";
    ckpt.config = to_ini(run);
    ckpt.metadata["codec_hash"] = std::to_string(codec_hash);
    ckpt.metadata["step"] = std::to_string(step);
    for (const auto& p : model.parameters()) ckpt.arrays[p.name] = *p.value;
    for (auto& [name, m] : adam.state()) ckpt.arrays[name] = std::move(m);
    return ckpt;
  };
  const auto flags = log.flags();
  log.precision(6);
  for (int step = 1; step <= run.lm_train.max_steps; ++step) {
    std::vector<CodeGrid> batch;
    for (int b = 0; b < run.lm_train.batch_size; ++b) batch.push_back(grids[uniform_index(rng, grids.size())]);
    model.zero_grad();
    const double nll = model.nll_and_grad(batch);
    if (!std::isfinite(nll)) fail(ErrorKind::kNumeric, "training diverged: NLL is non-finite at step " + std::to_string(step));
    const double norm = adam.step(model.parameters());
    if (step % run.lm_train.log_every == 0 || step == 1) {
      log << "step=" << step << " loss_nll=" << nll << " grad_norm=" << norm << std::endl;
    }
    if (step % run.lm_train.checkpoint_every == 0 && step < run.lm_train.max_steps) {
      save_checkpoint(out_dir / ("lm-" + std::to_string(step) + ".ckpt"), snapshot(step));
    }
  }
  log.flags(flags);

  if (hash_arrays(codec_arrays(codec)) != codec_hash) fail(ErrorKind::kNumeric, "codec parameters changed during LM training");
  const auto path = out_dir / "lm.ckpt";
  save_checkpoint(path, snapshot(run.lm_train.max_steps));
  return path;
}

}  // namespace rqsep::train
