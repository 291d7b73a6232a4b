// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "rqsep/separate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "rqsep/error.hpp"
#include "rqsep/train.hpp"
#include "rqsep/wav.hpp"

namespace rqsep::train {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::kIo, "short write to " + path.string());
}

double peak_of(const std::vector<double>& x) {
  double p = 0.0;
  for (double v : x) p = std::max(p, std::abs(v));
  return p;
}

}  // namespace

std::vector<std::size_t> cover_offsets(std::size_t length, std::size_t window, std::size_t hop) {
  if (window == 0 || hop == 0) fail(ErrorKind::kInvalidArgument, "cover_offsets: window and hop must be positive");
  if (length < window) return {};
  std::vector<std::size_t> out = data::window_offsets(length, window, hop);
  if (out.back() + window < length) out.push_back(length - window);
  return out;
}

std::vector<std::vector<double>> crossfade_weights(std::size_t length, std::size_t window,
                                                   const std::vector<std::size_t>& offsets) {
  const double w = static_cast<double>(window);
  std::vector<std::vector<double>> weights;
  std::vector<double> total(length, 0.0);
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    std::vector<double> row(window);
    for (std::size_t i = 0; i < window; ++i) {
      const double x = 2.0 * static_cast<double>(i) + 1.0;
      double tri = 1.0 - std::abs(x - w) / w;
      if (k == 0 && x < w) tri = 1.0;
      if (k + 1 == offsets.size() && x > w) tri = 1.0;
      row[i] = tri;
      total[offsets[k] + i] += tri;
    }
    weights.push_back(std::move(row));
  }
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    for (std::size_t i = 0; i < window; ++i) weights[k][i] /= total[offsets[k] + i];
  }
  return weights;
}

data::StemSet separate_track(const metrics::Separator& separate, const dsp::Waveform& mixture, double chunk_seconds,
                             double hop_seconds) {
  const auto window = static_cast<std::size_t>(std::llround(chunk_seconds * mixture.sample_rate));
  const auto hop = static_cast<std::size_t>(std::llround(hop_seconds * mixture.sample_rate));
  if (mixture.size() < window) {
    fail(ErrorKind::kInvalidArgument, "mixture of " + std::to_string(mixture.seconds()) + " s is shorter than one " +
                                          std::to_string(chunk_seconds) + " s chunk");
  }
  const auto offsets = cover_offsets(mixture.size(), window, hop);
  const auto weights = crossfade_weights(mixture.size(), window, offsets);
  data::StemSet out;
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    const auto b = mixture.samples.begin() + static_cast<std::ptrdiff_t>(offsets[k]);
    const dsp::Waveform chunk(std::vector<double>(b, b + static_cast<std::ptrdiff_t>(window)), mixture.sample_rate);
    const data::StemSet est = separate(chunk);
    if (k == 0) {
      out.names = est.names;
      for (std::size_t s = 0; s < est.size(); ++s) {
        out.stems.emplace_back(std::vector<double>(mixture.size(), 0.0), mixture.sample_rate);
      }
    }
    if (est.size() != out.size()) fail(ErrorKind::kShape, "separator changed its stem count between chunks");
    for (std::size_t s = 0; s < est.size(); ++s) {
      if (est.stems[s].size() != window) fail(ErrorKind::kShape, "separator returned a stem of the wrong length");
      for (std::size_t i = 0; i < window; ++i) out.stems[s].samples[offsets[k] + i] += weights[k][i] * est.stems[s].samples[i];
    }
  }
  out.mixture.sample_rate = mixture.sample_rate;
  out.remix();
  return out;
}

std::vector<std::filesystem::path> separate_file(const std::filesystem::path& codec_checkpoint,
                                                 const std::filesystem::path& mixture_wav,
                                                 const std::filesystem::path& out_dir) {
  Config config;
  codec::CodecModel model = load_codec(codec_checkpoint, &config);
  dsp::Waveform mixture = dsp::resample(data::read_wav(mixture_wav), config.codec.sample_rate);
  // Match the training normalization, then undo it on the outputs.
  const double peak = peak_of(mixture.samples);
  const double gain = peak > 0.0 ? config.data.peak / peak : 1.0;
  for (double& v : mixture.samples) v *= gain;
  data::StemSet stems = separate_track([&model](const dsp::Waveform& m) { return model.separate(m); }, mixture,
                                       config.codec.context_seconds, config.codec.context_seconds / 2.0);
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> paths;
  for (std::size_t s = 0; s < stems.size(); ++s) {
    for (double& v : stems.stems[s].samples) v /= gain;
    const auto path = out_dir / (stems.names[s] + ".wav");
    data::write_wav(path, stems.stems[s]);
    paths.push_back(path);
  }
  return paths;
}

metrics::EvalReport evaluate_file(const std::filesystem::path& codec_checkpoint, const std::filesystem::path& manifest,
                                  const std::filesystem::path& out_dir, const metrics::EvalOptions* eval) {
  Config config;
  codec::CodecModel model = load_codec(codec_checkpoint, &config);
  if (eval) config.eval = *eval;
  data::LoadOptions options;
  options.stem_names = config.data.stems;
  options.sample_rate = config.codec.sample_rate;
  options.peak = config.data.peak;
  std::vector<data::StemSet> tracks;
  for (const auto& dir : data::read_manifest(manifest).test) tracks.push_back(data::load_track(dir, options));
  const metrics::EvalReport report =
      metrics::evaluate([&model](const dsp::Waveform& m) { return model.separate(m); }, tracks, config.eval);
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "report.txt", metrics::render_table(report));
  write_text(out_dir / "report.kv", metrics::render_key_values(report));
  return report;
}

CodeGrid generate_file(const std::filesystem::path& lm_checkpoint, const std::filesystem::path& codec_checkpoint,
                       double seconds, std::uint64_t seed, const std::filesystem::path& out_wav) {
  Config lm_config;
  lm::LMModel prior = load_lm(lm_checkpoint, &lm_config);
  Config codec_config;
  codec::CodecModel model = load_codec(codec_checkpoint, &codec_config);
  if (lm_config.lm.q_depth != codec_config.rvq.depth || lm_config.lm.n_cb != codec_config.rvq.codebook_size) {
    fail(ErrorKind::kConfig, "lm.q_depth/lm.n_cb do not match the codec's rvq.depth/rvq.codebook_size");
  }
  const double latent_rate = codec_config.codec.latent_rate();
  const int positions = static_cast<int>(std::llround(seconds * latent_rate));
  const CodeGrid grid = lm::generate(prior, positions, seed, lm_config.lm.temperature, lm_config.lm.top_k);
  data::StemSet stems = model.decode_codes(grid);
  for (double& v : stems.mixture.samples) v = std::clamp(v, -1.0, 1.0);
  if (out_wav.has_parent_path()) std::filesystem::create_directories(out_wav.parent_path());
  data::write_wav(out_wav, stems.mixture);
  for (std::size_t s = 0; s < stems.size(); ++s) {
    for (double& v : stems.stems[s].samples) v = std::clamp(v, -1.0, 1.0);
    auto path = out_wav;
    path.replace_filename(out_wav.stem().string() + "_" + stems.names[s] + ".wav");
    data::write_wav(path, stems.stems[s]);
  }
  return grid;
}

CodeGrid encode_file(const std::filesystem::path& codec_checkpoint, const std::filesystem::path& mixture_wav,
                     const std::filesystem::path& out_grid) {
  Config config;
  codec::CodecModel model = load_codec(codec_checkpoint, &config);
  dsp::Waveform mixture = dsp::resample(data::read_wav(mixture_wav), config.codec.sample_rate);
  const auto fold = static_cast<std::size_t>(config.codec.fold());
  const std::size_t padded = (mixture.size() + fold - 1) / fold * fold;
  if (padded == 0) fail(ErrorKind::kInvalidArgument, "cannot encode an empty mixture");
  mixture.samples.resize(padded, 0.0);
  const CodeGrid grid = model.encode_codes(mixture);
  if (out_grid.has_parent_path()) std::filesystem::create_directories(out_grid.parent_path());
  rvq::write_code_grid(out_grid, grid);
  return grid;
}

void decode_file(const std::filesystem::path& codec_checkpoint, const std::filesystem::path& grid_path,
                 const std::filesystem::path& out_dir) {
  codec::CodecModel model = load_codec(codec_checkpoint);
  data::StemSet stems = model.decode_codes(rvq::read_code_grid(grid_path));
  std::filesystem::create_directories(out_dir);
  for (std::size_t s = 0; s < stems.size(); ++s) {
    for (double& v : stems.stems[s].samples) v = std::clamp(v, -1.0, 1.0);
    data::write_wav(out_dir / (stems.names[s] + ".wav"), stems.stems[s]);
  }
  for (double& v : stems.mixture.samples) v = std::clamp(v, -1.0, 1.0);
  data::write_wav(out_dir / "mix.wav", stems.mixture);
}

}  // namespace rqsep::train
