// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "rqsep/codec.hpp"

#include <cmath>
#include <string>

#include "rqsep/error.hpp"

namespace rqsep::codec {

namespace {

std::string idx(const std::string& prefix, int i) { return prefix + std::to_string(i); }

SeqBatch add(SeqBatch a, const SeqBatch& b) {
  a.data += b.data;
  return a;
}

}  // namespace

int CodecConfig::fold() const {
  int f = 1;
  for (int s : strides) f *= s;
  return f;
}

int CodecConfig::context_samples() const {
  return static_cast<int>(std::llround(context_seconds * sample_rate));
}

double CodecConfig::latent_rate() const { return static_cast<double>(sample_rate) / fold(); }

double compression_factor(const CodecConfig& codec, const rvq::QuantizerConfig& quantizer, int source_bits) {
  const double code_bits = codec.latent_rate() * quantizer.depth * std::log2(static_cast<double>(quantizer.codebook_size));
  return static_cast<double>(codec.sample_rate) * source_bits / code_bits;
}

void CodecConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& why) { fail(ErrorKind::kConfig, "codec." + field + ": " + why); };
  if (strides.size() != kBlocks) bad("strides", "expected " + std::to_string(kBlocks) + " entries");
  if (kernels.size() != kBlocks) bad("kernels", "expected " + std::to_string(kBlocks) + " entries");
  for (int i = 0; i < kBlocks; ++i) {
    if (strides[i] < 1) bad("strides", "entries must be positive");
    if (kernels[i] < 1 || kernels[i] % 2 == 0) bad("kernels", "entries must be odd and positive");
    if (kernels[i] < strides[i]) bad("kernels", "each kernel must be at least its stride");
  }
  if (base_channels < 1) bad("base_channels", "must be positive");
  if (latent_channels != base_channels << kBlocks) {
    bad("latent_channels", "must equal base_channels * 16 (" + std::to_string(base_channels << kBlocks) + ")");
  }
  if (latent_channels % 2 != 0) bad("latent_channels", "must be even");
  if (lstm_layers < 1) bad("lstm_layers", "must be positive");
  if (n_sources < 1) bad("n_sources", "must be positive");
  if (sample_rate < 1) bad("sample_rate", "must be positive");
  if (!(context_seconds > 0.0)) bad("context_seconds", "must be positive");
  const double samples = context_seconds * sample_rate;
  if (std::abs(samples - std::round(samples)) > 1e-9 || context_samples() % fold() != 0) {
    bad("context_seconds", "context_seconds * sample_rate must be a multiple of the stride product " + std::to_string(fold()));
  }
}

ResidualBlock::ResidualBlock(const std::string& name, int channels, Rng& rng) {
  for (int j = 0; j < 3; ++j) {
    conv_[j] = nn::Conv1d(idx(name + ".conv", j), channels, channels, 3, 1, false, rng);
    bn_[j] = nn::BatchNorm1d(idx(name + ".bn", j), channels);
    act_[j] = nn::PReLU(idx(name + ".act", j));
  }
}

SeqBatch ResidualBlock::forward(const SeqBatch& x, nn::Mode mode) {
  SeqBatch h = act_[0].forward(bn_[0].forward(conv_[0].forward(x), mode));
  h = act_[1].forward(bn_[1].forward(conv_[1].forward(h), mode));
  h = bn_[2].forward(conv_[2].forward(h), mode);
  h.data += x.data;
  return act_[2].forward(h);
}

SeqBatch ResidualBlock::backward(const SeqBatch& grad_out) {
  const SeqBatch g_sum = act_[2].backward(grad_out);
  SeqBatch g = conv_[2].backward(bn_[2].backward(g_sum));
  g = conv_[1].backward(bn_[1].backward(act_[1].backward(g)));
  g = conv_[0].backward(bn_[0].backward(act_[0].backward(g)));
  g.data += g_sum.data;
  return g;
}

void ResidualBlock::collect(std::vector<ParamRef>& out) {
  for (int j = 0; j < 3; ++j) {
    conv_[j].collect(out);
    bn_[j].collect(out);
    act_[j].collect(out);
  }
}

void ResidualBlock::collect_buffers(std::vector<BufferRef>& out) {
  for (auto& bn : bn_) bn.collect_buffers(out);
}

TrainingBatch make_batch(const std::vector<data::StemSet>& chunks) {
  if (chunks.empty()) fail(ErrorKind::kInvalidArgument, "make_batch: no chunks");
  const std::size_t length = chunks.front().length();
  const std::size_t sources = chunks.front().size();
  const auto batch = static_cast<int>(chunks.size());
  TrainingBatch out;
  out.mixture = SeqBatch(Matrix(1, static_cast<Index>(batch * length)), batch);
  out.targets = SeqBatch(Matrix(static_cast<Index>(sources), static_cast<Index>(batch * length)), batch);
  for (int b = 0; b < batch; ++b) {
    const auto& c = chunks[static_cast<std::size_t>(b)];
    if (c.length() != length || c.size() != sources) fail(ErrorKind::kShape, "make_batch: chunks differ in shape");
    const Index base = static_cast<Index>(b) * static_cast<Index>(length);
    for (std::size_t t = 0; t < length; ++t) out.mixture.data(0, base + static_cast<Index>(t)) = c.mixture.samples[t];
    for (std::size_t s = 0; s < sources; ++s) {
      if (c.stems[s].size() != length) fail(ErrorKind::kShape, "make_batch: stem length differs from mixture");
      for (std::size_t t = 0; t < length; ++t) {
        out.targets.data(static_cast<Index>(s), base + static_cast<Index>(t)) = c.stems[s].samples[t];
      }
    }
  }
  return out;
}

CodecModel::CodecModel(const CodecConfig& config, const rvq::QuantizerConfig& quantizer, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  quantizer_ = rvq::ResidualQuantizer(quantizer, config_.latent_channels, seed ^ 0x5bd1e995ULL);
  build(seed);
}

void CodecModel::build(std::uint64_t seed) {
  Rng rng(seed);
  const int base = config_.base_channels;
  const int latent = config_.latent_channels;
  enc_in_ = nn::Conv1d("encoder.in", 1, base, 3, 1, false, rng);
  enc_in_bn_ = nn::BatchNorm1d("encoder.in_bn", base);
  enc_in_act_ = nn::PReLU("encoder.in_act");
  for (int i = 0; i < kBlocks; ++i) {
    const std::string name = idx("encoder.block", i);
    enc_down_.emplace_back(name + ".down", config_.channels(i), config_.channels(i + 1), config_.kernels[i],
                           config_.strides[i], false, rng);
    enc_down_bn_.emplace_back(name + ".down_bn", config_.channels(i + 1));
    enc_down_act_.emplace_back(name + ".down_act");
    enc_res_.emplace_back(name + ".res", config_.channels(i + 1), rng);
  }
  enc_lstm_ = nn::BiLstm("encoder.lstm", latent, latent / 2, config_.lstm_layers, rng);

  dec_lstm_ = nn::BiLstm("decoder.lstm", latent, latent / 2, config_.lstm_layers, rng);
  dec_res_.resize(kBlocks);
  dec_up_.resize(kBlocks);
  dec_up_bn_.resize(kBlocks);
  dec_up_act_.resize(kBlocks);
  dec_skip_.resize(kBlocks);
  for (int i = kBlocks - 1; i >= 0; --i) {
    const std::string name = idx("decoder.block", i);
    dec_res_[i] = ResidualBlock(name + ".res", config_.channels(i + 1), rng);
    dec_up_[i] = nn::ConvTranspose1d(name + ".up", config_.channels(i + 1), config_.channels(i), config_.kernels[i],
                                     config_.strides[i], false, rng);
    dec_up_bn_[i] = nn::BatchNorm1d(name + ".up_bn", config_.channels(i));
    dec_up_act_[i] = nn::PReLU(name + ".up_act");
    dec_skip_[i] = nn::Conv1d(name + ".skip", config_.channels(i), config_.channels(i), 1, 1, false, rng);
  }
  dec_out_ = nn::Conv1d("decoder.out", base, config_.n_sources, 3, 1, true, rng);

  codebook_grads_.clear();
  for (int d = 0; d < quantizer_.depth(); ++d) {
    codebook_grads_.push_back(Matrix::Zero(quantizer_.codebook_size(), quantizer_.dim()));
  }
}

void CodecModel::check_mixture(const SeqBatch& mixture) const {
  if (mixture.channels() != 1) fail(ErrorKind::kShape, "mixture must have one channel");
  if (mixture.length() % config_.fold() != 0) {
    fail(ErrorKind::kShape, "mixture length " + std::to_string(mixture.length()) + " is not divisible by the fold " +
                                std::to_string(config_.fold()) + "; pad it or cut it with data::chunk");
  }
}

EncodeOutput CodecModel::encode(const SeqBatch& mixture, nn::Mode mode) {
  check_mixture(mixture);
  EncodeOutput out;
  out.batch = mixture.batch;
  SeqBatch h = enc_in_act_.forward(enc_in_bn_.forward(enc_in_.forward(mixture), mode));
  for (int i = 0; i < kBlocks; ++i) {
    out.skips.push_back(h);
    h = enc_down_act_[i].forward(enc_down_bn_[i].forward(enc_down_[i].forward(h), mode));
    h = enc_res_[i].forward(h, mode);
  }
  h = add(h, enc_lstm_.forward(h));
  out.latent = h.data.transpose();
  return out;
}

SeqBatch CodecModel::decode(const Matrix& quantized, const std::vector<SeqBatch>* skips, int batch, nn::Mode mode) {
  if (quantized.cols() != config_.latent_channels) {
    fail(ErrorKind::kShape, "quantized latent has " + std::to_string(quantized.cols()) + " channels, expected " +
                                std::to_string(config_.latent_channels));
  }
  if (batch < 1 || quantized.rows() % batch != 0) fail(ErrorKind::kShape, "quantized rows not divisible by batch");
  const bool use_skips = config_.use_skips && skips != nullptr;
  const int positions = static_cast<int>(quantized.rows()) / batch;
  if (use_skips) {
    if (skips->size() != kBlocks) fail(ErrorKind::kShape, "expected one skip activation per encoder block");
    int length = positions;
    for (int i = kBlocks - 1; i >= 0; --i) {
      length *= config_.strides[i];
      const SeqBatch& s = (*skips)[static_cast<std::size_t>(i)];
      if (s.channels() != config_.channels(i) || s.batch != batch || s.length() != length) {
        fail(ErrorKind::kShape, "skip activation " + std::to_string(i) + " does not match the latent shape");
      }
    }
  }
  cache_.used_skips = use_skips;
  SeqBatch h(quantized.transpose(), batch);
  h = add(h, dec_lstm_.forward(h));
  for (int i = kBlocks - 1; i >= 0; --i) {
    h = dec_res_[i].forward(h, mode);
    h = dec_up_act_[i].forward(dec_up_bn_[i].forward(dec_up_[i].forward(h), mode));
    if (use_skips) h = add(h, dec_skip_[i].forward((*skips)[static_cast<std::size_t>(i)]));
  }
  return dec_out_.forward(h);
}

SpectralLoss& CodecModel::spectral(const LossConfig& loss) {
  if (!spectral_.loss || spectral_.scales != loss.spectral_scales || spectral_.alpha != loss.alpha) {
    spectral_.loss = std::make_unique<SpectralLoss>(config_.sample_rate, loss.spectral_scales, loss.alpha);
    spectral_.scales = loss.spectral_scales;
    spectral_.alpha = loss.alpha;
  }
  return *spectral_.loss;
}

ForwardOutput CodecModel::forward(const TrainingBatch& batch, const LossConfig& loss, nn::Mode mode,
                                  const FrozenQuantization* frozen) {
  const int n_batch = batch.mixture.batch;
  const int length = batch.mixture.length();
  if (batch.targets.channels() != config_.n_sources || batch.targets.batch != n_batch ||
      batch.targets.length() != length) {
    fail(ErrorKind::kShape, "targets must be " + std::to_string(config_.n_sources) + " sources matching the mixture");
  }
  cache_.valid = false;
  ForwardOutput out;
  out.encoded = encode(batch.mixture, mode);
  const Matrix& latent = out.encoded.latent;
  const auto& rq_config = quantizer_.config();

  Matrix decoder_input;
  if (frozen == nullptr) {
    out.quantization = rvq::quantize(latent, quantizer_);
    decoder_input = rvq::straight_through(latent, out.quantization.quantized);
    cache_.commitment = rvq::commitment_terms(out.quantization.residuals, out.quantization.chosen, latent,
                                              rq_config.beta, rq_config.commitment_third_term);
    FrozenQuantization& f = cache_.frozen;
    f.grid = out.quantization.grid;
    f.offset = out.quantization.quantized - latent;
    f.sg_residuals = out.quantization.residuals;
    f.sg_quantized = out.quantization.chosen;
    f.residual_offsets.clear();
    for (const Matrix& r : out.quantization.residuals) f.residual_offsets.push_back(latent - r);
  } else {
    out.quantization = rvq::quantize_with_codes(latent, frozen->grid, quantizer_);
    if (frozen->offset.rows() != latent.rows() || frozen->offset.cols() != latent.cols() ||
        frozen->residual_offsets.size() != static_cast<std::size_t>(quantizer_.depth())) {
      fail(ErrorKind::kShape, "frozen quantization does not match this batch");
    }
    decoder_input = latent + frozen->offset;
    std::vector<Matrix> live_residuals;
    for (const Matrix& o : frozen->residual_offsets) live_residuals.push_back(latent - o);
    cache_.commitment = rvq::commitment_terms(frozen->sg_residuals, out.quantization.chosen, live_residuals,
                                              frozen->sg_quantized, latent, rq_config.beta,
                                              rq_config.commitment_third_term);
    cache_.frozen = *frozen;
  }
  cache_.grid = out.quantization.grid;

  out.estimates = decode(decoder_input, &out.encoded.skips, n_batch, mode);

  SpectralLoss* spec = loss.w_spec != 0.0 ? &spectral(loss) : nullptr;
  Matrix grad = Matrix::Zero(out.estimates.data.rows(), out.estimates.data.cols());
  const double inv_b = 1.0 / static_cast<double>(n_batch);
  std::vector<double> target(static_cast<std::size_t>(length));
  std::vector<double> estimate(static_cast<std::size_t>(length));
  std::vector<double> g(static_cast<std::size_t>(length));
  double spec_total = 0.0;
  double rec_total = 0.0;
  for (int b = 0; b < n_batch; ++b) {
    const Index base = static_cast<Index>(b) * length;
    for (int s = 0; s < config_.n_sources; ++s) {
      double mse = 0.0;
      for (int t = 0; t < length; ++t) {
        target[static_cast<std::size_t>(t)] = batch.targets.data(s, base + t);
        estimate[static_cast<std::size_t>(t)] = out.estimates.data(s, base + t);
        const double d = estimate[static_cast<std::size_t>(t)] - target[static_cast<std::size_t>(t)];
        mse += d * d;
        grad(s, base + t) = loss.w_rec * inv_b * 2.0 * d / length;
      }
      rec_total += mse / length;
      if (spec != nullptr) {
        std::fill(g.begin(), g.end(), 0.0);
        spec_total += spec->value_and_grad(target, estimate, g);
        for (int t = 0; t < length; ++t) grad(s, base + t) += loss.w_spec * inv_b * g[static_cast<std::size_t>(t)];
      }
    }
  }
  out.loss.spectral = spec_total * inv_b;
  out.loss.reconstruction = rec_total * inv_b;
  out.loss.commitment = cache_.commitment.value;
  out.loss.total = loss.w_spec * out.loss.spectral + loss.w_rec * out.loss.reconstruction +
                   loss.w_comm * out.loss.commitment;
  cache_.grad_estimates = std::move(grad);
  if (loss.w_comm != 1.0) {
    cache_.commitment.grad_encoder *= loss.w_comm;
    for (Matrix& m : cache_.commitment.grad_quantized) m *= loss.w_comm;
  }
  cache_.batch = n_batch;
  cache_.length = length;
  cache_.valid = true;
  return out;
}

void CodecModel::backward() {
  if (!cache_.valid) fail(ErrorKind::kInvalidArgument, "backward() needs a preceding forward()");
  cache_.valid = false;
  const int batch = cache_.batch;

  // Decoder.
  SeqBatch g = dec_out_.backward(SeqBatch(cache_.grad_estimates, batch));
  std::vector<SeqBatch> grad_skips(kBlocks);
  for (int i = 0; i < kBlocks; ++i) {
    if (cache_.used_skips) grad_skips[static_cast<std::size_t>(i)] = dec_skip_[i].backward(g);
    g = dec_up_[i].backward(dec_up_bn_[i].backward(dec_up_act_[i].backward(g)));
    g = dec_res_[i].backward(g);
  }
  g = add(g, dec_lstm_.backward(g));

  // Straight-through: the decoder-input gradient lands on the latent.
  Matrix grad_latent = rvq::straight_through_backward(g.data).transpose();
  grad_latent += cache_.commitment.grad_encoder;
  rvq::accumulate_codebook_grads(cache_.grid, cache_.commitment.grad_quantized, codebook_grads_);

  // Encoder.
  g = SeqBatch(grad_latent.transpose(), batch);
  g = add(g, enc_lstm_.backward(g));
  for (int i = kBlocks - 1; i >= 0; --i) {
    g = enc_res_[i].backward(g);
    g = enc_down_[i].backward(enc_down_bn_[i].backward(enc_down_act_[i].backward(g)));
    if (cache_.used_skips) g.data += grad_skips[static_cast<std::size_t>(i)].data;
  }
  enc_in_.backward(enc_in_bn_.backward(enc_in_act_.backward(g)));
}

FrozenQuantization CodecModel::freeze() const {
  if (cache_.frozen.sg_residuals.empty()) fail(ErrorKind::kInvalidArgument, "freeze() needs a preceding forward()");
  return cache_.frozen;
}

void CodecModel::init_codebooks(const Matrix& latent_rows, int iters, std::uint64_t seed) {
  Matrix residual = latent_rows;
  for (int d = 0; d < quantizer_.depth(); ++d) {
    rvq::Codebook cb = rvq::kmeans_init(residual, quantizer_.codebook_size(), iters, seed + static_cast<std::uint64_t>(d));
    const auto codes = rvq::nearest(residual, cb.vectors);
    for (Index t = 0; t < residual.rows(); ++t) residual.row(t) -= cb.vectors.row(codes[static_cast<std::size_t>(t)]);
    quantizer_.codebook(d) = std::move(cb);
  }
}

std::vector<ParamRef> CodecModel::parameters() {
  std::vector<ParamRef> out;
  enc_in_.collect(out);
  enc_in_bn_.collect(out);
  enc_in_act_.collect(out);
  for (int i = 0; i < kBlocks; ++i) {
    enc_down_[i].collect(out);
    enc_down_bn_[i].collect(out);
    enc_down_act_[i].collect(out);
    enc_res_[i].collect(out);
  }
  enc_lstm_.collect(out);
  dec_lstm_.collect(out);
  for (int i = kBlocks - 1; i >= 0; --i) {
    dec_res_[i].collect(out);
    dec_up_[i].collect(out);
    dec_up_bn_[i].collect(out);
    dec_up_act_[i].collect(out);
    dec_skip_[i].collect(out);
  }
  dec_out_.collect(out);
  for (int d = 0; d < quantizer_.depth(); ++d) {
    out.push_back({"rvq.codebook" + std::to_string(d), &quantizer_.codebook(d).vectors,
                   &codebook_grads_[static_cast<std::size_t>(d)]});
  }
  return out;
}

std::vector<BufferRef> CodecModel::buffers() {
  std::vector<BufferRef> out;
  enc_in_bn_.collect_buffers(out);
  for (int i = 0; i < kBlocks; ++i) {
    enc_down_bn_[i].collect_buffers(out);
    enc_res_[i].collect_buffers(out);
  }
  for (int i = kBlocks - 1; i >= 0; --i) {
    dec_res_[i].collect_buffers(out);
    dec_up_bn_[i].collect_buffers(out);
  }
  for (int d = 0; d < quantizer_.depth(); ++d) {
    out.emplace_back("rvq.usage" + std::to_string(d), quantizer_.codebook(d).ema_usage);
  }
  return out;
}

void CodecModel::zero_grad() { nn::zero_grads(parameters()); }

EncodeOutput CodecModel::encode(const dsp::Waveform& mixture) {
  if (mixture.sample_rate != config_.sample_rate) {
    fail(ErrorKind::kInvalidArgument, "mixture sample rate " + std::to_string(mixture.sample_rate) +
                                          " Hz does not match the model's " + std::to_string(config_.sample_rate) + " Hz");
  }
  const Eigen::Map<const Matrix> x(mixture.samples.data(), 1, static_cast<Index>(mixture.size()));
  return encode(SeqBatch(x, 1), nn::Mode::kEval);
}

data::StemSet CodecModel::to_stems(const SeqBatch& out) const {
  data::StemSet stems;
  const auto& defaults = data::default_stem_names();
  for (int s = 0; s < config_.n_sources; ++s) {
    stems.names.push_back(config_.n_sources == static_cast<int>(defaults.size()) ? defaults[static_cast<std::size_t>(s)]
                                                                                 : idx("source", s));
    dsp::Waveform w;
    w.sample_rate = config_.sample_rate;
    w.samples.resize(static_cast<std::size_t>(out.data.cols()));
    for (Index t = 0; t < out.data.cols(); ++t) w.samples[static_cast<std::size_t>(t)] = out.data(s, t);
    stems.stems.push_back(std::move(w));
  }
  stems.mixture.sample_rate = config_.sample_rate;
  stems.remix();
  return stems;
}

data::StemSet CodecModel::decode(const Matrix& quantized, const std::vector<SeqBatch>* skips) {
  return to_stems(decode(quantized, skips, 1, nn::Mode::kEval));
}

CodeGrid CodecModel::encode_codes(const dsp::Waveform& mixture) {
  return rvq::quantize(encode(mixture).latent, quantizer_).grid;
}

data::StemSet CodecModel::decode_codes(const CodeGrid& grid) {
  if (grid.codebook_size != quantizer_.codebook_size()) {
    fail(ErrorKind::kShape, "code grid codebook size " + std::to_string(grid.codebook_size) +
                                " does not match the model's " + std::to_string(quantizer_.codebook_size()));
  }
  return decode(rvq::dequantize(grid, quantizer_), nullptr);
}

data::StemSet CodecModel::separate(const dsp::Waveform& mixture) {
  EncodeOutput enc = encode(mixture);
  const Matrix quantized = rvq::quantize(enc.latent, quantizer_).quantized;
  return decode(quantized, &enc.skips);
}

}  // namespace rqsep::codec
