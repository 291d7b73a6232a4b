// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

// The separation codec: a strided convolutional encoder with a recurrent
// bottleneck, a residual vector quantizer, and a mirrored decoder that emits
// one waveform per source.
//
// Activations are SeqBatch (channels x batch*length). Latents handed to the
// quantizer are positions x channels with row b*T_c + t.
//
// A model object caches activations during forward passes, so one instance
// must not be used from several threads at once. Copy the model to run
// inference concurrently.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rqsep/code_grid.hpp"
#include "rqsep/data.hpp"
#include "rqsep/losses.hpp"
#include "rqsep/lstm.hpp"
#include "rqsep/nn.hpp"
#include "rqsep/rvq.hpp"

namespace rqsep::codec {

inline constexpr int kBlocks = 4;

struct CodecConfig {
  std::vector<int> strides{5, 5, 4, 2};
  std::vector<int> kernels{7, 7, 7, 5};
  int base_channels = 16;
  int latent_channels = 256;
  int lstm_layers = 2;
  int n_sources = 4;
  int sample_rate = 22050;
  double context_seconds = 4.0;
  bool use_skips = true;

  /// Product of the strides.
  int fold() const;
  /// Samples in one training context.
  int context_samples() const;
  /// Latent positions per second (sample_rate / fold()).
  double latent_rate() const;
  /// Channel count after block i (i = 0 is the initial conv).
  int channels(int i) const { return base_channels << i; }
  /// Throws kConfig naming the first violated field.
  void validate() const;
};

/// Ratio of 16-bit PCM bits to code bits: (sample_rate * source_bits) /
/// (latent_rate * depth * log2(codebook_size)).
double compression_factor(const CodecConfig& codec, const rvq::QuantizerConfig& quantizer, int source_bits = 16);

struct LossConfig {
  double w_spec = 1.0;
  double w_rec = 10.0;
  double w_comm = 1.0;
  double alpha = 1.0;
  std::vector<int> spectral_scales = default_spectral_scales();
};

struct LossBreakdown {
  double spectral = 0.0;
  double reconstruction = 0.0;
  double commitment = 0.0;
  double total = 0.0;
};

// conv-bn-prelu, conv-bn-prelu, conv-bn, add the input, prelu.
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(const std::string& name, int channels, Rng& rng);
  SeqBatch forward(const SeqBatch& x, nn::Mode mode);
  SeqBatch backward(const SeqBatch& grad_out);
  void collect(std::vector<ParamRef>& out);
  void collect_buffers(std::vector<BufferRef>& out);

 private:
  nn::Conv1d conv_[3];
  nn::BatchNorm1d bn_[3];
  nn::PReLU act_[3];
};

struct EncodeOutput {
  Matrix latent;               // (batch*T_c) x latent_channels
  std::vector<SeqBatch> skips;  // skips[i] is the input of encoder block i
  int batch = 1;
  int positions() const { return batch == 0 ? 0 : static_cast<int>(latent.rows()) / batch; }
};

// Quantization state held fixed while parameters move, so that the forward
// pass is the smooth function whose exact gradient backward() returns:
// codes stay put, and every stop-gradient operand keeps its value from the
// point where the state was captured.
struct FrozenQuantization {
  CodeGrid grid;
  Matrix offset;                          // decoder input minus latent
  std::vector<Matrix> sg_residuals;
  std::vector<Matrix> sg_quantized;
  std::vector<Matrix> residual_offsets;  // sum of earlier chosen vectors per depth
};

struct TrainingBatch {
  SeqBatch mixture;  // 1 x batch*T
  SeqBatch targets;  // n_sources x batch*T
};

/// Stacks equally long chunks into a batch.
TrainingBatch make_batch(const std::vector<data::StemSet>& chunks);

struct ForwardOutput {
  SeqBatch estimates;  // n_sources x batch*T
  LossBreakdown loss;
  rvq::Quantization quantization;
  EncodeOutput encoded;
};

class CodecModel {
 public:
  CodecModel() = default;
  CodecModel(const CodecConfig& config, const rvq::QuantizerConfig& quantizer, std::uint64_t seed);

  const CodecConfig& config() const { return config_; }
  const rvq::ResidualQuantizer& quantizer() const { return quantizer_; }
  rvq::ResidualQuantizer& quantizer() { return quantizer_; }

  EncodeOutput encode(const SeqBatch& mixture, nn::Mode mode);
  /// `skips` may be null; skips are also ignored when the config disables them.
  SeqBatch decode(const Matrix& quantized, const std::vector<SeqBatch>* skips, int batch, nn::Mode mode);

  /// encode, quantize, straight-through, decode and the weighted losses.
  /// With `frozen`, quantization follows FrozenQuantization instead.
  ForwardOutput forward(const TrainingBatch& batch, const LossConfig& loss, nn::Mode mode,
                        const FrozenQuantization* frozen = nullptr);
  /// Accumulates gradients of the last forward's total loss into every
  /// parameter, including the codebooks.
  void backward();
  /// Captures the quantization of the last forward pass.
  FrozenQuantization freeze() const;

  /// Runs k-means depth by depth on the given latent rows. Usage counters
  /// become the cluster populations.
  void init_codebooks(const Matrix& latent_rows, int iters, std::uint64_t seed);

  std::vector<ParamRef> parameters();
  std::vector<BufferRef> buffers();
  void zero_grad();

  // Single-clip conveniences, all in inference mode.
  EncodeOutput encode(const dsp::Waveform& mixture);
  data::StemSet decode(const Matrix& quantized, const std::vector<SeqBatch>* skips);
  CodeGrid encode_codes(const dsp::Waveform& mixture);
  /// Decodes with skips off, the only path available without an encoder pass.
  data::StemSet decode_codes(const CodeGrid& grid);
  /// Mixture in, separated stems out, same length.
  data::StemSet separate(const dsp::Waveform& mixture);

 private:
  void build(std::uint64_t seed);
  void check_mixture(const SeqBatch& mixture) const;
  data::StemSet to_stems(const SeqBatch& out) const;
  SpectralLoss& spectral(const LossConfig& loss);

  CodecConfig config_;
  rvq::ResidualQuantizer quantizer_;
  std::vector<Matrix> codebook_grads_;

  // Encoder.
  nn::Conv1d enc_in_;
  nn::BatchNorm1d enc_in_bn_;
  nn::PReLU enc_in_act_;
  std::vector<nn::Conv1d> enc_down_;
  std::vector<nn::BatchNorm1d> enc_down_bn_;
  std::vector<nn::PReLU> enc_down_act_;
  std::vector<ResidualBlock> enc_res_;
  nn::BiLstm enc_lstm_;

  // Decoder.
  nn::BiLstm dec_lstm_;
  std::vector<ResidualBlock> dec_res_;
  std::vector<nn::ConvTranspose1d> dec_up_;
  std::vector<nn::BatchNorm1d> dec_up_bn_;
  std::vector<nn::PReLU> dec_up_act_;
  std::vector<nn::Conv1d> dec_skip_;
  nn::Conv1d dec_out_;

  // State of the last forward pass.
  struct Cache {
    int batch = 0;
    int length = 0;
    bool used_skips = false;
    Matrix grad_estimates;  // d total / d estimates
    rvq::CommitmentTerms commitment;
    CodeGrid grid;
    FrozenQuantization frozen;
    bool valid = false;
  } cache_;

  // Holds FFTW plans; copies of the model start without one.
  struct SpectralSlot {
    std::unique_ptr<SpectralLoss> loss;
    std::vector<int> scales;
    double alpha = 0.0;
    SpectralSlot() = default;
    SpectralSlot(const SpectralSlot&) {}
    SpectralSlot& operator=(const SpectralSlot&) {
      loss.reset();
      return *this;
    }
  } spectral_;
};

}  // namespace rqsep::codec
