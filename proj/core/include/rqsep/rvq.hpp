// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

// Residual vector quantization: Q codebooks applied in cascade, each one
// quantizing what the previous depths left over.
//
// Latent matrices are positions x channels (one latent frame per row).
// quantize()/dequantize() only read the quantizer and are safe to run
// concurrently; ema_update() and reinit_dead_codes() mutate it and need
// exclusive access.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rqsep/code_grid.hpp"
#include "rqsep/tensor.hpp"

namespace rqsep::rvq {

struct QuantizerConfig {
  int depth = 12;
  int codebook_size = 4096;
  double decay = 0.97;
  double reinit_threshold = 2.0;
  double beta = 0.25;
  // Keep the un-weighted ||z_e - sg[z_q^d]||^2 term of the commitment loss.
  bool commitment_third_term = true;
  int kmeans_iters = 20;
};

struct Codebook {
  Matrix vectors;    // N_cb x D
  Vector ema_usage;  // assignments per batch, exponentially averaged

  int size() const { return static_cast<int>(vectors.rows()); }
  int dim() const { return static_cast<int>(vectors.cols()); }
};

class ResidualQuantizer {
 public:
  ResidualQuantizer() = default;

  /// Gaussian-initialized codebooks (std 1/sqrt(dim)) with usage at the
  /// reinit threshold.
  ResidualQuantizer(const QuantizerConfig& config, int dim, std::uint64_t seed);

  /// Wraps explicit codebooks; all must share the same dimension.
  ResidualQuantizer(const QuantizerConfig& config, std::vector<Codebook> codebooks);

  const QuantizerConfig& config() const { return config_; }
  int depth() const { return static_cast<int>(codebooks_.size()); }
  int dim() const { return dim_; }
  int codebook_size() const { return codebooks_.empty() ? 0 : codebooks_.front().size(); }

  const Codebook& codebook(int d) const { return codebooks_.at(static_cast<std::size_t>(d)); }
  Codebook& codebook(int d) { return codebooks_.at(static_cast<std::size_t>(d)); }

 private:
  QuantizerConfig config_;
  std::vector<Codebook> codebooks_;
  int dim_ = 0;
};

struct Quantization {
  Matrix quantized;               // sum over depths of the chosen vectors
  CodeGrid grid;
  std::vector<Matrix> residuals;  // residuals[d] is the input of depth d (r^{d+1} in 1-based terms)
  std::vector<Matrix> chosen;     // chosen[d] is z_q at depth d
  Matrix final_residual;          // what remains after the last depth
};

/// k-means++ seeding followed by `iters` Lloyd iterations. Usage counts are
/// the final cluster populations.
Codebook kmeans_init(const Matrix& batch, int codebook_size, int iters, std::uint64_t seed);

/// Greedy residual assignment; ties resolve to the lowest index.
Quantization quantize(const Matrix& latent, const ResidualQuantizer& rq);

/// Same bookkeeping as quantize() but with the code assignment given.
Quantization quantize_with_codes(const Matrix& latent, const CodeGrid& grid, const ResidualQuantizer& rq);

/// Nearest codebook row to each row of `x` (ties to the lowest index).
std::vector<int> nearest(const Matrix& x, const Matrix& vectors);

Matrix dequantize(const CodeGrid& grid, const ResidualQuantizer& rq);

/// usage <- decay * usage + (1 - decay) * (assignments in this grid).
void ema_update(ResidualQuantizer& rq, const CodeGrid& grid);

/// Replaces every vector whose usage is below the threshold with a uniformly
/// drawn row of `batch` and resets its usage to the threshold. Returns the
/// number replaced across all depths.
int reinit_dead_codes(ResidualQuantizer& rq, const Matrix& batch, std::uint64_t seed);

/// Variant drawing replacements for depth d from per_depth_batches[d] (the
/// residuals that depth actually sees).
int reinit_dead_codes(ResidualQuantizer& rq, std::span<const Matrix> per_depth_batches, std::uint64_t seed);

struct CommitmentTerms {
  double value = 0.0;
  Matrix grad_encoder;               // d value / d z_e (through z_e^d and the third term)
  std::vector<Matrix> grad_quantized;  // d value / d z_q^d (first term only)
};

/// Sum over depths of ||sg[z_e^d] - z_q^d||^2 + beta ||z_e^d - sg[z_q^d]||^2
/// (+ ||z_e - sg[z_q^d]||^2), with squared norms averaged over positions.
/// z_e^d carries gradient to the encoder output only (the residual recursion
/// subtracts sg[z_q]).
CommitmentTerms commitment_terms(std::span<const Matrix> residuals, std::span<const Matrix> quantized,
                                 const Matrix& encoder_output, double beta, bool third_term);

/// General form where the stop-gradient operands are passed separately:
/// term 1 uses (sg_residuals, live_quantized), terms 2-3 use
/// (live_residuals, sg_quantized). Gradient-checking harnesses freeze the sg
/// operands at a base point; ordinary callers use the overload above.
CommitmentTerms commitment_terms(std::span<const Matrix> sg_residuals, std::span<const Matrix> live_quantized,
                                 std::span<const Matrix> live_residuals, std::span<const Matrix> sg_quantized,
                                 const Matrix& encoder_output, double beta, bool third_term);

double commitment_loss(std::span<const Matrix> residuals, std::span<const Matrix> quantized,
                       const Matrix& encoder_output, double beta, bool third_term = true);

/// Scatters per-position gradients on z_q^d into codebook-row gradients.
void accumulate_codebook_grads(const CodeGrid& grid, std::span<const Matrix> grad_quantized,
                               std::vector<Matrix>& codebook_grads);

/// Forward value of the straight-through estimator: `quantized`, shape-checked
/// against `latent`. Its backward is the identity on the latent.
Matrix straight_through(const Matrix& latent, const Matrix& quantized);
inline const Matrix& straight_through_backward(const Matrix& grad_output) { return grad_output; }

}  // namespace rqsep::rvq
