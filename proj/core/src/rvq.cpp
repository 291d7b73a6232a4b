// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "rqsep/rvq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rqsep/error.hpp"

namespace rqsep::rvq {

ResidualQuantizer::ResidualQuantizer(const QuantizerConfig& config, int dim, std::uint64_t seed)
    : config_(config), dim_(dim) {
  if (config.depth < 1 || config.codebook_size < 1 || config.codebook_size > 65536 || dim < 1) {
    fail(ErrorKind::kConfig, "quantizer needs depth >= 1, 1 <= codebook_size <= 65536 and dim >= 1");
  }
  if (!(config.decay > 0.0 && config.decay < 1.0)) fail(ErrorKind::kConfig, "quantizer decay must lie in (0, 1)");
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  codebooks_.resize(static_cast<std::size_t>(config.depth));
  for (auto& cb : codebooks_) {
    cb.vectors.resize(config.codebook_size, dim);
    for (Index i = 0; i < cb.vectors.size(); ++i) cb.vectors.data()[i] = scale * normal(rng);
    cb.ema_usage = Vector::Constant(config.codebook_size, config.reinit_threshold);
  }
}

ResidualQuantizer::ResidualQuantizer(const QuantizerConfig& config, std::vector<Codebook> codebooks)
    : config_(config), codebooks_(std::move(codebooks)) {
  if (codebooks_.empty()) fail(ErrorKind::kInvalidArgument, "quantizer needs at least one codebook");
  dim_ = codebooks_.front().dim();
  for (const auto& cb : codebooks_) {
    if (cb.dim() != dim_ || cb.size() != codebooks_.front().size()) {
      fail(ErrorKind::kShape, "all codebooks must share size and dimension");
    }
    if (cb.ema_usage.size() != cb.size()) fail(ErrorKind::kShape, "codebook usage vector has the wrong length");
  }
  config_.depth = static_cast<int>(codebooks_.size());
  config_.codebook_size = codebooks_.front().size();
}

std::vector<int> nearest(const Matrix& x, const Matrix& vectors) {
  const Index n = vectors.rows();
  const Vector norms = vectors.rowwise().squaredNorm();
  // ||x - c||^2 = ||x||^2 - 2 x.c + ||c||^2; the row constant is dropped.
  const Matrix scores = (-2.0 * x) * vectors.transpose();
  std::vector<int> best(static_cast<std::size_t>(x.rows()));
  for (Index t = 0; t < x.rows(); ++t) {
    double lo = std::numeric_limits<double>::infinity();
    Index arg = 0;
    for (Index j = 0; j < n; ++j) {
      const double d = scores(t, j) + norms(j);
      if (d < lo) {
        lo = d;
        arg = j;
      }
    }
    // Rounding in the expanded form can reorder near-ties; settle them on
    // exact distances so the lowest index wins.
    const double tol = 1e-12 * (x.row(t).squaredNorm() + norms.maxCoeff() + 1.0);
    double exact = (x.row(t) - vectors.row(arg)).squaredNorm();
    for (Index j = 0; j < n; ++j) {
      if (j == arg || scores(t, j) + norms(j) > lo + tol) continue;
      const double e = (x.row(t) - vectors.row(j)).squaredNorm();
      if (e < exact || (e == exact && j < arg)) {
        exact = e;
        arg = j;
      }
    }
    best[static_cast<std::size_t>(t)] = static_cast<int>(arg);
  }
  return best;
}

Codebook kmeans_init(const Matrix& batch, int codebook_size, int iters, std::uint64_t seed) {
  const Index m = batch.rows();
  if (codebook_size < 1) fail(ErrorKind::kInvalidArgument, "kmeans_init: codebook size must be positive");
  if (m < codebook_size) {
    fail(ErrorKind::kInvalidArgument, "kmeans_init: init batch has " + std::to_string(m) + " rows but the codebook needs " +
                                          std::to_string(codebook_size) + "; enlarge the init batch");
  }
  Rng rng(seed);
  Codebook cb;
  cb.vectors.resize(codebook_size, batch.cols());

  // k-means++ seeding.
  Vector min_dist = Vector::Constant(m, std::numeric_limits<double>::infinity());
  Index pick = static_cast<Index>(uniform_index(rng, static_cast<std::size_t>(m)));
  for (int k = 0; k < codebook_size; ++k) {
    cb.vectors.row(k) = batch.row(pick);
    for (Index i = 0; i < m; ++i) min_dist(i) = std::min(min_dist(i), (batch.row(i) - cb.vectors.row(k)).squaredNorm());
    if (k + 1 == codebook_size) break;
    const double total = min_dist.sum();
    if (total <= 0.0) {
      pick = static_cast<Index>(uniform_index(rng, static_cast<std::size_t>(m)));
      continue;
    }
    double target = uniform01(rng) * total;
    pick = m - 1;
    for (Index i = 0; i < m; ++i) {
      target -= min_dist(i);
      if (target < 0.0 && min_dist(i) > 0.0) {
        pick = i;
        break;
      }
    }
  }

  std::vector<int> assign;
  Vector counts = Vector::Zero(codebook_size);
  for (int it = 0; it <= iters; ++it) {
    assign = nearest(batch, cb.vectors);
    counts.setZero();
    Matrix sums = Matrix::Zero(codebook_size, batch.cols());
    for (Index i = 0; i < m; ++i) {
      const int a = assign[static_cast<std::size_t>(i)];
      counts(a) += 1.0;
      sums.row(a) += batch.row(i);
    }
    if (it == iters) break;
    for (int k = 0; k < codebook_size; ++k) {
      if (counts(k) > 0.0) cb.vectors.row(k) = sums.row(k) / counts(k);
    }
  }
  cb.ema_usage = counts;
  return cb;
}

namespace {

void check_latent(const Matrix& latent, const ResidualQuantizer& rq) {
  if (rq.depth() == 0) fail(ErrorKind::kInvalidArgument, "quantizer has no codebooks");
  if (latent.cols() != rq.dim()) {
    fail(ErrorKind::kShape, "latent has " + std::to_string(latent.cols()) + " channels, quantizer expects " +
                                std::to_string(rq.dim()));
  }
  if (!latent.allFinite()) fail(ErrorKind::kNumeric, "latent contains non-finite values");
}

}  // namespace

Quantization quantize(const Matrix& latent, const ResidualQuantizer& rq) {
  check_latent(latent, rq);
  const auto positions = static_cast<int>(latent.rows());
  Quantization q;
  q.grid = CodeGrid(positions, rq.depth(), rq.codebook_size());
  q.quantized = Matrix::Zero(latent.rows(), latent.cols());
  Matrix residual = latent;
  for (int d = 0; d < rq.depth(); ++d) {
    const Matrix& vectors = rq.codebook(d).vectors;
    const auto codes = nearest(residual, vectors);
    Matrix chosen(latent.rows(), latent.cols());
    for (int t = 0; t < positions; ++t) {
      const int c = codes[static_cast<std::size_t>(t)];
      q.grid.at(t, d) = static_cast<std::uint16_t>(c);
      chosen.row(t) = vectors.row(c);
    }
    q.residuals.push_back(residual);
    residual -= chosen;
    q.quantized += chosen;
    q.chosen.push_back(std::move(chosen));
  }
  q.final_residual = std::move(residual);
  return q;
}

Quantization quantize_with_codes(const Matrix& latent, const CodeGrid& grid, const ResidualQuantizer& rq) {
  check_latent(latent, rq);
  if (grid.positions != latent.rows() || grid.depth != rq.depth()) {
    fail(ErrorKind::kShape, "code grid does not match latent/quantizer shape");
  }
  grid.validate();
  Quantization q;
  q.grid = grid;
  q.quantized = Matrix::Zero(latent.rows(), latent.cols());
  Matrix residual = latent;
  for (int d = 0; d < rq.depth(); ++d) {
    Matrix chosen(latent.rows(), latent.cols());
    for (int t = 0; t < grid.positions; ++t) chosen.row(t) = rq.codebook(d).vectors.row(grid.at(t, d));
    q.residuals.push_back(residual);
    residual -= chosen;
    q.quantized += chosen;
    q.chosen.push_back(std::move(chosen));
  }
  q.final_residual = std::move(residual);
  return q;
}

Matrix dequantize(const CodeGrid& grid, const ResidualQuantizer& rq) {
  if (grid.depth != rq.depth()) {
    fail(ErrorKind::kShape, "code grid depth " + std::to_string(grid.depth) + " does not match quantizer depth " +
                                std::to_string(rq.depth()));
  }
  for (std::size_t i = 0; i < grid.codes.size(); ++i) {
    if (grid.codes[i] >= rq.codebook_size()) {
      fail(ErrorKind::kInvalidArgument, "code index " + std::to_string(grid.codes[i]) + " out of range for codebook size " +
                                            std::to_string(rq.codebook_size()));
    }
  }
  Matrix out = Matrix::Zero(grid.positions, rq.dim());
  for (int t = 0; t < grid.positions; ++t) {
    for (int d = 0; d < grid.depth; ++d) out.row(t) += rq.codebook(d).vectors.row(grid.at(t, d));
  }
  return out;
}

void ema_update(ResidualQuantizer& rq, const CodeGrid& grid) {
  if (grid.depth != rq.depth()) fail(ErrorKind::kShape, "ema_update: grid depth does not match quantizer");
  const double decay = rq.config().decay;
  for (int d = 0; d < rq.depth(); ++d) {
    Vector counts = Vector::Zero(rq.codebook_size());
    for (int t = 0; t < grid.positions; ++t) counts(grid.at(t, d)) += 1.0;
    auto& usage = rq.codebook(d).ema_usage;
    usage = decay * usage + (1.0 - decay) * counts;
  }
}

int reinit_dead_codes(ResidualQuantizer& rq, std::span<const Matrix> per_depth_batches, std::uint64_t seed) {
  if (per_depth_batches.size() != static_cast<std::size_t>(rq.depth())) {
    fail(ErrorKind::kShape, "reinit_dead_codes: need one batch per depth");
  }
  Rng rng(seed);
  const double threshold = rq.config().reinit_threshold;
  int replaced = 0;
  for (int d = 0; d < rq.depth(); ++d) {
    const Matrix& batch = per_depth_batches[static_cast<std::size_t>(d)];
    if (batch.rows() == 0) fail(ErrorKind::kInvalidArgument, "reinit_dead_codes: empty batch");
    if (batch.cols() != rq.dim()) fail(ErrorKind::kShape, "reinit_dead_codes: batch dimension mismatch");
    auto& cb = rq.codebook(d);
    for (int j = 0; j < cb.size(); ++j) {
      if (cb.ema_usage(j) < threshold) {
        cb.vectors.row(j) = batch.row(static_cast<Index>(uniform_index(rng, static_cast<std::size_t>(batch.rows()))));
        cb.ema_usage(j) = threshold;
        ++replaced;
      }
    }
  }
  return replaced;
}

int reinit_dead_codes(ResidualQuantizer& rq, const Matrix& batch, std::uint64_t seed) {
  std::vector<Matrix> batches(static_cast<std::size_t>(rq.depth()), batch);
  return reinit_dead_codes(rq, batches, seed);
}

CommitmentTerms commitment_terms(std::span<const Matrix> sg_residuals, std::span<const Matrix> live_quantized,
                                 std::span<const Matrix> live_residuals, std::span<const Matrix> sg_quantized,
                                 const Matrix& encoder_output, double beta, bool third_term) {
  const std::size_t depth = sg_residuals.size();
  if (live_quantized.size() != depth || live_residuals.size() != depth || sg_quantized.size() != depth) {
    fail(ErrorKind::kShape, "commitment_loss: " + std::to_string(sg_residuals.size()) + " residual depths vs " +
                                std::to_string(live_quantized.size()) + " quantized depths");
  }
  CommitmentTerms out;
  out.grad_encoder = Matrix::Zero(encoder_output.rows(), encoder_output.cols());
  const double inv_n = encoder_output.rows() > 0 ? 1.0 / static_cast<double>(encoder_output.rows()) : 0.0;
  auto same_shape = [&](const Matrix& m) { return m.rows() == encoder_output.rows() && m.cols() == encoder_output.cols(); };
  for (std::size_t d = 0; d < depth; ++d) {
    if (!same_shape(sg_residuals[d]) || !same_shape(live_quantized[d]) || !same_shape(live_residuals[d]) ||
        !same_shape(sg_quantized[d])) {
      fail(ErrorKind::kShape, "commitment_loss: shape mismatch at depth " + std::to_string(d));
    }
    // Term 1 moves the codeword.
    const Matrix codeword_diff = sg_residuals[d] - live_quantized[d];
    out.value += codeword_diff.squaredNorm() * inv_n;
    out.grad_quantized.push_back(-2.0 * inv_n * codeword_diff);
    // Term 2 moves the residualized encoder output.
    const Matrix commit_diff = live_residuals[d] - sg_quantized[d];
    out.value += beta * commit_diff.squaredNorm() * inv_n;
    out.grad_encoder += (2.0 * beta * inv_n) * commit_diff;
    if (third_term) {
      const Matrix full = encoder_output - sg_quantized[d];
      out.value += full.squaredNorm() * inv_n;
      out.grad_encoder += (2.0 * inv_n) * full;
    }
  }
  return out;
}

CommitmentTerms commitment_terms(std::span<const Matrix> residuals, std::span<const Matrix> quantized,
                                 const Matrix& encoder_output, double beta, bool third_term) {
  return commitment_terms(residuals, quantized, residuals, quantized, encoder_output, beta, third_term);
}

double commitment_loss(std::span<const Matrix> residuals, std::span<const Matrix> quantized,
                       const Matrix& encoder_output, double beta, bool third_term) {
  return commitment_terms(residuals, quantized, encoder_output, beta, third_term).value;
}

void accumulate_codebook_grads(const CodeGrid& grid, std::span<const Matrix> grad_quantized,
                               std::vector<Matrix>& codebook_grads) {
  if (grad_quantized.size() != static_cast<std::size_t>(grid.depth) || codebook_grads.size() != grad_quantized.size()) {
    fail(ErrorKind::kShape, "accumulate_codebook_grads: depth mismatch");
  }
  for (int d = 0; d < grid.depth; ++d) {
    const Matrix& g = grad_quantized[static_cast<std::size_t>(d)];
    Matrix& out = codebook_grads[static_cast<std::size_t>(d)];
    for (int t = 0; t < grid.positions; ++t) out.row(grid.at(t, d)) += g.row(t);
  }
}

Matrix straight_through(const Matrix& latent, const Matrix& quantized) {
  if (latent.rows() != quantized.rows() || latent.cols() != quantized.cols()) {
    fail(ErrorKind::kShape, "straight_through: latent and quantized shapes differ");
  }
  return quantized;
}

}  // namespace rqsep::rvq
