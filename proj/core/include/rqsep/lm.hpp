// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

// Autoregressive prior over code grids. A spatial transformer runs over
// latent positions and summarizes the codes before position t into a
// context vector u_t; a depth transformer then predicts the Q codes of
// position t one depth at a time.
//
// Token (t, d) of a grid maps to column t*Q + d of a logits matrix
// (n_cb rows).

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "rqsep/code_grid.hpp"
#include "rqsep/transformer.hpp"

namespace rqsep::lm {

struct LMConfig {
  int n_cb = 4096;
  int q_depth = 12;
  int model_dim = 256;
  int spatial_layers = 8;
  int depth_layers = 4;
  int heads = 4;
  int max_positions = 512;
  double temperature = 1.0;
  int top_k = 64;

  /// Throws kConfig naming the first violated field.
  void validate() const;
};

class LMModel {
 public:
  LMModel() = default;
  LMModel(const LMConfig& config, std::uint64_t seed);

  const LMConfig& config() const { return config_; }

  /// Teacher-forced logits, n_cb x (T*Q).
  Matrix logits(const CodeGrid& grid);
  /// Mean negative log-likelihood in nats per token.
  double nll(const CodeGrid& grid);
  /// Mean NLL over all tokens of all grids; accumulates its gradient.
  double nll_and_grad(const std::vector<CodeGrid>& grids);

  /// Context vector for the next position after `prefix` (which may have
  /// zero positions).
  Vector context(const CodeGrid& prefix);
  /// Logits for depth `codes.size()` given the context vector and the codes
  /// already chosen at this position.
  Vector depth_logits(const Vector& context, const std::vector<int>& codes);

  std::vector<ParamRef> parameters();
  void zero_grad();
  nn::Linear& head() { return head_; }

 private:
  void check_grid(const CodeGrid& grid) const;
  Matrix spatial_input(const CodeGrid& grid) const;
  Matrix depth_input(const CodeGrid& grid, const Matrix& context) const;

  LMConfig config_;
  std::vector<Matrix> embed_, grad_embed_;  // per depth: model_dim x n_cb
  Matrix pos_, grad_pos_;                   // model_dim x max_positions
  Matrix depth_pos_, grad_depth_pos_;       // model_dim x q_depth
  Matrix start_, grad_start_;               // model_dim x 1
  nn::Transformer spatial_, depth_;
  nn::Linear head_;
};

/// Autoregressive sampling. temperature 0 picks the argmax; otherwise
/// sampling is restricted to the top_k most likely codes (0 = all).
CodeGrid generate(LMModel& model, int n_positions, std::uint64_t seed, double temperature, int top_k);

struct CausalViolation {
  int t = 0, d = 0;                      // logit coordinate that changed
  int perturbed_t = 0, perturbed_d = 0;  // code that was changed
};

struct CausalReport {
  std::vector<CausalViolation> violations;  // ordered by (perturbed_t, perturbed_d, t, d)
  bool ok() const { return violations.empty(); }
};

using LogitsFn = std::function<Matrix(const CodeGrid&)>;

/// Perturbs every code in turn and records each logit (t, d) that moved
/// although it should not see the perturbed code: codes at later positions,
/// or at the same position and depth >= d.
CausalReport causal_consistency_check(const LogitsFn& logits, const CodeGrid& grid);
CausalReport causal_consistency_check(LMModel& model, const CodeGrid& grid);

}  // namespace rqsep::lm
