// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "rqsep/tensor.hpp"

namespace rqsep::train {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // global gradient norm; <= 0 disables clipping
};

double global_grad_norm(const std::vector<ParamRef>& params);

/// Adam with bias correction and optional global-norm clipping. Moments are
/// keyed by parameter name.
class Adam {
 public:
  Adam() = default;
  explicit Adam(const AdamConfig& config) : config_(config) {}

  /// Clips, then updates every parameter in place. Returns the pre-clip norm.
  double step(const std::vector<ParamRef>& params);

  long long steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  /// Moments as named arrays ("adam.m.<param>", "adam.v.<param>").
  std::map<std::string, Matrix> state() const;
  void load_state(const std::map<std::string, Matrix>& arrays, long long steps);

 private:
  AdamConfig config_;
  long long steps_ = 0;
  std::map<std::string, Matrix> m_, v_;
};

}  // namespace rqsep::train
