// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <span>
#include <vector>

#include "rqsep/data.hpp"
#include "rqsep/dsp.hpp"

namespace rqsep::codec {

inline const std::vector<int>& default_spectral_scales() {
  static const std::vector<int> scales{64, 128, 256, 512, 1024, 2048};
  return scales;
}

// Multi-scale mel loss for one source: for every scale s, the frame-mean of
// ||S_t(x) - S_t(x_hat)||_1 + alpha ||log S_t(x) - log S_t(x_hat)||_2,
// averaged over scales. Window s, hop s/4, 64 mel bins.
class SpectralLoss {
 public:
  SpectralLoss(int sample_rate, std::vector<int> scales = default_spectral_scales(), double alpha = 1.0,
               double eps = dsp::kLogMelEps);

  double value(std::span<const double> target, std::span<const double> estimate) const;

  /// Returns the value and adds d value / d estimate into grad_estimate.
  double value_and_grad(std::span<const double> target, std::span<const double> estimate,
                        std::span<double> grad_estimate) const;

  const std::vector<int>& scales() const { return scales_; }
  int max_scale() const;

 private:
  double evaluate(std::span<const double> target, std::span<const double> estimate, std::span<double>* grad) const;

  std::vector<int> scales_;
  double alpha_;
  double eps_;
  std::vector<std::unique_ptr<dsp::MelAnalyzer>> analyzers_;
};

/// Sum over sources of SpectralLoss. Throws kInvalidArgument if the clips
/// are shorter than the largest scale.
double spectral_loss(const data::StemSet& targets, const data::StemSet& estimates,
                     const std::vector<int>& scales = default_spectral_scales(), double alpha = 1.0);

/// Sum over sources of the per-sample mean squared error.
double reconstruction_loss(const data::StemSet& targets, const data::StemSet& estimates);

}  // namespace rqsep::codec
