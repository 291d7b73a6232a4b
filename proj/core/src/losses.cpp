// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "rqsep/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rqsep/error.hpp"

namespace rqsep::codec {

SpectralLoss::SpectralLoss(int sample_rate, std::vector<int> scales, double alpha, double eps)
    : scales_(std::move(scales)), alpha_(alpha), eps_(eps) {
  if (scales_.empty()) fail(ErrorKind::kConfig, "spectral loss needs at least one scale");
  for (int s : scales_) analyzers_.push_back(std::make_unique<dsp::MelAnalyzer>(sample_rate, s));
}

int SpectralLoss::max_scale() const { return *std::max_element(scales_.begin(), scales_.end()); }

double SpectralLoss::value(std::span<const double> target, std::span<const double> estimate) const {
  return evaluate(target, estimate, nullptr);
}

double SpectralLoss::value_and_grad(std::span<const double> target, std::span<const double> estimate,
                                    std::span<double> grad_estimate) const {
  return evaluate(target, estimate, &grad_estimate);
}

double SpectralLoss::evaluate(std::span<const double> target, std::span<const double> estimate,
                              std::span<double>* grad) const {
  if (target.size() != estimate.size()) fail(ErrorKind::kShape, "spectral loss: target and estimate lengths differ");
  if (target.size() < static_cast<std::size_t>(max_scale())) {
    fail(ErrorKind::kInvalidArgument, "spectral loss: input of " + std::to_string(target.size()) +
                                          " samples is shorter than the largest scale " + std::to_string(max_scale()));
  }
  const double per_scale = 1.0 / static_cast<double>(scales_.size());
  double total = 0.0;
  for (const auto& analyzer : analyzers_) {
    const Matrix a = analyzer->forward(target);
    dsp::ComplexFrames spectra;
    const Matrix b = analyzer->forward(estimate, grad ? &spectra : nullptr);
    const Index frames = a.rows();
    const double w = per_scale / static_cast<double>(frames);

    const Matrix diff = a - b;
    const Matrix log_diff = (a.array().max(eps_).log() - b.array().max(eps_).log()).matrix();
    const Vector log_norm = log_diff.rowwise().norm();
    total += w * (diff.cwiseAbs().sum() + alpha_ * log_norm.sum());

    if (grad) {
      const Vector row_scale = log_norm.unaryExpr([this](double n) { return n > 0.0 ? -alpha_ / n : 0.0; });
      const auto log_term = (b.array() > eps_).select(log_diff.array() / b.array(), 0.0);
      const Matrix g = w * (log_term.colwise() * row_scale.array() - diff.array().sign()).matrix();
      analyzer->backward(spectra, g, *grad);
    }
  }
  return total;
}

namespace {

void check_pair(const data::StemSet& targets, const data::StemSet& estimates) {
  if (targets.size() != estimates.size()) fail(ErrorKind::kShape, "targets and estimates have different source counts");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets.stems[i].size() != estimates.stems[i].size()) {
      fail(ErrorKind::kShape, "source " + std::to_string(i) + ": target and estimate lengths differ");
    }
  }
}

}  // namespace

double spectral_loss(const data::StemSet& targets, const data::StemSet& estimates, const std::vector<int>& scales,
                     double alpha) {
  check_pair(targets, estimates);
  if (targets.size() == 0) return 0.0;
  const SpectralLoss loss(targets.stems.front().sample_rate, scales, alpha);
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) total += loss.value(targets.stems[i].samples, estimates.stems[i].samples);
  return total;
}

double reconstruction_loss(const data::StemSet& targets, const data::StemSet& estimates) {
  check_pair(targets, estimates);
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& x = targets.stems[i].samples;
    const auto& y = estimates.stems[i].samples;
    if (x.empty()) continue;
    double acc = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) acc += (x[t] - y[t]) * (x[t] - y[t]);
    total += acc / static_cast<double>(x.size());
  }
  return total;
}

}  // namespace rqsep::codec
