// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "rqsep/adam.hpp"

#include <cmath>

#include "rqsep/error.hpp"

namespace rqsep::train {

double global_grad_norm(const std::vector<ParamRef>& params) {
  double acc = 0.0;
  for (const auto& p : params) acc += p.grad->squaredNorm();
  return std::sqrt(acc);
}

double Adam::step(const std::vector<ParamRef>& params) {
  const double norm = global_grad_norm(params);
  if (!std::isfinite(norm)) fail(ErrorKind::kNumeric, "non-finite gradient norm");
  const double scale = (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  const double lr = config_.learning_rate;
  for (const auto& p : params) {
    Matrix& m = m_[p.name];
    Matrix& v = v_[p.name];
    if (m.size() == 0) {
      m = Matrix::Zero(p.value->rows(), p.value->cols());
      v = Matrix::Zero(p.value->rows(), p.value->cols());
    }
    if (m.rows() != p.value->rows() || m.cols() != p.value->cols()) {
      fail(ErrorKind::kShape, "optimizer state for " + p.name + " has the wrong shape");
    }
    const auto g = (scale * p.grad->array()).eval();
    m.array() = config_.beta1 * m.array() + (1.0 - config_.beta1) * g;
    v.array() = config_.beta2 * v.array() + (1.0 - config_.beta2) * g.square();
    p.value->array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + config_.eps);
  }
  return norm;
}

std::map<std::string, Matrix> Adam::state() const {
  std::map<std::string, Matrix> out;
  for (const auto& [name, m] : m_) out["adam.m." + name] = m;
  for (const auto& [name, v] : v_) out["adam.v." + name] = v;
  return out;
}

void Adam::load_state(const std::map<std::string, Matrix>& arrays, long long steps) {
  m_.clear();
  v_.clear();
  for (const auto& [name, value] : arrays) {
    if (name.rfind("adam.m.", 0) == 0) m_[name.substr(7)] = value;
    if (name.rfind("adam.v.", 0) == 0) v_[name.substr(7)] = value;
  }
  steps_ = steps;
}

}  // namespace rqsep::train
