// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "rqsep/lstm.hpp"

#include <cmath>

#include "rqsep/error.hpp"

namespace rqsep::nn {
namespace {

template <typename Block>
void sigmoid_inplace(Block&& b) {
  b = (1.0 + (-b.array()).exp()).inverse().matrix();
}

// Double tanh is not vectorized by Eigen; exp is.
template <typename Block>
void tanh_inplace(Block&& b) {
  b = (2.0 * (1.0 + (-2.0 * b.array()).exp()).inverse() - 1.0).matrix();
}

}  // namespace

Lstm::Lstm(std::string name, int input_size, int hidden_size, Rng& rng) : name_(std::move(name)), hidden_(hidden_size) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
  auto fill = [&](Matrix& m, Index rows, Index cols) {
    m.resize(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = bound * (2.0 * uniform01(rng) - 1.0);
  };
  fill(w_ih, 4 * hidden_size, input_size);
  fill(w_hh, 4 * hidden_size, hidden_size);
  fill(bias, 4 * hidden_size, 1);
  bias.block(hidden_size, 0, hidden_size, 1).array() += 1.0;  // forget gate starts open
  grad_w_ih = Matrix::Zero(w_ih.rows(), w_ih.cols());
  grad_w_hh = Matrix::Zero(w_hh.rows(), w_hh.cols());
  grad_bias = Matrix::Zero(bias.rows(), 1);
}

Matrix Lstm::forward(const Matrix& x, int batch, bool reverse) {
  if (x.rows() != w_ih.cols()) fail(ErrorKind::kShape, name_ + ": input size mismatch");
  const int h = hidden_;
  const auto steps = static_cast<int>(x.cols()) / batch;
  batch_ = batch;
  reverse_ = reverse;
  input_ = x;
  gates_ = w_ih * x;
  gates_.colwise() += bias.col(0);
  cells_.resize(h, x.cols());
  tanh_cells_.resize(h, x.cols());
  hidden_states_.resize(h, x.cols());

  Matrix h_prev = Matrix::Zero(h, batch);
  Matrix c_prev = Matrix::Zero(h, batch);
  for (int s = 0; s < steps; ++s) {
    const int t = reverse ? steps - 1 - s : s;
    auto g = gates_.middleCols(static_cast<Index>(t) * batch, batch);
    g.noalias() += w_hh * h_prev;
    sigmoid_inplace(g.topRows(2 * h));
    tanh_inplace(g.middleRows(2 * h, h));
    sigmoid_inplace(g.bottomRows(h));
    auto c = cells_.middleCols(static_cast<Index>(t) * batch, batch);
    c = g.middleRows(h, h).cwiseProduct(c_prev) + g.topRows(h).cwiseProduct(g.middleRows(2 * h, h));
    auto tc = tanh_cells_.middleCols(static_cast<Index>(t) * batch, batch);
    tc = c;
    tanh_inplace(tc);
    auto hs = hidden_states_.middleCols(static_cast<Index>(t) * batch, batch);
    hs = g.bottomRows(h).cwiseProduct(tc);
    h_prev = hs;
    c_prev = c;
  }
  return hidden_states_;
}

Matrix Lstm::backward(const Matrix& grad_out) {
  const int h = hidden_;
  const int batch = batch_;
  const auto steps = static_cast<int>(grad_out.cols()) / batch;
  Matrix d_gates(4 * h, grad_out.cols());
  Matrix dh_next = Matrix::Zero(h, batch);
  Matrix dc_next = Matrix::Zero(h, batch);
  for (int s = steps - 1; s >= 0; --s) {
    const int t = reverse_ ? steps - 1 - s : s;
    const int t_prev = reverse_ ? t + 1 : t - 1;
    const bool has_prev = s > 0;
    const auto cols = static_cast<Index>(t) * batch;
    const auto g = gates_.middleCols(cols, batch);
    const auto i = g.topRows(h).array();
    const auto f = g.middleRows(h, h).array();
    const auto gg = g.middleRows(2 * h, h).array();
    const auto o = g.bottomRows(h).array();
    const auto tc = tanh_cells_.middleCols(cols, batch).array();

    const Matrix dh = grad_out.middleCols(cols, batch) + dh_next;
    const Matrix dc = (dh.array() * o * (1.0 - tc.square())).matrix() + dc_next;
    auto dg = d_gates.middleCols(cols, batch);
    dg.topRows(h) = (dc.array() * gg * i * (1.0 - i)).matrix();
    if (has_prev) {
      const auto c_prev = cells_.middleCols(static_cast<Index>(t_prev) * batch, batch).array();
      dg.middleRows(h, h) = (dc.array() * c_prev * f * (1.0 - f)).matrix();
    } else {
      dg.middleRows(h, h).setZero();
    }
    dg.middleRows(2 * h, h) = (dc.array() * i * (1.0 - gg.square())).matrix();
    dg.bottomRows(h) = (dh.array() * tc * o * (1.0 - o)).matrix();

    dc_next = dc.cwiseProduct(g.middleRows(h, h));
    dh_next.noalias() = w_hh.transpose() * dg;
    if (has_prev) grad_w_hh.noalias() += dg * hidden_states_.middleCols(static_cast<Index>(t_prev) * batch, batch).transpose();
  }
  grad_w_ih.noalias() += d_gates * input_.transpose();
  grad_bias.col(0) += d_gates.rowwise().sum();
  return w_ih.transpose() * d_gates;
}

void Lstm::collect(std::vector<ParamRef>& out) {
  out.push_back({name_ + ".w_ih", &w_ih, &grad_w_ih});
  out.push_back({name_ + ".w_hh", &w_hh, &grad_w_hh});
  out.push_back({name_ + ".bias", &bias, &grad_bias});
}

BiLstm::BiLstm(std::string name, int input_size, int hidden_size, int layers, Rng& rng) : hidden_(hidden_size) {
  for (int l = 0; l < layers; ++l) {
    const int in = l == 0 ? input_size : 2 * hidden_size;
    forward_dir_.emplace_back(name + ".l" + std::to_string(l) + ".fwd", in, hidden_size, rng);
    backward_dir_.emplace_back(name + ".l" + std::to_string(l) + ".bwd", in, hidden_size, rng);
  }
}

SeqBatch BiLstm::forward(const SeqBatch& x) {
  batch_ = x.batch;
  Matrix h = to_time_major(x.data, x.batch);
  for (std::size_t l = 0; l < forward_dir_.size(); ++l) {
    Matrix next(2 * hidden_, h.cols());
    next.topRows(hidden_) = forward_dir_[l].forward(h, x.batch, false);
    next.bottomRows(hidden_) = backward_dir_[l].forward(h, x.batch, true);
    h = std::move(next);
  }
  return SeqBatch(to_batch_major(h, x.batch), x.batch);
}

SeqBatch BiLstm::backward(const SeqBatch& grad_out) {
  Matrix g = to_time_major(grad_out.data, batch_);
  for (std::size_t l = forward_dir_.size(); l-- > 0;) {
    Matrix prev = forward_dir_[l].backward(g.topRows(hidden_));
    prev += backward_dir_[l].backward(g.bottomRows(hidden_));
    g = std::move(prev);
  }
  return SeqBatch(to_batch_major(g, batch_), batch_);
}

void BiLstm::collect(std::vector<ParamRef>& out) {
  for (std::size_t l = 0; l < forward_dir_.size(); ++l) {
    forward_dir_[l].collect(out);
    backward_dir_[l].collect(out);
  }
}

}  // namespace rqsep::nn
