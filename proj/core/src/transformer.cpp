// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "rqsep/transformer.hpp"

#include <cmath>
#include <limits>

#include "rqsep/error.hpp"

namespace rqsep::nn {

CausalSelfAttention::CausalSelfAttention(std::string name, int dim, int heads, Rng& rng)
    : dim_(dim),
      heads_(heads),
      qkv_(name + ".qkv", dim, 3 * dim, rng),
      proj_(name + ".proj", dim, dim, rng) {
  if (heads < 1 || dim % heads != 0) fail(ErrorKind::kConfig, name + ": dim must be divisible by heads");
}

Matrix CausalSelfAttention::forward(const Matrix& x, int n_seq, int seq_len) {
  n_seq_ = n_seq;
  seq_len_ = seq_len;
  const int hd = dim_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  qkv_out_ = qkv_.forward(x);
  probs_.assign(static_cast<std::size_t>(n_seq) * heads_, Matrix());
  Matrix out(dim_, x.cols());
  for (int s = 0; s < n_seq; ++s) {
    const auto c0 = static_cast<Index>(s) * seq_len;
    for (int h = 0; h < heads_; ++h) {
      const auto q = qkv_out_.block(static_cast<Index>(h) * hd, c0, hd, seq_len);
      const auto k = qkv_out_.block(dim_ + static_cast<Index>(h) * hd, c0, hd, seq_len);
      const auto v = qkv_out_.block(2 * dim_ + static_cast<Index>(h) * hd, c0, hd, seq_len);
      Matrix p = scale * (k.transpose() * q);  // keys x queries
      for (int qi = 0; qi < seq_len; ++qi) {
        auto col = p.col(qi);
        const double mx = col.head(qi + 1).maxCoeff();
        double sum = 0.0;
        for (int ki = 0; ki <= qi; ++ki) {
          col(ki) = std::exp(col(ki) - mx);
          sum += col(ki);
        }
        col.head(qi + 1) /= sum;
        col.tail(seq_len - qi - 1).setZero();
      }
      out.block(static_cast<Index>(h) * hd, c0, hd, seq_len).noalias() = v * p;
      probs_[static_cast<std::size_t>(s) * heads_ + h] = std::move(p);
    }
  }
  return proj_.forward(out);
}

Matrix CausalSelfAttention::backward(const Matrix& grad_out) {
  const Matrix d_att = proj_.backward(grad_out);
  const int hd = dim_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Matrix d_qkv(3 * dim_, d_att.cols());
  for (int s = 0; s < n_seq_; ++s) {
    const auto c0 = static_cast<Index>(s) * seq_len_;
    for (int h = 0; h < heads_; ++h) {
      const Matrix& p = probs_[static_cast<std::size_t>(s) * heads_ + h];
      const auto q = qkv_out_.block(static_cast<Index>(h) * hd, c0, hd, seq_len_);
      const auto k = qkv_out_.block(dim_ + static_cast<Index>(h) * hd, c0, hd, seq_len_);
      const auto v = qkv_out_.block(2 * dim_ + static_cast<Index>(h) * hd, c0, hd, seq_len_);
      const auto d_o = d_att.block(static_cast<Index>(h) * hd, c0, hd, seq_len_);

      d_qkv.block(2 * dim_ + static_cast<Index>(h) * hd, c0, hd, seq_len_).noalias() = d_o * p.transpose();
      const Matrix dp = v.transpose() * d_o;  // keys x queries
      const Eigen::RowVectorXd inner = (dp.array() * p.array()).colwise().sum();
      const Matrix ds = scale * (p.array() * (dp.array().rowwise() - inner.array())).matrix();
      d_qkv.block(static_cast<Index>(h) * hd, c0, hd, seq_len_).noalias() = k * ds;
      d_qkv.block(dim_ + static_cast<Index>(h) * hd, c0, hd, seq_len_).noalias() = q * ds.transpose();
    }
  }
  return qkv_.backward(d_qkv);
}

void CausalSelfAttention::collect(std::vector<ParamRef>& out) {
  qkv_.collect(out);
  proj_.collect(out);
}

TransformerBlock::TransformerBlock(std::string name, int dim, int heads, Rng& rng)
    : ln1_(name + ".ln1", dim),
      ln2_(name + ".ln2", dim),
      attn_(name + ".attn", dim, heads, rng),
      fc1_(name + ".fc1", dim, 4 * dim, rng),
      fc2_(name + ".fc2", 4 * dim, dim, rng) {}

Matrix TransformerBlock::forward(const Matrix& x, int n_seq, int seq_len) {
  Matrix h = x + attn_.forward(ln1_.forward(x), n_seq, seq_len);
  return h + fc2_.forward(act_.forward(fc1_.forward(ln2_.forward(h))));
}

Matrix TransformerBlock::backward(const Matrix& grad_out) {
  Matrix g = grad_out + ln2_.backward(fc1_.backward(act_.backward(fc2_.backward(grad_out))));
  return g + ln1_.backward(attn_.backward(g));
}

void TransformerBlock::collect(std::vector<ParamRef>& out) {
  ln1_.collect(out);
  attn_.collect(out);
  ln2_.collect(out);
  fc1_.collect(out);
  fc2_.collect(out);
}

Transformer::Transformer(std::string name, int dim, int heads, int layers, Rng& rng) : final_ln_(name + ".ln_f", dim) {
  for (int l = 0; l < layers; ++l) blocks_.emplace_back(name + ".block" + std::to_string(l), dim, heads, rng);
}

Matrix Transformer::forward(const Matrix& x, int n_seq, int seq_len) {
  Matrix h = x;
  for (auto& b : blocks_) h = b.forward(h, n_seq, seq_len);
  return final_ln_.forward(h);
}

Matrix Transformer::backward(const Matrix& grad_out) {
  Matrix g = final_ln_.backward(grad_out);
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
  return g;
}

void Transformer::collect(std::vector<ParamRef>& out) {
  for (auto& b : blocks_) b.collect(out);
  final_ln_.collect(out);
}

}  // namespace rqsep::nn
