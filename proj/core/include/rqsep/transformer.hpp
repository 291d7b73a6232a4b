// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "rqsep/nn.hpp"

namespace rqsep::nn {

// Multi-head causal self-attention over packed sequences: the input holds
// `n_seq` sequences of `seq_len` columns each, back to back.
class CausalSelfAttention {
 public:
  CausalSelfAttention() = default;
  CausalSelfAttention(std::string name, int dim, int heads, Rng& rng);

  Matrix forward(const Matrix& x, int n_seq, int seq_len);
  Matrix backward(const Matrix& grad_out);
  void collect(std::vector<ParamRef>& out);

 private:
  int dim_ = 0, heads_ = 1;
  int n_seq_ = 0, seq_len_ = 0;
  Linear qkv_, proj_;
  Matrix qkv_out_;
  std::vector<Matrix> probs_;  // per (sequence, head): keys x queries
};

// Pre-norm block: x + attn(ln1(x)), then + mlp(ln2(.)).
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(std::string name, int dim, int heads, Rng& rng);

  Matrix forward(const Matrix& x, int n_seq, int seq_len);
  Matrix backward(const Matrix& grad_out);
  void collect(std::vector<ParamRef>& out);

 private:
  LayerNorm ln1_, ln2_;
  CausalSelfAttention attn_;
  Linear fc1_, fc2_;
  Gelu act_;
};

class Transformer {
 public:
  Transformer() = default;
  Transformer(std::string name, int dim, int heads, int layers, Rng& rng);

  Matrix forward(const Matrix& x, int n_seq, int seq_len);
  Matrix backward(const Matrix& grad_out);
  void collect(std::vector<ParamRef>& out);

 private:
  std::vector<TransformerBlock> blocks_;
  LayerNorm final_ln_;
};

}  // namespace rqsep::nn
