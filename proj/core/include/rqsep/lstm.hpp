// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "rqsep/nn.hpp"

namespace rqsep::nn {

// Single-direction LSTM over time-major input (column t*B + b). Gate order
// in the stacked weights is input, forget, cell, output.
class Lstm {
 public:
  Lstm() = default;
  Lstm(std::string name, int input_size, int hidden_size, Rng& rng);

  Matrix forward(const Matrix& x, int batch, bool reverse);
  Matrix backward(const Matrix& grad_out);
  void collect(std::vector<ParamRef>& out);

  Matrix w_ih, w_hh, bias, grad_w_ih, grad_w_hh, grad_bias;

 private:
  std::string name_;
  int hidden_ = 0;
  int batch_ = 0;
  bool reverse_ = false;
  Matrix input_;
  Matrix gates_;  // activated i, f, g, o per step (4H x T*B)
  Matrix cells_;  // c_t (H x T*B)
  Matrix tanh_cells_;
  Matrix hidden_states_;
};

// Stack of bidirectional layers over batch-major sequences; each layer
// concatenates forward and backward hidden states (2 * hidden channels).
class BiLstm {
 public:
  BiLstm() = default;
  BiLstm(std::string name, int input_size, int hidden_size, int layers, Rng& rng);

  SeqBatch forward(const SeqBatch& x);
  SeqBatch backward(const SeqBatch& grad_out);
  void collect(std::vector<ParamRef>& out);

  int output_size() const { return 2 * hidden_; }

 private:
  int hidden_ = 0;
  std::vector<Lstm> forward_dir_;
  std::vector<Lstm> backward_dir_;
  int batch_ = 0;
};

}  // namespace rqsep::nn
