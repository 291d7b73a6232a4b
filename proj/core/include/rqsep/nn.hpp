// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal layer library with explicit backward passes. Every layer caches
// what its backward needs during forward(); one forward is matched by at
// most one backward. Gradients accumulate until zero_grad().

#pragma once

#include <string>
#include <vector>

#include "rqsep/tensor.hpp"

namespace rqsep::nn {

enum class Mode { kTrain, kEval };

// Gathers columns im2col-style: output column t holds input columns
// t*stride + j - pad_left for j in [0, kernel), stacked kernel-major
// (row j*C + c). Out-of-range taps read zero.
Matrix im2col(const SeqBatch& x, int kernel, int stride, int pad_left, int out_length);

// Adjoint of im2col: scatter-adds back into a batch of the given length.
SeqBatch col2im(const Matrix& cols, int batch, int channels, int kernel, int stride, int pad_left,
                int in_length, int length);

// Strided 1-D convolution padded with kernel-stride zeros (left gets the
// smaller half), so that an input of length L*stride yields exactly L frames.
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(std::string name, int in_channels, int out_channels, int kernel, int stride, bool bias, Rng& rng);

  SeqBatch forward(const SeqBatch& x);
  SeqBatch backward(const SeqBatch& grad_out);
  void collect(std::vector<ParamRef>& out);

  int kernel() const { return kernel_; }
  int stride() const { return stride_; }
  int pad_left() const { return pad_left_; }

  Matrix weight, bias, grad_weight, grad_bias;

 private:
  std::string name_;
  int in_ = 0, out_ = 0, kernel_ = 1, stride_ = 1, pad_left_ = 0;
  bool has_bias_ = true;
  Matrix cols_;
  int in_length_ = 0, batch_ = 0;
};

// Transposed convolution mirroring Conv1d's padding: L frames become
// exactly L*stride samples (the full (L-1)*stride + kernel output is
// cropped by pad_left on the left and the remainder on the right).
class ConvTranspose1d {
 public:
  ConvTranspose1d() = default;
  ConvTranspose1d(std::string name, int in_channels, int out_channels, int kernel, int stride, bool bias, Rng& rng);

  SeqBatch forward(const SeqBatch& x);
  SeqBatch backward(const SeqBatch& grad_out);
  void collect(std::vector<ParamRef>& out);

  Matrix weight, bias, grad_weight, grad_bias;

 private:
  std::string name_;
  int in_ = 0, out_ = 0, kernel_ = 1, stride_ = 1, pad_left_ = 0;
  Matrix input_;
  int batch_ = 0;
  bool has_bias_ = true;
};

class BatchNorm1d {
 public:
  BatchNorm1d() = default;
  BatchNorm1d(std::string name, int channels, double momentum = 0.1, double eps = 1e-5);

  SeqBatch forward(const SeqBatch& x, Mode mode);
  SeqBatch backward(const SeqBatch& grad_out);
  void collect(std::vector<ParamRef>& out);
  void collect_buffers(std::vector<BufferRef>& out);

  Matrix gamma, beta, grad_gamma, grad_beta;
  Matrix running_mean, running_var;

 private:
  std::string name_;
  double momentum_ = 0.1, eps_ = 1e-5;
  Mode mode_ = Mode::kTrain;
  Matrix xhat_;
  Vector inv_std_;
};

// Single learnable negative slope shared by all channels.
class PReLU {
 public:
  PReLU() = default;
  explicit PReLU(std::string name, double init = 0.25);

  SeqBatch forward(const SeqBatch& x);
  SeqBatch backward(const SeqBatch& grad_out);
  void collect(std::vector<ParamRef>& out);

  Matrix alpha, grad_alpha;

 private:
  std::string name_;
  Matrix input_;
};

class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in_features, int out_features, Rng& rng, bool bias = true);

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& grad_out);
  void collect(std::vector<ParamRef>& out);

  Matrix weight, bias, grad_weight, grad_bias;

 private:
  std::string name_;
  bool has_bias_ = true;
  Matrix input_;
};

// Normalizes each column.
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(std::string name, int features, double eps = 1e-5);

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& grad_out);
  void collect(std::vector<ParamRef>& out);

  Matrix gamma, beta, grad_gamma, grad_beta;

 private:
  std::string name_;
  double eps_ = 1e-5;
  Matrix xhat_;
  Vector inv_std_;
};

// tanh approximation.
class Gelu {
 public:
  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& grad_out);

 private:
  Matrix input_;
};

// Column permutations between batch-major (b*T + t) and time-major
// (t*B + b) layouts.
Matrix to_time_major(const Matrix& x, int batch);
Matrix to_batch_major(const Matrix& x, int batch);

void zero_grads(const std::vector<ParamRef>& params);

}  // namespace rqsep::nn
