// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "rqsep/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "rqsep/error.hpp"

namespace rqsep::nn {
namespace {

void uniform_fill(Matrix& m, double bound, Rng& rng) {
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = bound * (2.0 * uniform01(rng) - 1.0);
}

}  // namespace

Matrix im2col(const SeqBatch& x, int kernel, int stride, int pad_left, int out_length) {
  const int c = x.channels();
  const int len = x.length();
  Matrix cols(static_cast<Index>(kernel) * c, static_cast<Index>(x.batch) * out_length);
  for (int b = 0; b < x.batch; ++b) {
    for (int t = 0; t < out_length; ++t) {
      double* dst = cols.col(static_cast<Index>(b) * out_length + t).data();
      for (int j = 0; j < kernel; ++j) {
        const int src = t * stride + j - pad_left;
        if (src >= 0 && src < len) {
          std::memcpy(dst + static_cast<std::ptrdiff_t>(j) * c, x.data.col(static_cast<Index>(b) * len + src).data(),
                      sizeof(double) * static_cast<std::size_t>(c));
        } else {
          std::memset(dst + static_cast<std::ptrdiff_t>(j) * c, 0, sizeof(double) * static_cast<std::size_t>(c));
        }
      }
    }
  }
  return cols;
}

SeqBatch col2im(const Matrix& cols, int batch, int channels, int kernel, int stride, int pad_left, int in_length,
                int length) {
  SeqBatch out(Matrix::Zero(channels, static_cast<Index>(batch) * length), batch);
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < in_length; ++t) {
      const double* src = cols.col(static_cast<Index>(b) * in_length + t).data();
      for (int j = 0; j < kernel; ++j) {
        const int dst = t * stride + j - pad_left;
        if (dst < 0 || dst >= length) continue;
        double* d = out.data.col(static_cast<Index>(b) * length + dst).data();
        const double* s = src + static_cast<std::ptrdiff_t>(j) * channels;
        for (int ch = 0; ch < channels; ++ch) d[ch] += s[ch];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Conv1d::Conv1d(std::string name, int in_channels, int out_channels, int kernel, int stride, bool bias, Rng& rng)
    : name_(std::move(name)),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_left_((kernel - stride) / 2),
      has_bias_(bias) {
  if (kernel < stride || stride < 1) fail(ErrorKind::kConfig, name_ + ": kernel must be >= stride >= 1");
  weight.resize(out_, static_cast<Index>(kernel_) * in_);
  uniform_fill(weight, 1.0 / std::sqrt(static_cast<double>(in_ * kernel_)), rng);
  this->bias = Matrix::Zero(out_, 1);
  if (has_bias_) uniform_fill(this->bias, 1.0 / std::sqrt(static_cast<double>(in_ * kernel_)), rng);
  grad_weight = Matrix::Zero(weight.rows(), weight.cols());
  grad_bias = Matrix::Zero(out_, 1);
}

SeqBatch Conv1d::forward(const SeqBatch& x) {
  if (x.channels() != in_) {
    fail(ErrorKind::kShape, name_ + ": expected " + std::to_string(in_) + " input channels, got " + std::to_string(x.channels()));
  }
  const int len = x.length();
  if (len % stride_ != 0) {
    fail(ErrorKind::kShape, name_ + ": input length " + std::to_string(len) + " not divisible by stride " + std::to_string(stride_));
  }
  const int out_len = len / stride_;
  in_length_ = len;
  batch_ = x.batch;
  cols_ = im2col(x, kernel_, stride_, pad_left_, out_len);
  Matrix y = weight * cols_;
  if (has_bias_) y.colwise() += bias.col(0);
  return SeqBatch(std::move(y), x.batch);
}

SeqBatch Conv1d::backward(const SeqBatch& grad_out) {
  grad_weight.noalias() += grad_out.data * cols_.transpose();
  if (has_bias_) grad_bias.col(0) += grad_out.data.rowwise().sum();
  const Matrix gcols = weight.transpose() * grad_out.data;
  return col2im(gcols, batch_, in_, kernel_, stride_, pad_left_, grad_out.length(), in_length_);
}

void Conv1d::collect(std::vector<ParamRef>& out) {
  out.push_back({name_ + ".weight", &weight, &grad_weight});
  if (has_bias_) out.push_back({name_ + ".bias", &bias, &grad_bias});
}

// ---------------------------------------------------------------------------

ConvTranspose1d::ConvTranspose1d(std::string name, int in_channels, int out_channels, int kernel, int stride, bool bias,
                                 Rng& rng)
    : name_(std::move(name)),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_left_((kernel - stride) / 2),
      has_bias_(bias) {
  if (kernel < stride || stride < 1) fail(ErrorKind::kConfig, name_ + ": kernel must be >= stride >= 1");
  weight.resize(static_cast<Index>(kernel_) * out_, in_);
  const double fan_in = static_cast<double>(in_) * std::max(1, kernel_ / stride_);
  uniform_fill(weight, 1.0 / std::sqrt(fan_in), rng);
  this->bias = Matrix::Zero(out_, 1);
  if (has_bias_) uniform_fill(this->bias, 1.0 / std::sqrt(fan_in), rng);
  grad_weight = Matrix::Zero(weight.rows(), weight.cols());
  grad_bias = Matrix::Zero(out_, 1);
}

SeqBatch ConvTranspose1d::forward(const SeqBatch& x) {
  if (x.channels() != in_) {
    fail(ErrorKind::kShape, name_ + ": expected " + std::to_string(in_) + " input channels, got " + std::to_string(x.channels()));
  }
  input_ = x.data;
  batch_ = x.batch;
  const int len = x.length();
  const Matrix cols = weight * x.data;
  SeqBatch y = col2im(cols, x.batch, out_, kernel_, stride_, pad_left_, len, len * stride_);
  if (has_bias_) y.data.colwise() += bias.col(0);
  return y;
}

SeqBatch ConvTranspose1d::backward(const SeqBatch& grad_out) {
  const int len = grad_out.length() / stride_;
  const Matrix gcols = im2col(grad_out, kernel_, stride_, pad_left_, len);
  grad_weight.noalias() += gcols * input_.transpose();
  if (has_bias_) grad_bias.col(0) += grad_out.data.rowwise().sum();
  return SeqBatch(weight.transpose() * gcols, batch_);
}

void ConvTranspose1d::collect(std::vector<ParamRef>& out) {
  out.push_back({name_ + ".weight", &weight, &grad_weight});
  if (has_bias_) out.push_back({name_ + ".bias", &bias, &grad_bias});
}

// ---------------------------------------------------------------------------

BatchNorm1d::BatchNorm1d(std::string name, int channels, double momentum, double eps)
    : gamma(Matrix::Ones(channels, 1)),
      beta(Matrix::Zero(channels, 1)),
      grad_gamma(Matrix::Zero(channels, 1)),
      grad_beta(Matrix::Zero(channels, 1)),
      running_mean(Matrix::Zero(channels, 1)),
      running_var(Matrix::Ones(channels, 1)),
      name_(std::move(name)),
      momentum_(momentum),
      eps_(eps) {}

SeqBatch BatchNorm1d::forward(const SeqBatch& x, Mode mode) {
  if (x.channels() != gamma.rows()) fail(ErrorKind::kShape, name_ + ": channel mismatch");
  mode_ = mode;
  const auto n = static_cast<double>(x.data.cols());
  Vector mean, var;
  if (mode == Mode::kTrain) {
    mean = x.data.rowwise().mean();
    var = (x.data.colwise() - mean).array().square().rowwise().sum() / n;
    running_mean.col(0) = (1.0 - momentum_) * running_mean.col(0) + momentum_ * mean;
    const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
    running_var.col(0) = (1.0 - momentum_) * running_var.col(0) + momentum_ * unbias * var;
  } else {
    mean = running_mean.col(0);
    var = running_var.col(0);
  }
  inv_std_ = (var.array() + eps_).rsqrt();
  xhat_ = (x.data.colwise() - mean).array().colwise() * inv_std_.array();
  Matrix y = (xhat_.array().colwise() * gamma.col(0).array()).colwise() + beta.col(0).array();
  return SeqBatch(std::move(y), x.batch);
}

SeqBatch BatchNorm1d::backward(const SeqBatch& grad_out) {
  const Matrix& dy = grad_out.data;
  grad_gamma.col(0) += (dy.array() * xhat_.array()).rowwise().sum().matrix();
  grad_beta.col(0) += dy.rowwise().sum();
  const Matrix dxhat = dy.array().colwise() * gamma.col(0).array();
  if (mode_ == Mode::kEval) {
    return SeqBatch(dxhat.array().colwise() * inv_std_.array(), grad_out.batch);
  }
  const auto n = static_cast<double>(dy.cols());
  const Vector sum_d = dxhat.rowwise().sum();
  const Vector sum_dx = (dxhat.array() * xhat_.array()).rowwise().sum();
  Matrix dx = (n * dxhat.array() - xhat_.array().colwise() * sum_dx.array()).colwise() - sum_d.array();
  dx = dx.array().colwise() * (inv_std_.array() / n);
  return SeqBatch(std::move(dx), grad_out.batch);
}

void BatchNorm1d::collect(std::vector<ParamRef>& out) {
  out.push_back({name_ + ".gamma", &gamma, &grad_gamma});
  out.push_back({name_ + ".beta", &beta, &grad_beta});
}

void BatchNorm1d::collect_buffers(std::vector<BufferRef>& out) {
  out.emplace_back(name_ + ".running_mean", running_mean);
  out.emplace_back(name_ + ".running_var", running_var);
}

// ---------------------------------------------------------------------------

PReLU::PReLU(std::string name, double init)
    : alpha(Matrix::Constant(1, 1, init)), grad_alpha(Matrix::Zero(1, 1)), name_(std::move(name)) {}

SeqBatch PReLU::forward(const SeqBatch& x) {
  input_ = x.data;
  const double a = alpha(0, 0);
  Matrix y = x.data.array().max(0.0) + a * x.data.array().min(0.0);
  return SeqBatch(std::move(y), x.batch);
}

SeqBatch PReLU::backward(const SeqBatch& grad_out) {
  const double a = alpha(0, 0);
  const double* x = input_.data();
  const double* g = grad_out.data.data();
  Matrix dx(input_.rows(), input_.cols());
  double* out = dx.data();
  double da = 0.0;
  const Index n = input_.size();
  for (Index i = 0; i < n; ++i) {
    const bool pos = x[i] > 0.0;
    out[i] = pos ? g[i] : a * g[i];
    da += pos ? 0.0 : g[i] * x[i];
  }
  grad_alpha(0, 0) += da;
  return SeqBatch(std::move(dx), grad_out.batch);
}

void PReLU::collect(std::vector<ParamRef>& out) { out.push_back({name_ + ".alpha", &alpha, &grad_alpha}); }

// ---------------------------------------------------------------------------

Linear::Linear(std::string name, int in_features, int out_features, Rng& rng, bool bias)
    : name_(std::move(name)), has_bias_(bias) {
  weight.resize(out_features, in_features);
  uniform_fill(weight, 1.0 / std::sqrt(static_cast<double>(in_features)), rng);
  this->bias = Matrix::Zero(out_features, 1);
  grad_weight = Matrix::Zero(out_features, in_features);
  grad_bias = Matrix::Zero(out_features, 1);
}

Matrix Linear::forward(const Matrix& x) {
  if (x.rows() != weight.cols()) fail(ErrorKind::kShape, name_ + ": input feature mismatch");
  input_ = x;
  Matrix y = weight * x;
  if (has_bias_) y.colwise() += bias.col(0);
  return y;
}

Matrix Linear::backward(const Matrix& grad_out) {
  grad_weight.noalias() += grad_out * input_.transpose();
  if (has_bias_) grad_bias.col(0) += grad_out.rowwise().sum();
  return weight.transpose() * grad_out;
}

void Linear::collect(std::vector<ParamRef>& out) {
  out.push_back({name_ + ".weight", &weight, &grad_weight});
  if (has_bias_) out.push_back({name_ + ".bias", &bias, &grad_bias});
}

// ---------------------------------------------------------------------------

LayerNorm::LayerNorm(std::string name, int features, double eps)
    : gamma(Matrix::Ones(features, 1)),
      beta(Matrix::Zero(features, 1)),
      grad_gamma(Matrix::Zero(features, 1)),
      grad_beta(Matrix::Zero(features, 1)),
      name_(std::move(name)),
      eps_(eps) {}

Matrix LayerNorm::forward(const Matrix& x) {
  const auto d = static_cast<double>(x.rows());
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - mean;
  const Eigen::RowVectorXd var = centered.array().square().colwise().sum() / d;
  inv_std_ = (var.array() + eps_).rsqrt().transpose();
  xhat_ = centered.array().rowwise() * inv_std_.transpose().array();
  return (xhat_.array().colwise() * gamma.col(0).array()).colwise() + beta.col(0).array();
}

Matrix LayerNorm::backward(const Matrix& grad_out) {
  grad_gamma.col(0) += (grad_out.array() * xhat_.array()).rowwise().sum().matrix();
  grad_beta.col(0) += grad_out.rowwise().sum();
  const Matrix dxhat = grad_out.array().colwise() * gamma.col(0).array();
  const auto d = static_cast<double>(grad_out.rows());
  const Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
  const Eigen::RowVectorXd sum_dx = (dxhat.array() * xhat_.array()).colwise().sum();
  Matrix dx = (d * dxhat.array() - xhat_.array().rowwise() * sum_dx.array()).rowwise() - sum_d.array();
  dx = dx.array().rowwise() * (inv_std_.transpose().array() / d);
  return dx;
}

void LayerNorm::collect(std::vector<ParamRef>& out) {
  out.push_back({name_ + ".gamma", &gamma, &grad_gamma});
  out.push_back({name_ + ".beta", &beta, &grad_beta});
}

// ---------------------------------------------------------------------------

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Matrix Gelu::forward(const Matrix& x) {
  input_ = x;
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v))); });
}

Matrix Gelu::backward(const Matrix& grad_out) {
  const Matrix deriv = input_.unaryExpr([](double v) {
    const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
    return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
  });
  return grad_out.cwiseProduct(deriv);
}

// ---------------------------------------------------------------------------

Matrix to_time_major(const Matrix& x, int batch) {
  const auto len = static_cast<int>(x.cols()) / batch;
  Matrix out(x.rows(), x.cols());
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < len; ++t) out.col(static_cast<Index>(t) * batch + b) = x.col(static_cast<Index>(b) * len + t);
  }
  return out;
}

Matrix to_batch_major(const Matrix& x, int batch) {
  const auto len = static_cast<int>(x.cols()) / batch;
  Matrix out(x.rows(), x.cols());
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < len; ++t) out.col(static_cast<Index>(b) * len + t) = x.col(static_cast<Index>(t) * batch + b);
  }
  return out;
}

void zero_grads(const std::vector<ParamRef>& params) {
  for (const auto& p : params) p.grad->setZero();
}

}  // namespace rqsep::nn
