// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace rqsep {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// A batch of equally long multichannel sequences. Column b*length + t holds
// the channel vector of item b at time t.
struct SeqBatch {
  Matrix data;
  int batch = 1;

  SeqBatch() = default;
  SeqBatch(Matrix d, int b) : data(std::move(d)), batch(b) {}

  int channels() const { return static_cast<int>(data.rows()); }
  int length() const { return batch == 0 ? 0 : static_cast<int>(data.cols()) / batch; }
  auto item(int b) { return data.middleCols(static_cast<Index>(b) * length(), length()); }
  auto item(int b) const { return data.middleCols(static_cast<Index>(b) * length(), length()); }
};

// Non-owning handle on a trainable array and its gradient accumulator.
struct ParamRef {
  std::string name;
  Matrix* value = nullptr;
  Matrix* grad = nullptr;
};

// Non-trainable persistent state (batch-norm statistics, usage counters),
// viewed as a column-major rows x cols block.
struct BufferRef {
  std::string name;
  double* data = nullptr;
  Index rows = 0;
  Index cols = 0;

  BufferRef(std::string n, Matrix& m) : name(std::move(n)), data(m.data()), rows(m.rows()), cols(m.cols()) {}
  BufferRef(std::string n, Vector& v) : name(std::move(n)), data(v.data()), rows(v.size()), cols(1) {}

  Eigen::Map<Matrix> map() const { return Eigen::Map<Matrix>(data, rows, cols); }
};

using Rng = std::mt19937_64;

// Uniform double in [0, 1) built from the top 53 bits, independent of the
// standard library's distribution implementations.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const auto limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return static_cast<std::size_t>(r % n);
}

inline double normal(Rng& rng) {
  // Box-Muller; one draw per call keeps the stream position simple.
  double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace rqsep
