// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

// Seeded input generators for property tests. Each case i of a property
// runs on Gen(seed + i), so failures name a reproducible seed.

#pragma once

#include <cstdint>
#include <vector>

#include "rqsep/code_grid.hpp"
#include "rqsep/tensor.hpp"

namespace rqsep::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  Rng& rng() { return rng_; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(rng_); }
  int integer(int lo, int hi) { return lo + static_cast<int>(uniform_index(rng_, static_cast<std::size_t>(hi - lo + 1))); }
  double gaussian() { return normal(rng_); }

  Matrix matrix(Index rows, Index cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * normal(rng_);
    return m;
  }

  std::vector<double> signal(std::size_t n, double scale = 1.0) {
    std::vector<double> x(n);
    for (auto& v : x) v = scale * normal(rng_);
    return x;
  }

  /// 16-bit PCM levels k / 32768. Scaling them by 0.5, 2 or 10 is exact.
  std::vector<double> pcm_signal(std::size_t n) {
    std::vector<double> x(n);
    for (auto& v : x) v = static_cast<double>(integer(-32768, 32767)) / 32768.0;
    return x;
  }

  CodeGrid grid(int positions, int depth, int codebook_size) {
    CodeGrid g(positions, depth, codebook_size);
    for (auto& c : g.codes) c = static_cast<std::uint16_t>(uniform_index(rng_, static_cast<std::size_t>(codebook_size)));
    return g;
  }

 private:
  Rng rng_;
};

/// Runs `property(gen, case_index)` over `cases` seeded generators.
template <typename F>
void for_all(int cases, std::uint64_t seed, F&& property) {
  for (int i = 0; i < cases; ++i) {
    Gen gen(seed + static_cast<std::uint64_t>(i));
    property(gen, i);
  }
}

}  // namespace rqsep::testing
