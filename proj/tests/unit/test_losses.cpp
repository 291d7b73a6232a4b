// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "generators.hpp"
#include "oracles.hpp"
#include "rqsep/error.hpp"
#include "rqsep/losses.hpp"

using namespace rqsep;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

data::StemSet stems(std::vector<std::vector<double>> xs) {
  data::StemSet s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    s.names.push_back("s" + std::to_string(i));
    s.stems.emplace_back(std::move(xs[i]), 22050);
  }
  s.mixture.sample_rate = 22050;
  s.remix();
  return s;
}

}  // namespace

TEST_CASE("spectral loss of identical and silent inputs is zero", "[losses]") {
  testing::Gen gen(1);
  const auto x = gen.signal(4096, 0.3);
  CHECK(codec::spectral_loss(stems({x}), stems({x})) == 0.0);
  const std::vector<double> zero(4096, 0.0);
  CHECK(codec::spectral_loss(stems({zero}), stems({zero})) == 0.0);
  CHECK_THROWS_AS(codec::spectral_loss(stems({std::vector<double>(2000, 0.0)}), stems({std::vector<double>(2000, 0.0)})), Error);
}

TEST_CASE("spectral loss of a sine against silence matches the oracle", "[losses]") {
  std::vector<double> sine(3000);
  for (std::size_t i = 0; i < sine.size(); ++i) sine[i] = 0.5 * std::sin(2.0 * std::numbers::pi * 440.0 * i / 22050.0);
  const std::vector<double> silence(sine.size(), 0.0);
  const double got = codec::spectral_loss(stems({sine}), stems({silence}));
  const double want = testing::spectral_loss_oracle(sine, silence, 22050, codec::default_spectral_scales(), 1.0);
  CHECK_THAT(got, WithinRel(want, 1e-6));
}

TEST_CASE("spectral loss matches the oracle on seeded inputs", "[losses][property]") {
  testing::for_all(10, 40, [](testing::Gen& gen, int) {
    const auto n = static_cast<std::size_t>(gen.integer(2048, 3200));
    const auto a = gen.signal(n, gen.uniform(0.01, 0.5));
    const auto b = gen.signal(n, gen.uniform(0.01, 0.5));
    const double got = codec::spectral_loss(stems({a}), stems({b}));
    const double want = testing::spectral_loss_oracle(a, b, 22050, codec::default_spectral_scales(), 1.0);
    REQUIRE_THAT(got, WithinRel(want, 1e-6));
  });
}

TEST_CASE("spectral loss gradient matches finite differences", "[losses]") {
  testing::Gen gen(5);
  const auto a = gen.signal(1024, 0.2);
  auto b = gen.signal(1024, 0.2);
  const std::vector<int> scales{64, 256, 1024};
  const codec::SpectralLoss loss(22050, scales);
  std::vector<double> grad(b.size(), 0.0);
  loss.value_and_grad(a, b, grad);
  const auto dir = gen.signal(b.size());
  const double h = 1e-7;
  std::vector<double> up(b), down(b);
  for (std::size_t i = 0; i < b.size(); ++i) {
    up[i] += h * dir[i];
    down[i] -= h * dir[i];
  }
  const double fd = (loss.value(a, up) - loss.value(a, down)) / (2.0 * h);
  double an = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) an += grad[i] * dir[i];
  CHECK_THAT(an, WithinRel(fd, 1e-5));
}

TEST_CASE("reconstruction loss", "[losses]") {
  testing::Gen gen(2);
  const auto x = gen.signal(500);
  CHECK(codec::reconstruction_loss(stems({x}), stems({x})) == 0.0);
  auto shifted = x;
  for (auto& v : shifted) v += 0.1;
  CHECK_THAT(codec::reconstruction_loss(stems({x}), stems({shifted})), WithinAbs(0.01, 1e-12));
  CHECK_THAT(codec::reconstruction_loss(stems({x, x, x, x}), stems({shifted, shifted, shifted, shifted})),
             WithinAbs(0.04, 1e-12));
  CHECK_THROWS_AS(codec::reconstruction_loss(stems({x}), stems({gen.signal(499)})), Error);
}

TEST_CASE("reconstruction loss matches the oracle on seeded inputs", "[losses][property]") {
  testing::for_all(10, 60, [](testing::Gen& gen, int) {
    const auto n = static_cast<std::size_t>(gen.integer(1, 5000));
    const int sources = gen.integer(1, 4);
    std::vector<std::vector<double>> a, b;
    double want = 0.0;
    for (int s = 0; s < sources; ++s) {
      a.push_back(gen.signal(n));
      b.push_back(gen.signal(n));
      want += testing::mse_oracle(a.back(), b.back());
    }
    REQUIRE_THAT(codec::reconstruction_loss(stems(a), stems(b)), WithinRel(want, 1e-12));
  });
}
