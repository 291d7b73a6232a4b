// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "rqsep/dsp.hpp"
#include "rqsep/losses.hpp"

namespace {

std::vector<double> noise(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 0.1);
  std::vector<double> x(n);
  for (auto& v : x) v = dist(rng);
  return x;
}

void BM_MelForward(benchmark::State& state) {
  const int scale = static_cast<int>(state.range(0));
  const rqsep::dsp::MelAnalyzer mel(22050, scale);
  const auto x = noise(88200, 1);
  for (auto _ : state) benchmark::DoNotOptimize(mel.forward(x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.size()));
}
BENCHMARK(BM_MelForward)->RangeMultiplier(2)->Range(64, 2048)->Unit(benchmark::kMillisecond);

void BM_SpectralLossGrad(benchmark::State& state) {
  const rqsep::codec::SpectralLoss loss(22050);
  const auto target = noise(88200, 2);
  const auto estimate = noise(88200, 3);
  std::vector<double> grad(target.size());
  for (auto _ : state) {
    std::span<double> g(grad);
    benchmark::DoNotOptimize(loss.value_and_grad(target, estimate, g));
  }
}
BENCHMARK(BM_SpectralLossGrad)->Unit(benchmark::kMillisecond);

void BM_Resample(benchmark::State& state) {
  const rqsep::dsp::Waveform w(noise(44100, 4), 44100);
  for (auto _ : state) benchmark::DoNotOptimize(rqsep::dsp::resample(w, 22050));
}
BENCHMARK(BM_Resample)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
