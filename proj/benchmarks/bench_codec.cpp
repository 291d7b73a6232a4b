// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <cmath>

#include "rqsep/codec.hpp"
#include "rqsep/data.hpp"

namespace {

rqsep::codec::CodecConfig bench_config(int base) {
  rqsep::codec::CodecConfig c;
  c.base_channels = base;
  c.latent_channels = base * 16;
  return c;
}

std::vector<rqsep::data::StemSet> chunks(int batch) {
  std::vector<rqsep::data::StemSet> out;
  for (int b = 0; b < batch; ++b) out.push_back(rqsep::data::synthesize_toy_track(static_cast<std::uint64_t>(b + 1), 4.0, 22050));
  for (auto& t : out) t.remix();
  return out;
}

// One training step (forward, loss and backward) on a batch of 4 s contexts.
void BM_TrainStep(benchmark::State& state) {
  const int base = static_cast<int>(state.range(0));
  rqsep::rvq::QuantizerConfig q;
  q.depth = 8;
  q.codebook_size = 64;
  rqsep::codec::CodecModel model(bench_config(base), q, 1);
  const auto batch = rqsep::codec::make_batch(chunks(2));
  const rqsep::codec::LossConfig loss;
  for (auto _ : state) {
    model.zero_grad();
    benchmark::DoNotOptimize(model.forward(batch, loss, rqsep::nn::Mode::kTrain).loss.total);
    model.backward();
  }
}
BENCHMARK(BM_TrainStep)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->Iterations(2);

void BM_Separate(benchmark::State& state) {
  rqsep::codec::CodecModel model(bench_config(8), rqsep::rvq::QuantizerConfig{}, 1);
  const auto track = chunks(1).front();
  for (auto _ : state) benchmark::DoNotOptimize(model.separate(track.mixture));
}
BENCHMARK(BM_Separate)->Unit(benchmark::kMillisecond)->Iterations(2);

}  // namespace

BENCHMARK_MAIN();
