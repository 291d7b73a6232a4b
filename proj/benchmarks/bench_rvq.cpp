// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "rqsep/rvq.hpp"

namespace {

// Quantizing one 4 s context (441 positions) with the default 12 x 4096 codebooks.
void BM_Quantize(benchmark::State& state) {
  rqsep::rvq::QuantizerConfig config;
  config.codebook_size = static_cast<int>(state.range(0));
  const rqsep::rvq::ResidualQuantizer rq(config, 256, 1);
  const rqsep::Matrix latent = rqsep::Matrix::Random(441, 256);
  for (auto _ : state) benchmark::DoNotOptimize(rqsep::rvq::quantize(latent, rq));
}
BENCHMARK(BM_Quantize)->Arg(64)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

void BM_KMeansInit(benchmark::State& state) {
  const rqsep::Matrix batch = rqsep::Matrix::Random(2048, 128);
  for (auto _ : state) benchmark::DoNotOptimize(rqsep::rvq::kmeans_init(batch, 64, 10, 1));
}
BENCHMARK(BM_KMeansInit)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
