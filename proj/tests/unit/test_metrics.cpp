// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "generators.hpp"
#include "oracles.hpp"
#include "rqsep/data.hpp"
#include "rqsep/error.hpp"
#include "rqsep/metrics.hpp"

using namespace rqsep;
using Catch::Matchers::WithinAbs;

namespace {

data::StemSet random_track(testing::Gen& gen, double seconds, int silent_from = 4) {
  data::StemSet t;
  t.names = data::default_stem_names();
  const auto n = static_cast<std::size_t>(seconds * 22050);
  for (int s = 0; s < 4; ++s) {
    t.stems.emplace_back(s < silent_from ? gen.signal(n, 0.1) : std::vector<double>(n, 0.0), 22050);
  }
  t.mixture.sample_rate = 22050;
  t.remix();
  return t;
}

data::StemSet mixture_copies(const dsp::Waveform& mix) {
  data::StemSet s;
  s.names = data::default_stem_names();
  for (int i = 0; i < 4; ++i) s.stems.push_back(mix);
  s.mixture = mix;
  return s;
}

}  // namespace

TEST_CASE("si_sdr of the (1,0)/(1,1) case is 0 dB", "[metrics]") {
  const std::vector<double> ref{1.0, 0.0}, est{1.0, 1.0};
  CHECK_THAT(metrics::si_sdr(ref, est), WithinAbs(0.0, 1e-9));
}

TEST_CASE("si_sdr clamps perfect estimates", "[metrics]") {
  testing::Gen gen(1);
  const auto x = gen.signal(100);
  CHECK(metrics::si_sdr(x, x) == metrics::kClampDb);
  for (double c : {0.5, 2.0, 10.0}) {
    std::vector<double> y(x);
    for (auto& v : y) v *= c;
    CHECK(metrics::si_sdr(x, y) == metrics::kClampDb);
  }
  CHECK_THROWS_AS(metrics::si_sdr(std::vector<double>(10, 0.0), x), Error);
  CHECK_THROWS_AS(metrics::si_sdr(x, gen.signal(99)), Error);
}

TEST_CASE("si_sdr is exactly scale invariant", "[metrics][property]") {
  testing::for_all(50, 10, [](testing::Gen& gen, int) {
    const auto n = static_cast<std::size_t>(gen.integer(2, 2000));
    const auto ref = gen.signal(n);
    const auto est = gen.pcm_signal(n);
    const double base = metrics::si_sdr(ref, est);
    for (double c : {0.5, 2.0, 10.0}) {
      std::vector<double> scaled(est);
      for (auto& v : scaled) v *= c;
      REQUIRE(metrics::si_sdr(ref, scaled) == base);
    }
  });
}

TEST_CASE("power-of-two scaling is exact for any estimate", "[metrics][property]") {
  testing::for_all(50, 11, [](testing::Gen& gen, int) {
    const auto n = static_cast<std::size_t>(gen.integer(2, 2000));
    const auto ref = gen.signal(n);
    const auto est = gen.signal(n);
    const double base = metrics::si_sdr(ref, est);
    for (double c : {0.5, 2.0, 1024.0}) {
      std::vector<double> scaled(est);
      for (auto& v : scaled) v *= c;
      REQUIRE(metrics::si_sdr(ref, scaled) == base);
    }
  });
}

TEST_CASE("a silent estimate scores the floor", "[metrics]") {
  CHECK(metrics::si_sdr(std::vector<double>{1.0, 2.0}, std::vector<double>{0.0, 0.0}) == -metrics::kClampDb);
}

TEST_CASE("si_sdr matches the projection oracle", "[metrics][property]") {
  testing::for_all(30, 20, [](testing::Gen& gen, int) {
    const auto n = static_cast<std::size_t>(gen.integer(2, 3000));
    const auto ref = gen.signal(n);
    auto est = ref;
    const double noise = gen.uniform(0.01, 3.0);
    for (auto& v : est) v = gen.uniform(0.2, 2.0) * v + noise * gen.gaussian();
    REQUIRE_THAT(metrics::si_sdr(ref, est), WithinAbs(testing::si_sdr_oracle(ref, est), 1e-9));
  });
}

TEST_CASE("si_sdri on a two-sinusoid mixture matches the oracle", "[metrics]") {
  testing::Gen gen(2);
  const std::size_t n = 4000;
  std::vector<double> a(n), b(n), mix(n), est(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = std::sin(2.0 * std::numbers::pi * 220.0 * i / 22050.0);
    b[i] = 0.7 * std::sin(2.0 * std::numbers::pi * 1375.0 * i / 22050.0);
    mix[i] = a[i] + b[i];
    est[i] = a[i] + 0.01 * gen.gaussian();
  }
  const double want = testing::si_sdr_oracle(a, est) - testing::si_sdr_oracle(a, mix);
  CHECK_THAT(metrics::si_sdri(a, est, mix), WithinAbs(want, 1e-9));
  CHECK(metrics::si_sdri(a, mix, mix) == 0.0);
  CHECK(metrics::si_sdri(a, a, mix) == metrics::kClampDb - metrics::si_sdr(a, mix));
}

TEST_CASE("si_sdri negates when estimate and mixture swap", "[metrics][property]") {
  testing::for_all(20, 30, [](testing::Gen& gen, int) {
    const auto n = static_cast<std::size_t>(gen.integer(2, 500));
    const auto r = gen.signal(n), e = gen.signal(n), m = gen.signal(n);
    REQUIRE(metrics::si_sdri(r, e, m) == -metrics::si_sdri(r, m, e));
  });
}

TEST_CASE("a ten-second track gives four chunks", "[metrics]") {
  testing::Gen gen(3);
  const std::vector<data::StemSet> tracks{random_track(gen, 10.0)};
  int calls = 0;
  const auto report = metrics::evaluate(
      [&](const dsp::Waveform& m) {
        ++calls;
        return mixture_copies(m);
      },
      tracks);
  CHECK(report.chunk_count == 4);
  CHECK(calls == 4);
}

TEST_CASE("mixture-as-estimate scores zero", "[metrics]") {
  testing::Gen gen(4);
  const std::vector<data::StemSet> tracks{random_track(gen, 8.0), random_track(gen, 6.0, 2)};
  const auto report = metrics::evaluate(mixture_copies, tracks);
  CHECK(report.chunk_count == 3 + 2);
  for (const auto& s : report.per_stem) {
    if (s.active_chunks > 0) CHECK_THAT(s.mean_si_sdri, WithinAbs(0.0, 1e-9));
  }
  CHECK(report.stem("guitar").active_chunks == 3);
  CHECK_THAT(report.all_mean, WithinAbs(0.0, 1e-9));
}

TEST_CASE("oracle separation scores clamp minus baseline", "[metrics]") {
  testing::Gen gen(5);
  const auto track = random_track(gen, 6.0);
  const std::vector<data::StemSet> tracks{track};
  const auto chunks = data::chunk(track, 4.0, 2.0);
  std::size_t next = 0;
  const auto report = metrics::evaluate([&](const dsp::Waveform&) { return chunks[next++]; }, tracks);
  for (std::size_t s = 0; s < 4; ++s) {
    double want = 0.0;
    for (const auto& c : chunks) want += metrics::kClampDb - metrics::si_sdr(c.stems[s], c.mixture);
    want /= static_cast<double>(chunks.size());
    CHECK_THAT(report.per_stem[s].mean_si_sdri, WithinAbs(want, 1e-9));
    CHECK(report.per_stem[s].mean_si_sdri >= 0.0);
  }
  double mean = 0.0;
  for (const auto& s : report.per_stem) mean += s.mean_si_sdri / 4.0;
  CHECK_THAT(report.all_mean, WithinAbs(mean, 1e-9));
}

TEST_CASE("silent and short tracks are not scored", "[metrics]") {
  testing::Gen gen(6);
  const std::vector<data::StemSet> tracks{random_track(gen, 8.0, 0), random_track(gen, 8.0, 1), random_track(gen, 3.0)};
  const auto report = metrics::evaluate(mixture_copies, tracks);
  CHECK(report.chunk_count == 0);
  CHECK(report.skipped_tracks == 1);
}

TEST_CASE("evaluation does not depend on track order", "[metrics][property]") {
  testing::for_all(3, 40, [](testing::Gen& gen, int) {
    std::vector<data::StemSet> tracks;
    for (int i = 0; i < 3; ++i) tracks.push_back(random_track(gen, gen.uniform(4.0, 9.0), gen.integer(1, 4)));
    // A deterministic, content-dependent separator: stems are scaled mixtures.
    const metrics::Separator sep = [](const dsp::Waveform& m) {
      auto s = mixture_copies(m);
      for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t t = 0; t < m.size(); ++t) s.stems[i].samples[t] *= 1.0 + 0.1 * static_cast<double>(i) * std::sin(0.001 * t);
      }
      return s;
    };
    const auto a = metrics::evaluate(sep, tracks);
    std::reverse(tracks.begin(), tracks.end());
    const auto b = metrics::evaluate(sep, tracks);
    REQUIRE(a.chunk_count == b.chunk_count);
    for (std::size_t s = 0; s < 4; ++s) REQUIRE_THAT(a.per_stem[s].mean_si_sdri, WithinAbs(b.per_stem[s].mean_si_sdri, 1e-12));
  });
}

TEST_CASE("reports render as a table and key-value pairs", "[metrics]") {
  metrics::EvalReport r;
  r.per_stem = {{"bass", 1.5, 3}, {"drums", -0.25, 2}, {"guitar", 0.0, 0}, {"piano", 2.0, 1}};
  r.all_mean = 1.0833333333333333;
  r.chunk_count = 3;
  const auto table = metrics::render_table(r);
  CHECK(table.find("Bass") != std::string::npos);
  CHECK(table.find("All") != std::string::npos);
  CHECK(table.find("n/a") != std::string::npos);
  const auto kv = metrics::render_key_values(r);
  CHECK(kv.find("chunk_count=3\n") != std::string::npos);
  CHECK(kv.find("si_sdri.bass=1.5\n") != std::string::npos);
  CHECK(kv.find("active_chunks.guitar=0\n") != std::string::npos);
}
