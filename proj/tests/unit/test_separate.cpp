// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "generators.hpp"
#include "rqsep/code_grid.hpp"
#include "rqsep/error.hpp"
#include "rqsep/separate.hpp"
#include "rqsep/train.hpp"
#include "rqsep/wav.hpp"

using namespace rqsep;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(RQSEP_TEST_TMP) / "separate" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Returns each chunk unchanged as a single stem.
data::StemSet passthrough(const dsp::Waveform& m) {
  data::StemSet s;
  s.names = {"all"};
  s.stems = {m};
  s.mixture = m;
  return s;
}

struct Fixture {
  fs::path dir;
  fs::path manifest;
  fs::path codec;
  fs::path lm;
  train::Config config;
};

// Tiny 8 kHz dataset, codec and prior shared by the file-level tests.
const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    x.dir = scratch("fixture");
    data::ToyDatasetOptions o;
    o.n_tracks = 4;
    o.seconds = 1.5;
    o.sample_rate = 8000;
    data::make_toy_dataset(o, x.dir / "data");
    x.manifest = x.dir / "data" / "manifest.txt";
    auto& c = x.config;
    c.codec.sample_rate = 8000;
    c.codec.context_seconds = 0.5;
    c.codec.base_channels = 2;
    c.codec.latent_channels = 32;
    c.rvq.depth = 2;
    c.rvq.codebook_size = 8;
    c.loss.spectral_scales = {64, 256, 1024};
    c.train.batch_size = 2;
    c.train.max_steps = 2;
    c.train.checkpoint_every = 100;
    c.lm.n_cb = 8;
    c.lm.q_depth = 2;
    c.lm.model_dim = 16;
    c.lm.spatial_layers = 1;
    c.lm.depth_layers = 1;
    c.lm.max_positions = 64;
    c.lm.top_k = 4;
    c.lm_train.batch_size = 2;
    c.lm_train.max_steps = 2;
    c.eval.chunk_seconds = 0.5;
    c.eval.hop_seconds = 0.25;
    std::ostringstream log;
    x.codec = train::train_codec(c, x.manifest, x.dir / "codec", log);
    x.lm = train::train_lm(c, x.codec, x.manifest, x.dir / "lm", log);
    return x;
  }();
  return f;
}

}  // namespace

TEST_CASE("cover offsets reach the end of the track", "[separate]") {
  CHECK(train::cover_offsets(100, 40, 20) == std::vector<std::size_t>{0, 20, 40, 60});
  CHECK(train::cover_offsets(110, 40, 20) == std::vector<std::size_t>{0, 20, 40, 60, 70});
  CHECK(train::cover_offsets(40, 40, 20) == std::vector<std::size_t>{0});
  CHECK(train::cover_offsets(39, 40, 20).empty());
  CHECK_THROWS_AS(train::cover_offsets(100, 0, 20), Error);
}

TEST_CASE("cross-fade weights form a partition of unity", "[separate][property]") {
  testing::for_all(60, 11, [](testing::Gen& gen, int) {
    const auto window = static_cast<std::size_t>(gen.integer(1, 64));
    const auto hop = static_cast<std::size_t>(gen.integer(1, static_cast<int>(window)));
    const auto length = window + static_cast<std::size_t>(gen.integer(0, 300));
    const auto offsets = train::cover_offsets(length, window, hop);
    const auto weights = train::crossfade_weights(length, window, offsets);
    REQUIRE(weights.size() == offsets.size());
    std::vector<double> total(length, 0.0);
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      for (std::size_t i = 0; i < window; ++i) {
        REQUIRE(weights[k][i] >= 0.0);
        total[offsets[k] + i] += weights[k][i];
      }
    }
    for (double t : total) REQUIRE_THAT(t, WithinAbs(1.0, 1e-12));
  });
}

TEST_CASE("chunked separation with a passthrough separator reproduces the mixture", "[separate][property]") {
  testing::for_all(20, 12, [](testing::Gen& gen, int) {
    const int rate = 100;
    const auto n = static_cast<std::size_t>(gen.integer(100, 1000));
    const dsp::Waveform m(gen.signal(n, 0.5), rate);
    const auto out = train::separate_track(passthrough, m, 1.0, 0.5);
    REQUIRE(out.size() == 1);
    REQUIRE(out.stems[0].size() == n);
    REQUIRE(out.length() == n);
    for (std::size_t i = 0; i < n; ++i) REQUIRE_THAT(out.stems[0].samples[i], WithinAbs(m.samples[i], 1e-12));
  });
  CHECK_THROWS_AS(train::separate_track(passthrough, dsp::Waveform(std::vector<double>(50, 0.0), 100), 1.0, 0.5), Error);
}

TEST_CASE("a separator returning the wrong shape is rejected", "[separate]") {
  const dsp::Waveform m(std::vector<double>(300, 0.1), 100);
  const metrics::Separator shorter = [](const dsp::Waveform& x) {
    auto s = passthrough(x);
    s.stems[0].samples.pop_back();
    return s;
  };
  CHECK_THROWS_AS(train::separate_track(shorter, m, 1.0, 0.5), Error);
}

TEST_CASE("separate writes one file per stem with the input's length", "[separate][files]") {
  const auto& f = fixture();
  const auto track = data::read_manifest(f.manifest).test.front();
  const auto mix = data::read_wav(track / "mix.wav");
  const auto out = scratch("stems");
  const auto paths = train::separate_file(f.codec, track / "mix.wav", out);
  REQUIRE(paths.size() == 4);
  for (const auto& p : paths) {
    const auto w = data::read_wav(p);
    CHECK(w.size() == mix.size());
    CHECK(w.sample_rate == 8000);
  }
  CHECK(fs::exists(out / "bass.wav"));
}

TEST_CASE("evaluate writes both report files", "[separate][files]") {
  const auto& f = fixture();
  const auto out = scratch("eval");
  const auto report = train::evaluate_file(f.codec, f.manifest, out);
  CHECK(report.per_stem.size() == 4);
  CHECK(report.chunk_count > 0);
  CHECK(std::isfinite(report.all_mean));
  std::ifstream kv(out / "report.kv");
  std::string text((std::istreambuf_iterator<char>(kv)), std::istreambuf_iterator<char>());
  CHECK_THAT(text, ContainsSubstring("si_sdri.all="));
  CHECK(fs::exists(out / "report.txt"));
}

TEST_CASE("encode pads to the fold and decode renders the grid", "[separate][files]") {
  const auto& f = fixture();
  const auto out = scratch("codes");
  const dsp::Waveform mix(std::vector<double>(4100, 0.0), 8000);
  data::write_wav(out / "in.wav", mix);
  const auto grid = train::encode_file(f.codec, out / "in.wav", out / "in.rqcg");
  CHECK(grid.positions == 21);  // ceil(4100 / 200)
  CHECK(grid.depth == 2);
  CHECK(rvq::read_code_grid(out / "in.rqcg") == grid);
  train::decode_file(f.codec, out / "in.rqcg", out / "decoded");
  CHECK(data::read_wav(out / "decoded" / "mix.wav").size() == 4200);
  CHECK(fs::exists(out / "decoded" / "piano.wav"));
}

TEST_CASE("generation is reproducible and clamped", "[separate][files]") {
  const auto& f = fixture();
  const auto out = scratch("gen");
  const auto a = train::generate_file(f.lm, f.codec, 0.5, 9, out / "a.wav");
  const auto b = train::generate_file(f.lm, f.codec, 0.5, 9, out / "b.wav");
  CHECK(a == b);
  CHECK(a.positions == 20);
  const auto wa = data::read_wav(out / "a.wav");
  CHECK(wa.samples == data::read_wav(out / "b.wav").samples);
  CHECK(wa.size() == 4000);
  for (double v : wa.samples) REQUIRE(std::abs(v) <= 1.0);
  CHECK(fs::exists(out / "a_drums.wav"));
}
