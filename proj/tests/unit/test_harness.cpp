// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "generators.hpp"
#include "rqsep/adam.hpp"
#include "rqsep/checkpoint.hpp"
#include "rqsep/config.hpp"
#include "rqsep/data.hpp"
#include "rqsep/error.hpp"
#include "rqsep/train.hpp"

using namespace rqsep;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(RQSEP_TEST_TMP) / "harness" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// A codec small enough to train in seconds: 8 kHz, half-second contexts.
train::Config small_run() {
  train::Config c;
  c.codec.sample_rate = 8000;
  c.codec.context_seconds = 0.5;
  c.codec.base_channels = 2;
  c.codec.latent_channels = 32;
  c.rvq.depth = 2;
  c.rvq.codebook_size = 8;
  c.loss.spectral_scales = {64, 256, 1024};
  c.train.batch_size = 2;
  c.train.seed = 3;
  c.train.log_every = 1;
  c.lm.n_cb = 8;
  c.lm.q_depth = 2;
  c.lm.model_dim = 16;
  c.lm.spatial_layers = 1;
  c.lm.depth_layers = 1;
  c.lm.max_positions = 64;
  c.lm_train.batch_size = 2;
  c.lm_train.max_steps = 3;
  c.lm_train.log_every = 1;
  c.eval.chunk_seconds = 0.5;
  c.eval.hop_seconds = 0.25;
  return c;
}

std::vector<data::StemSet> small_tracks(int n) {
  std::vector<data::StemSet> out;
  for (int i = 0; i < n; ++i) out.push_back(data::synthesize_toy_track(100 + static_cast<std::uint64_t>(i), 2.0, 8000));
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("adam's first step moves each weight by the learning rate", "[adam]") {
  Matrix w(1, 3), g(1, 3);
  w << 1.0, -2.0, 0.5;
  g << 0.3, -4.0, 1e-3;
  train::AdamConfig c;
  c.learning_rate = 0.01;
  c.clip_norm = 0.0;
  train::Adam adam(c);
  const Matrix before = w;
  adam.step({{"w", &w, &g}});
  for (Index i = 0; i < 3; ++i) {
    const double expected = before(0, i) - 0.01 * g(0, i) / (std::abs(g(0, i)) + 1e-8);
    CHECK_THAT(w(0, i), WithinAbs(expected, 1e-15));
  }
}

TEST_CASE("adam clips by global norm and rejects non-finite gradients", "[adam]") {
  Matrix w = Matrix::Zero(1, 2), g(1, 2);
  g << 30.0, 40.0;
  train::Adam adam;
  const double norm = adam.step({{"w", &w, &g}});
  CHECK(norm == 50.0);
  g(0, 0) = std::nan("");
  CHECK_THROWS_AS(adam.step({{"w", &w, &g}}), Error);
}

TEST_CASE("adam state round-trips", "[adam]") {
  testing::Gen gen(1);
  Matrix w1 = gen.matrix(2, 2), g = gen.matrix(2, 2);
  Matrix w2 = w1;
  train::Adam a, b;
  a.step({{"w", &w1, &g}});
  b.load_state(a.state(), a.steps());
  w2 = w1;
  a.step({{"w", &w1, &g}});
  b.step({{"w", &w2, &g}});
  CHECK(w1 == w2);
}

TEST_CASE("learning-rate schedule", "[harness]") {
  train::TrainSettings s;
  s.learning_rate = 1.0;
  s.max_steps = 100;
  CHECK(train::scheduled_learning_rate(s, 50) == 1.0);
  s.warmup_steps = 10;
  s.final_lr_scale = 0.1;
  CHECK_THAT(train::scheduled_learning_rate(s, 0), WithinAbs(0.1, 1e-12));
  CHECK_THAT(train::scheduled_learning_rate(s, 9), WithinAbs(1.0 - 0.9 * 0.09, 1e-12));
  CHECK_THAT(train::scheduled_learning_rate(s, 100), WithinAbs(0.1, 1e-12));
}

TEST_CASE("checkpoints serialize, load and re-serialize identically", "[checkpoint][property]") {
  const auto dir = scratch("ckpt");
  testing::for_all(5, 7, [&](testing::Gen& gen, int i) {
    train::Checkpoint c;
    c.kind = i % 2 ? "codec" : "lm";
    c.config = "[train]\nseed = " + std::to_string(i) + "\n";
    c.metadata["step"] = std::to_string(gen.integer(0, 1000));
    c.metadata["rng"] = "1 2 3";
    for (int k = 0; k < gen.integer(1, 6); ++k) c.arrays["a" + std::to_string(k)] = gen.matrix(gen.integer(0, 5), gen.integer(1, 5));
    c.arrays["special"] = Matrix::Constant(1, 3, -0.0);
    c.arrays["special"](0, 1) = std::numeric_limits<double>::denorm_min();
    const auto bytes = train::serialize(c);
    const auto back = train::deserialize_checkpoint(bytes);
    REQUIRE(train::serialize(back) == bytes);
    const auto path = dir / ("c" + std::to_string(i) + ".ckpt");
    train::save_checkpoint(path, c);
    const auto first = slurp(path);
    train::save_checkpoint(path, train::load_checkpoint(path));
    REQUIRE(slurp(path) == first);
    REQUIRE(std::signbit(back.arrays.at("special")(0, 0)));
  });
  CHECK_THROWS_AS(train::deserialize_checkpoint("RQCKPT"), Error);
  CHECK_THROWS_AS(train::load_checkpoint(dir / "absent.ckpt"), Error);
}

TEST_CASE("config text parses, round-trips and rejects unknown keys", "[config]") {
  const auto c = train::parse_config("# comment\n[rvq]\ndepth = 3\ncodebook_size = 64 ; trailing\n[train]\nseed = 9\n");
  CHECK(c.rvq.depth == 3);
  CHECK(c.rvq.codebook_size == 64);
  CHECK(c.train.seed == 9);
  const auto again = train::parse_config(train::to_ini(c));
  CHECK(train::to_ini(again) == train::to_ini(c));
  CHECK_THROWS_AS(train::parse_config("[rvq]\nwidth = 3\n"), Error);
  CHECK_THROWS_AS(train::parse_config("[nope]\n"), Error);
  CHECK_THROWS_AS(train::parse_config("[rvq]\ndepth = 3\ndepth = 4\n"), Error);
  CHECK_THROWS_AS(train::parse_config("[rvq]\ndepth = three\n"), Error);
}

TEST_CASE("config validation names the fold constraint", "[config]") {
  try {
    train::parse_config("[codec]\nstrides = 5, 5, 5, 3\ncontext_seconds = 4\n").validate();
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
    CHECK_THAT(std::string(e.what()), ContainsSubstring("stride product") && ContainsSubstring("375"));
  }
}

TEST_CASE("field overrides", "[config]") {
  train::Config c;
  train::set_field(c, "train.batch_size", "4");
  train::set_field(c, "beta", "0.5");
  CHECK(c.train.batch_size == 4);
  CHECK(c.rvq.beta == 0.5);
  CHECK_THROWS_AS(train::set_field(c, "batch_size", "2"), Error);  // train or lm_train
  CHECK_THROWS_AS(train::set_field(c, "train.nothing", "2"), Error);
  CHECK(train::field_names().size() > 40);
}

TEST_CASE("mismatched configs name the offending field", "[config]") {
  train::Config a, b;
  b.rvq.codebook_size = 1024;
  try {
    train::require_same(a, b, train::codec_sections(), "checkpoint");
    FAIL("expected a mismatch");
  } catch (const Error& e) {
    CHECK_THAT(std::string(e.what()), ContainsSubstring("rvq.codebook_size"));
  }
  b = a;
  b.train.seed = 5;
  CHECK_NOTHROW(train::require_same(a, b, train::codec_sections(), "checkpoint"));
}

TEST_CASE("codec training initializes once and lowers the loss", "[train]") {
  const auto config = small_run();
  train::CodecTrainer trainer(config, small_tracks(3));
  const auto first = trainer.step();
  CHECK(trainer.kmeans_inits() == 1);
  codec::LossBreakdown last;
  double early = first.loss.total, late = 0.0;
  for (int i = 0; i < 49; ++i) {
    last = trainer.step().loss;
    if (i >= 39) late += last.total / 10.0;
  }
  CHECK(trainer.kmeans_inits() == 1);
  CHECK(trainer.steps() == 50);
  CHECK(late < early);
}

TEST_CASE("resuming reproduces the next step bit-exactly", "[train]") {
  const auto config = small_run();
  train::CodecTrainer a(config, small_tracks(3));
  for (int i = 0; i < 3; ++i) a.step();
  const auto bytes = train::serialize(a.checkpoint());
  const auto next_a = a.step();
  const auto after_a = train::serialize(a.checkpoint());

  train::CodecTrainer b(config, small_tracks(3));
  b.restore(train::deserialize_checkpoint(bytes));
  CHECK(b.kmeans_inits() == 1);
  const auto next_b = b.step();
  CHECK(next_a.loss.spectral == next_b.loss.spectral);
  CHECK(next_a.loss.reconstruction == next_b.loss.reconstruction);
  CHECK(next_a.loss.commitment == next_b.loss.commitment);
  CHECK(next_a.loss.total == next_b.loss.total);
  CHECK(train::serialize(b.checkpoint()) == after_a);

  auto other = config;
  other.rvq.codebook_size = 16;
  train::CodecTrainer c(other, small_tracks(3));
  CHECK_THROWS_AS(c.restore(train::deserialize_checkpoint(bytes)), Error);
}

TEST_CASE("file-level training, resume and prior fitting", "[train]") {
  const auto dir = scratch("files");
  data::ToyDatasetOptions o;
  o.n_tracks = 4;
  o.seconds = 1.5;
  o.sample_rate = 8000;
  data::make_toy_dataset(o, dir / "data");
  auto config = small_run();
  config.train.max_steps = 4;
  config.train.checkpoint_every = 2;
  std::ostringstream log;
  const auto ckpt = train::train_codec(config, dir / "data" / "manifest.txt", dir / "codec", log);
  CHECK(fs::exists(ckpt));
  CHECK(fs::exists(dir / "codec" / "codec-2.ckpt"));
  CHECK_THAT(log.str(), ContainsSubstring("step=4 loss_spec="));

  std::ostringstream resumed_log;
  train::train_codec(config, dir / "data" / "manifest.txt", dir / "resumed", resumed_log, dir / "codec" / "codec-2.ckpt");
  CHECK(slurp(dir / "resumed" / "codec.ckpt") == slurp(ckpt));

  std::ostringstream lm_log;
  const auto lm_ckpt = train::train_lm(config, ckpt, dir / "data" / "manifest.txt", dir / "lm", lm_log);
  CHECK(fs::exists(lm_ckpt));
  CHECK_THAT(lm_log.str(), ContainsSubstring("step=3 loss_nll="));
  const auto hash = train::hash_arrays(train::codec_arrays(*std::make_unique<codec::CodecModel>(train::load_codec(ckpt))));
  CHECK(std::to_string(hash) == train::load_checkpoint(lm_ckpt).metadata.at("codec_hash"));
  const auto cached = train::read_grid_cache(dir / "lm" / "grids.cache", hash);
  REQUIRE(cached.has_value());
  const auto before = slurp(dir / "lm" / "grids.cache");
  std::ostringstream second;
  train::train_lm(config, ckpt, dir / "data" / "manifest.txt", dir / "lm", second);
  CHECK(slurp(dir / "lm" / "grids.cache") == before);
  CHECK_THAT(second.str(), !ContainsSubstring("cached"));
  CHECK_FALSE(train::read_grid_cache(dir / "lm" / "grids.cache", hash + 1).has_value());

  auto wrong = config;
  wrong.lm.q_depth = 3;
  try {
    train::train_lm(wrong, ckpt, dir / "data" / "manifest.txt", dir / "lm_bad", lm_log);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
    CHECK_THAT(std::string(e.what()), ContainsSubstring("lm.q_depth"));
  }

  auto mismatched = config;
  mismatched.codec.base_channels = 4;
  mismatched.codec.latent_channels = 64;
  CHECK_THROWS_AS(train::load_codec(ckpt, nullptr, &mismatched), Error);
}
