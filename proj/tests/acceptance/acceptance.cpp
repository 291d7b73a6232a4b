// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. Prints one "PASS"/"FAIL" line per criterion, preceded by
// indented detail lines for each individual check, and exits nonzero when
// any selected criterion fails.
//
//   rqsep_acceptance [--criterion N] [--work DIR]

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "generators.hpp"
#include "gradcheck.hpp"
#include "micro_codec.hpp"
#include "oracles.hpp"
#include "rqsep/checkpoint.hpp"
#include "rqsep/code_grid.hpp"
#include "rqsep/codec.hpp"
#include "rqsep/config.hpp"
#include "rqsep/data.hpp"
#include "rqsep/error.hpp"
#include "rqsep/lm.hpp"
#include "rqsep/losses.hpp"
#include "rqsep/metrics.hpp"
#include "rqsep/rvq.hpp"
#include "rqsep/train.hpp"

namespace fs = std::filesystem;
using namespace rqsep;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

class Criterion {
 public:
  Criterion(int id, std::string title) : id_(id), title_(std::move(title)) {}

  void check(bool ok, const std::string& what) {
    ok_ = ok_ && ok;
    std::cout << "  " << (ok ? "ok  " : "FAIL") << "  " << what << std::endl;
  }

  bool finish() const {
    std::cout << (ok_ ? "PASS" : "FAIL") << " criterion " << id_ << ": " << title_ << std::endl;
    return ok_;
  }

 private:
  int id_;
  std::string title_;
  bool ok_ = true;
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream out;
  out << std::setprecision(precision) << v;
  return out.str();
}

// ---------------------------------------------------------------------------
// 1. Toy end-to-end run through the command-line tool.

constexpr int kToyMaxSteps = 5000;
constexpr double kToyMinSiSdri = 5.0;
constexpr double kToyMaxSeconds = 45.0 * 60.0;

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::map<std::string, std::string> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

bool run(const std::string& command, const fs::path& log) {
  const std::string full = command + " > \"" + log.string() + "\" 2>&1";
  std::cout << "  ...   " << command << std::endl;
  return std::system(full.c_str()) == 0;
}

bool criterion_toy(const fs::path& work) {
  Criterion c(1, "toy end-to-end separation (SI-SDRi >= 5 dB, <= 5000 steps, <= 45 min)");
#if defined(RQSEP_CLI_PATH) && defined(RQSEP_TOY_CONFIG)
  const std::string cli = RQSEP_CLI_PATH;
  const std::string config_path = RQSEP_TOY_CONFIG;
  const train::Config config = train::load_config(config_path);
  c.check(config.train.max_steps <= kToyMaxSteps, "train.max_steps = " + std::to_string(config.train.max_steps) + " <= 5000");

  const fs::path dir = work / "toy";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto start = Clock::now();
  const bool made = run(cli + " make-toy-data --config \"" + config_path + "\" --tracks 60 --seconds 12 --seed 7 --out \"" +
                            (dir / "data").string() + "\"",
                        dir / "make-toy-data.log");
  c.check(made, "make-toy-data exit status");
  const bool trained = made && run(cli + " train-codec --config \"" + config_path + "\" --data \"" +
                                       (dir / "data" / "manifest.txt").string() + "\" --out \"" + (dir / "codec").string() + "\"",
                                   dir / "train-codec.log");
  c.check(trained, "train-codec exit status (log: " + (dir / "train-codec.log").string() + ")");
  const bool evaluated = trained && run(cli + " evaluate --codec \"" + (dir / "codec" / "codec.ckpt").string() + "\" --data \"" +
                                            (dir / "data" / "manifest.txt").string() + "\" --out \"" + (dir / "eval").string() + "\"",
                                        dir / "evaluate.log");
  c.check(evaluated, "evaluate exit status");
  const double elapsed = seconds_since(start);

  const auto report = read_key_values(dir / "eval" / "report.kv");
  const auto all = report.find("si_sdri.all");
  if (all == report.end()) {
    c.check(false, "report.kv contains si_sdri.all");
  } else {
    for (const auto& [key, value] : report) {
      if (key.rfind("si_sdri.", 0) == 0 && key != "si_sdri.all") std::cout << "        " << key << " = " << value << " dB\n";
    }
    const double si_sdri = std::stod(all->second);
    c.check(si_sdri >= kToyMinSiSdri, "mean SI-SDRi on the toy test split = " + fmt(si_sdri, 4) + " dB (>= 5)");
  }
  c.check(elapsed <= kToyMaxSeconds, "wall time = " + fmt(elapsed / 60.0, 4) + " min (<= 45)");
#else
  (void)work;
  c.check(false, "built without the command-line tool");
#endif
  return c.finish();
}

// ---------------------------------------------------------------------------
// 2. Quantizer properties.

rvq::ResidualQuantizer quantizer_from(std::vector<Matrix> books, double usage) {
  rvq::QuantizerConfig config;
  config.depth = static_cast<int>(books.size());
  config.codebook_size = static_cast<int>(books.front().rows());
  std::vector<rvq::Codebook> codebooks;
  for (auto& b : books) {
    rvq::Codebook cb;
    cb.vectors = std::move(b);
    cb.ema_usage = Vector::Constant(cb.vectors.rows(), usage);
    codebooks.push_back(std::move(cb));
  }
  return rvq::ResidualQuantizer(config, std::move(codebooks));
}

rvq::ResidualQuantizer zero_augmented(testing::Gen& gen, int depth, int size, int dim) {
  std::vector<Matrix> books;
  for (int d = 0; d < depth; ++d) {
    Matrix m(size, dim);
    m.row(0).setZero();
    m.bottomRows(size - 1) = gen.matrix(size - 1, dim, std::pow(0.5, d));
    books.push_back(m);
  }
  return quantizer_from(books, 10.0);
}

bool criterion_quantizer() {
  Criterion c(2, "quantizer properties (exact or within 1e-9)");
  constexpr int kCases = 200;

  bool monotonic = true, identity = true;
  testing::Gen gen(2026);
  for (int i = 0; i < kCases; ++i) {
    const int depth = gen.integer(1, 12), size = gen.integer(1, 64), dim = gen.integer(1, 16);
    const auto rq = zero_augmented(gen, depth, size, dim);
    const Matrix x = gen.matrix(gen.integer(1, 40), dim, gen.uniform(0.01, 10.0));
    const auto q = rvq::quantize(x, rq);
    for (Index t = 0; t < x.rows(); ++t) {
      double previous = q.residuals[0].row(t).norm();
      for (int d = 1; d <= depth; ++d) {
        const double now = d < depth ? q.residuals[static_cast<std::size_t>(d)].row(t).norm() : q.final_residual.row(t).norm();
        monotonic = monotonic && now <= previous + 1e-9;
        previous = now;
      }
    }
    const Matrix deq = rvq::dequantize(q.grid, rq);
    identity = identity && deq == q.quantized && ((x - deq) - q.final_residual).cwiseAbs().maxCoeff() <= 1e-9;
  }
  c.check(monotonic, "residual norms non-increasing with depth, " + std::to_string(kCases) + " random zero-augmented quantizers");
  c.check(identity, "dequantize(quantize(x)) equals the quantized sum exactly, " + std::to_string(kCases) + " cases");

  // Duplicated codewords and lattice ties resolve to the lowest index, and
  // repeated calls agree.
  bool ties = true;
  for (int i = 0; i < 50; ++i) {
    const int size = gen.integer(2, 16), dim = gen.integer(1, 6);
    Matrix book = gen.matrix(size, dim);
    const int lo = gen.integer(0, size - 2), hi = gen.integer(lo + 1, size - 1);
    book.row(hi) = book.row(lo);
    const auto rq = quantizer_from({book}, 10.0);
    const Matrix x = book.row(lo) + gen.matrix(1, dim, 1e-3);
    const auto a = rvq::quantize(x, rq), b = rvq::quantize(x, rq);
    ties = ties && a.grid == b.grid && a.grid.at(0, 0) != hi;
  }
  Matrix lattice(4, 1);
  lattice << 2, -1, 1, 3;  // x = 0 is exactly equidistant from -1 and 1
  ties = ties && rvq::quantize(Matrix::Zero(1, 1), quantizer_from({lattice}, 10.0)).grid.at(0, 0) == 1;
  c.check(ties, "ties pick the lowest index, deterministically");

  // EMA: a never-assigned vector starting at usage 10.
  Matrix two(2, 1);
  two << 0.0, 1.0;
  auto rq = quantizer_from({two}, 10.0);
  CodeGrid grid(100, 1, 2);
  for (auto& code : grid.codes) code = 1;
  const Matrix batch = Matrix::Constant(1, 1, 0.5);
  double worst = 0.0;
  int crossed = -1;
  bool early_reinit = false;
  for (int k = 1; k <= 100 && crossed < 0; ++k) {
    rvq::ema_update(rq, grid);
    worst = std::max(worst, std::abs(rq.codebook(0).ema_usage(0) - 10.0 * std::pow(0.97, k)));
    if (rq.codebook(0).ema_usage(0) < 2.0) {
      crossed = k;
    } else {
      early_reinit = early_reinit || rvq::reinit_dead_codes(rq, batch, 1) != 0;
    }
  }
  c.check(worst <= 1e-9, "usage follows 10 * 0.97^k (max deviation " + fmt(worst, 3) + ")");
  c.check(crossed == 53 && !early_reinit, "usage first drops below 2 after " + std::to_string(crossed) + " silent batches (expected 53)");
  const int replaced = rvq::reinit_dead_codes(rq, batch, 1);
  c.check(replaced == 1 && rq.codebook(0).vectors(0, 0) == 0.5 && rq.codebook(0).ema_usage(0) == 2.0,
          "reinitialization at batch 53 replaces the vector from the batch and resets usage to 2");
  return c.finish();
}

// ---------------------------------------------------------------------------
// 3. Micro codec gradient check.

constexpr double kGradTolerance = 1e-3;
constexpr double kGradSeconds = 120.0;

bool criterion_gradients() {
  Criterion c(3, "micro codec gradients vs central differences (1e-3 relative, < 2 min)");
  const auto start = Clock::now();
  // Central differences across PReLU kinks err in proportion to the step.
  testing::GradcheckOptions options;
  options.step = 1e-7;

  const auto full = testing::micro_codec_gradcheck(testing::micro_loss_config(), 1, options);
  const double full_worst = testing::worst(full.groups);
  std::string worst_name;
  for (const auto& g : full.groups) {
    if (g.relative_error == full_worst) worst_name = g.name;
  }
  c.check(full_worst < kGradTolerance, std::to_string(full.groups.size()) + " parameter groups, total loss: worst relative error " +
                                           fmt(full_worst, 3) + " (" + worst_name + ")");

  // Without the commitment term the encoder is reached only through the
  // straight-through path; its finite differences then check that the
  // estimator passes decoder gradients through unchanged.
  auto through = testing::micro_loss_config();
  through.w_comm = 0.0;
  const auto st = testing::micro_codec_gradcheck(through, 1, options);
  double encoder_worst = 0.0, encoder_norm = 0.0;
  int encoder_groups = 0;
  for (const auto& g : st.groups) {
    if (g.name.rfind("encoder.", 0) == 0) {
      ++encoder_groups;
      encoder_worst = std::max(encoder_worst, g.relative_error);
      encoder_norm += g.analytic_norm;
    }
  }
  c.check(encoder_groups > 0 && encoder_norm > 0.0 && testing::worst(st.groups) < kGradTolerance,
          "straight-through: " + std::to_string(encoder_groups) + " encoder groups with w_comm = 0, worst relative error " +
              fmt(encoder_worst, 3));
  testing::Gen gen(3);
  const Matrix v = gen.matrix(7, 5);
  c.check(rvq::straight_through_backward(v) == v, "straight-through backward is the identity");

  const double elapsed = seconds_since(start);
  c.check(elapsed < kGradSeconds, "runtime " + fmt(elapsed, 3) + " s (< 120)");
  return c.finish();
}

// ---------------------------------------------------------------------------
// 4. Loss oracles.

bool criterion_losses() {
  Criterion c(4, "loss formulas vs direct-DFT oracles (1e-6 relative) and the commitment example");
  constexpr int kRate = 22050;
  const auto scales = codec::default_spectral_scales();
  double worst_spec = 0.0, worst_rec = 0.0;
  for (int seed = 1; seed <= 10; ++seed) {
    testing::Gen gen(static_cast<std::uint64_t>(seed));
    const auto n = static_cast<std::size_t>(gen.integer(2048, 3200));
    data::StemSet targets, estimates;
    targets.names = estimates.names = data::default_stem_names();
    for (int s = 0; s < 4; ++s) {
      auto t = gen.signal(n, 0.3);
      auto e = t;
      for (auto& v : e) v += gen.gaussian() * gen.uniform(0.0, 0.2);
      targets.stems.emplace_back(t, kRate);
      estimates.stems.emplace_back(e, kRate);
    }
    targets.mixture.sample_rate = estimates.mixture.sample_rate = kRate;
    targets.remix();
    estimates.remix();
    double spec_oracle = 0.0, rec_oracle = 0.0;
    for (int s = 0; s < 4; ++s) {
      spec_oracle += testing::spectral_loss_oracle(targets.stems[s].samples, estimates.stems[s].samples, kRate, scales, 1.0);
      rec_oracle += testing::mse_oracle(targets.stems[s].samples, estimates.stems[s].samples);
    }
    const double spec = codec::spectral_loss(targets, estimates, scales, 1.0);
    const double rec = codec::reconstruction_loss(targets, estimates);
    worst_spec = std::max(worst_spec, std::abs(spec - spec_oracle) / std::abs(spec_oracle));
    worst_rec = std::max(worst_rec, std::abs(rec - rec_oracle) / std::abs(rec_oracle));
  }
  c.check(worst_spec <= 1e-6, "spectral_loss, 10 seeded inputs: worst relative error " + fmt(worst_spec, 3));
  c.check(worst_rec <= 1e-6, "reconstruction_loss, 10 seeded inputs: worst relative error " + fmt(worst_rec, 3));

  Matrix ze(1, 2), zq(1, 2);
  ze << 1, 0;
  zq << 0, 0;
  const std::vector<Matrix> r{ze}, q{zq};
  const double commitment = rvq::commitment_loss(r, q, ze, 0.25, true);
  c.check(std::abs(commitment - 2.25) <= 1e-12, "commitment_loss(z_e = (1,0), z_q = (0,0), beta 0.25) = " + fmt(commitment));
  return c.finish();
}

// ---------------------------------------------------------------------------
// 5. Metric oracles.

data::StemSet noise_track(testing::Gen& gen, double seconds) {
  data::StemSet t;
  t.names = data::default_stem_names();
  const auto n = static_cast<std::size_t>(seconds * 22050);
  for (int s = 0; s < 4; ++s) t.stems.emplace_back(gen.signal(n, 0.1), 22050);
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

bool criterion_metrics() {
  Criterion c(5, "metric oracles");
  testing::Gen gen(5);
  bool invariant = true;
  for (int i = 0; i < 100; ++i) {
    const auto n = static_cast<std::size_t>(gen.integer(2, 4000));
    const auto ref = gen.signal(n), est = gen.pcm_signal(n);
    const double base = metrics::si_sdr(ref, est);
    for (double k : {0.5, 2.0, 10.0}) {
      auto scaled = est;
      for (auto& v : scaled) v *= k;
      invariant = invariant && metrics::si_sdr(ref, scaled) == base;
    }
  }
  c.check(invariant, "si_sdr(s, c*s_hat) == si_sdr(s, s_hat) bit for bit, c in {0.5, 2, 10}, 100 random 16-bit estimates");

  const std::vector<double> ref{1.0, 0.0}, est{1.0, 1.0};
  const double unit = metrics::si_sdr(ref, est);
  c.check(std::abs(unit) <= 1e-9, "si_sdr((1,0), (1,1)) = " + fmt(unit) + " dB");

  const std::vector<data::StemSet> tracks{noise_track(gen, 8.0), noise_track(gen, 6.0)};
  const auto report = metrics::evaluate(mixture_copies, tracks);
  double worst = std::abs(report.all_mean);
  for (const auto& s : report.per_stem) worst = std::max(worst, std::abs(s.mean_si_sdri));
  c.check(worst <= 1e-9, "mixture-as-estimate SI-SDRi: max |value| = " + fmt(worst, 3) + " dB");

  int calls = 0;
  const auto ten = metrics::evaluate(
      [&](const dsp::Waveform& m) {
        ++calls;
        return mixture_copies(m);
      },
      {noise_track(gen, 10.0)});
  c.check(ten.chunk_count == 4 && calls == 4, "a 10 s track yields " + std::to_string(ten.chunk_count) + " chunks (expected 4)");
  return c.finish();
}

// ---------------------------------------------------------------------------
// 6. Shape and compression arithmetic.

bool criterion_shapes() {
  Criterion c(6, "shape and compression arithmetic");
  const codec::CodecConfig config;
  const rvq::QuantizerConfig quantizer;
  const int positions = config.context_samples() / config.fold();
  c.check(config.fold() == 200 && positions == 441,
          "4 s at 22050 Hz with f = " + std::to_string(config.fold()) + " gives T_c = " + std::to_string(positions));

  codec::CodecModel model(config, quantizer, 1);
  std::vector<double> tone(static_cast<std::size_t>(config.context_samples()));
  for (std::size_t i = 0; i < tone.size(); ++i) tone[i] = 0.5 * std::sin(2.0 * 3.141592653589793 * 220.0 * static_cast<double>(i) / 22050.0);
  const CodeGrid grid = model.encode_codes(dsp::Waveform(tone, 22050));
  c.check(grid.positions == 441 && grid.depth == 12 && grid.codebook_size == 4096,
          "encoded grid is " + std::to_string(grid.positions) + "x" + std::to_string(grid.depth) + " over " +
              std::to_string(grid.codebook_size) + " codes");

  // 16-bit PCM against 12 depths of 12-bit codes.
  const double rounded_rate = (22050.0 * 16.0) / (110.0 * 12.0 * 12.0);
  const double exact_rate = codec::compression_factor(config, quantizer);
  c.check(std::abs(rounded_rate - 22.27) < 0.005, "compression with the 110 Hz latent rate = " + fmt(rounded_rate, 6) + " (22.27)");
  c.check(std::abs(exact_rate - 22.27) < 0.1,
          "compression with the exact " + fmt(config.latent_rate(), 6) + " Hz latent rate = " + fmt(exact_rate, 6) +
              " (22.27 within 0.1)");
  return c.finish();
}

// ---------------------------------------------------------------------------
// 7. Prior properties.

lm::LMConfig small_prior(int n_cb, int q) {
  lm::LMConfig c;
  c.n_cb = n_cb;
  c.q_depth = q;
  c.model_dim = 16;
  c.spatial_layers = 2;
  c.depth_layers = 2;
  c.heads = 4;
  c.max_positions = 16;
  return c;
}

bool criterion_prior() {
  Criterion c(7, "prior properties");
  testing::Gen gen(7);
  {
    lm::LMModel model(small_prior(4096, 12), 1);
    model.head().weight.setZero();
    model.head().bias.setZero();
    const double nll = model.nll(gen.grid(5, 12, 4096));
    c.check(std::abs(nll - std::log(4096.0)) <= 1e-4, "uniform logits: NLL = " + fmt(nll, 10) + " (ln 4096 = " + fmt(std::log(4096.0), 10) + ")");
  }
  {
    lm::LMModel model(small_prior(32, 3), 2);
    const auto report = lm::causal_consistency_check(model, gen.grid(6, 3, 32));
    c.check(report.ok(), "causal check on a 6x3 grid: " + std::to_string(report.violations.size()) + " violations");
  }
  {
    lm::LMModel model(small_prior(64, 3), 10);
    const std::vector<CodeGrid> grids{gen.grid(8, 3, 64), gen.grid(8, 3, 64), gen.grid(8, 3, 64), gen.grid(8, 3, 64)};
    train::AdamConfig ac;
    ac.learning_rate = 3e-3;
    train::Adam adam(ac);
    for (int step = 0; step < 200; ++step) {
      model.zero_grad();
      model.nll_and_grad(grids);
      adam.step(model.parameters());
    }
    double nll = 0.0;
    for (const auto& g : grids) nll += model.nll(g) / static_cast<double>(grids.size());
    c.check(nll < 0.1, "memorizing four 8x3 grids for 200 steps: NLL = " + fmt(nll, 4) + " (< 0.1)");
  }
  {
    lm::LMModel model(small_prior(32, 3), 11);
    const auto a = lm::generate(model, 12, 42, 1.0, 8);
    const auto b = lm::generate(model, 12, 42, 1.0, 8);
    lm::LMModel twin(small_prior(32, 3), 11);
    const auto d = lm::generate(twin, 12, 42, 1.0, 8);
    c.check(a == b && a == d && rvq::serialize(a) == rvq::serialize(d), "generation with a fixed seed is bit-reproducible");
  }
  return c.finish();
}

// ---------------------------------------------------------------------------
// 8. Determinism and persistence.

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
  return c;
}

std::vector<data::StemSet> small_tracks() {
  std::vector<data::StemSet> out;
  for (std::uint64_t i = 0; i < 3; ++i) out.push_back(data::synthesize_toy_track(100 + i, 2.0, 8000));
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

bool criterion_persistence(const fs::path& work) {
  Criterion c(8, "determinism and persistence");
  const fs::path dir = work / "persistence";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const auto config = small_run();
  train::CodecTrainer a(config, small_tracks());
  for (int i = 0; i < 3; ++i) a.step();
  train::save_checkpoint(dir / "step3.ckpt", a.checkpoint());
  const auto next_a = a.step();
  train::CodecTrainer b(config, small_tracks());
  b.restore(train::load_checkpoint(dir / "step3.ckpt"));
  const auto next_b = b.step();
  const bool same = next_a.loss.spectral == next_b.loss.spectral && next_a.loss.reconstruction == next_b.loss.reconstruction &&
                    next_a.loss.commitment == next_b.loss.commitment && next_a.loss.total == next_b.loss.total;
  c.check(same, "resumed step 4 losses identical: total " + fmt(next_a.loss.total, 17) + " vs " + fmt(next_b.loss.total, 17));

  train::save_checkpoint(dir / "first.ckpt", a.checkpoint());
  train::save_checkpoint(dir / "second.ckpt", train::load_checkpoint(dir / "first.ckpt"));
  const auto first = slurp(dir / "first.ckpt");
  c.check(!first.empty() && first == slurp(dir / "second.ckpt"),
          "codec checkpoint save/load/save is byte-identical (" + std::to_string(first.size()) + " bytes)");

  lm::LMModel prior(small_prior(32, 3), 4);
  train::Checkpoint lm_ckpt;
  lm_ckpt.kind = "lm";
  for (const auto& p : prior.parameters()) lm_ckpt.arrays[p.name] = *p.value;
  train::save_checkpoint(dir / "lm1.ckpt", lm_ckpt);
  train::save_checkpoint(dir / "lm2.ckpt", train::load_checkpoint(dir / "lm1.ckpt"));
  c.check(slurp(dir / "lm1.ckpt") == slurp(dir / "lm2.ckpt"), "prior checkpoint save/load/save is byte-identical");

  testing::Gen gen(8);
  bool grids = true;
  for (int i = 0; i < 20; ++i) {
    const auto g = gen.grid(gen.integer(0, 500), gen.integer(1, 12), gen.integer(1, 4096));
    const auto path = dir / ("g" + std::to_string(i) + ".rqcg");
    rvq::write_code_grid(path, g);
    const auto back = rvq::read_code_grid(path);
    rvq::write_code_grid(dir / "again.rqcg", back);
    grids = grids && back == g && slurp(path) == slurp(dir / "again.rqcg");
  }
  c.check(grids, "code grid files round-trip bit-exactly, 20 random grids");
  return c.finish();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rqsep acceptance suite"};
  int only = 0;
  std::string work = (fs::temp_directory_path() / "rqsep-acceptance").string();
  app.add_option("--criterion", only, "Run a single criterion (1-8); 0 runs all")->check(CLI::Range(0, 8));
  app.add_option("--work", work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  int failed = 0;
  auto run_one = [&](int id, const std::function<bool()>& fn) {
    if (only != 0 && only != id) return;
    try {
      if (!fn()) ++failed;
    } catch (const std::exception& e) {
      std::cout << "  FAIL  exception: " << e.what() << "\nFAIL criterion " << id << std::endl;
      ++failed;
    }
  };
  run_one(1, [&] { return criterion_toy(work); });
  run_one(2, criterion_quantizer);
  run_one(3, criterion_gradients);
  run_one(4, criterion_losses);
  run_one(5, criterion_metrics);
  run_one(6, criterion_shapes);
  run_one(7, criterion_prior);
  run_one(8, [&] { return criterion_persistence(work); });
  return failed == 0 ? 0 : 1;
}
