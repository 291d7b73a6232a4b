// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic multi-stem music: a square-wave bass line, filtered-noise drum
// patterns, strummed sawtooth chords and a sine melody, all driven by one
// per-track seed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "rqsep/data.hpp"
#include "rqsep/error.hpp"
#include "rqsep/wav.hpp"

namespace rqsep::data {
namespace {

namespace fs = std::filesystem;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double midi_to_hz(double midi) { return 440.0 * std::pow(2.0, (midi - 69.0) / 12.0); }

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Additive band-limited oscillator: odd harmonics only for a square wave,
// all harmonics for a sawtooth, each with amplitude 1/k up to `max_hz`.
void add_partials(std::vector<double>& out, std::size_t start, std::size_t len, double f0, double amp,
                  bool odd_only, double max_hz, int rate, double attack_s, double decay_s) {
  if (start >= out.size()) return;
  const std::size_t end = std::min(out.size(), start + len);
  const std::size_t release = static_cast<std::size_t>(0.01 * rate);
  std::vector<double> env(end - start);
  for (std::size_t i = 0; i < env.size(); ++i) {
    const double t = static_cast<double>(i) / rate;
    env[i] = std::min(1.0, t / attack_s) * std::exp(-t / decay_s);
    const std::size_t to_end = env.size() - i;
    if (to_end < release) env[i] *= static_cast<double>(to_end) / release;
  }
  for (int k = 1; k * f0 < std::min(max_hz, rate / 2.0); ++k) {
    if (odd_only && k % 2 == 0) continue;
    const double a = amp / k;
    const double w = kTwoPi * k * f0 / rate;
    // Phasor recurrence; drift over a few seconds stays far below 1e-9.
    const double cw = std::cos(w), sw = std::sin(w);
    double c = 1.0, s = 0.0;
    for (std::size_t i = 0; i < env.size(); ++i) {
      out[start + i] += a * env[i] * s;
      const double nc = c * cw - s * sw;
      s = s * cw + c * sw;
      c = nc;
    }
  }
}

// One-pole low-pass followed optionally by subtracting a second one-pole
// output (a crude band-pass).
std::vector<double> filtered_noise(Rng& rng, std::size_t len, int rate, double lo_hz, double hi_hz) {
  std::vector<double> x(len);
  for (auto& v : x) v = normal(rng);
  auto one_pole = [rate](const std::vector<double>& in, double fc) {
    const double a = std::exp(-kTwoPi * fc / rate);
    std::vector<double> y(in.size());
    double s = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) {
      s = (1.0 - a) * in[i] + a * s;
      y[i] = s;
    }
    return y;
  };
  std::vector<double> lp = hi_hz < rate / 2.0 ? one_pole(x, hi_hz) : x;
  if (lo_hz > 0.0) {
    const auto lower = one_pole(lp, lo_hz);
    for (std::size_t i = 0; i < len; ++i) lp[i] -= lower[i];
  }
  return lp;
}

void add_hit(std::vector<double>& out, std::size_t start, const std::vector<double>& noise, double amp,
             double decay_s, int rate) {
  const std::size_t n = std::min(noise.size(), out.size() - std::min(out.size(), start));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    out[start + i] += amp * noise[i] * std::exp(-t / decay_s);
  }
}

void normalize_rms(std::vector<double>& x, double target) {
  double e = 0.0;
  for (double v : x) e += v * v;
  const double rms = std::sqrt(e / std::max<std::size_t>(1, x.size()));
  if (rms > 0.0) {
    for (double& v : x) v *= target / rms;
  }
}

constexpr std::array<int, 7> kMajor{0, 2, 4, 5, 7, 9, 11};
constexpr std::array<int, 5> kPentatonic{0, 2, 4, 7, 9};

}  // namespace

StemSet synthesize_toy_track(std::uint64_t track_seed, double seconds, int rate) {
  Rng rng(track_seed);
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  const double bpm = uniform(rng, 90.0, 140.0);
  const double beat = 60.0 / bpm;
  const auto beat_samples = static_cast<std::size_t>(beat * rate);
  const auto sixteenth = beat_samples / 4;
  const int root = static_cast<int>(uniform_index(rng, 12));
  const std::size_t beats = n / beat_samples + 1;

  std::vector<double> bass(n, 0.0), drums(n, 0.0), guitar(n, 0.0), piano(n, 0.0);

  // Bass: one note per beat (occasionally two eighths), MIDI 33..47.
  for (std::size_t b = 0; b < beats; ++b) {
    const int degree = kMajor[uniform_index(rng, kMajor.size())];
    const double midi = 33 + (root + degree) % 12;
    const std::size_t start = b * beat_samples;
    if (uniform01(rng) < 0.25) {
      add_partials(bass, start, beat_samples / 2, midi_to_hz(midi), 1.0, true, 2500.0, rate, 0.005, 0.6);
      add_partials(bass, start + beat_samples / 2, beat_samples / 2, midi_to_hz(midi + 7), 1.0, true, 2500.0, rate, 0.005, 0.6);
    } else {
      add_partials(bass, start, beat_samples, midi_to_hz(midi), 1.0, true, 2500.0, rate, 0.005, 0.6);
    }
  }

  // Drums: a 16-step pattern repeated per bar; kick, snare and hat are
  // low-, band- and high-passed noise bursts.
  std::array<int, 16> pattern{};
  for (int s = 0; s < 16; ++s) {
    int hit = 0;
    if (s % 8 == 0 || (s % 4 == 2 && uniform01(rng) < 0.2)) hit |= 1;
    if (s % 8 == 4 || (uniform01(rng) < 0.08)) hit |= 2;
    if (s % 2 == 0 ? uniform01(rng) < 0.9 : uniform01(rng) < 0.3) hit |= 4;
    pattern[static_cast<std::size_t>(s)] = hit;
  }
  const std::size_t steps = n / sixteenth + 1;
  for (std::size_t s = 0; s < steps; ++s) {
    const int hit = pattern[s % 16];
    const std::size_t start = s * sixteenth;
    if (hit & 1) add_hit(drums, start, filtered_noise(rng, rate / 4, rate, 0.0, 120.0), 6.0, 0.08, rate);
    if (hit & 2) add_hit(drums, start, filtered_noise(rng, rate / 4, rate, 900.0, 5000.0), 1.0, 0.09, rate);
    if (hit & 4) add_hit(drums, start, filtered_noise(rng, rate / 16, rate, 7000.0, rate / 2.0), 0.6, 0.02, rate);
  }

  // Guitar: a strummed sawtooth triad every two beats, MIDI 48..71.
  for (std::size_t b = 0; b < beats; b += 2) {
    const int degree = kMajor[uniform_index(rng, kMajor.size())];
    const int chord_root = 48 + (root + degree) % 12;
    const std::array<int, 3> chord{chord_root, chord_root + (degree == 2 || degree == 4 || degree == 9 ? 3 : 4), chord_root + 7};
    for (std::size_t v = 0; v < chord.size(); ++v) {
      const std::size_t start = b * beat_samples + v * static_cast<std::size_t>(0.012 * rate);
      add_partials(guitar, start, 2 * beat_samples, midi_to_hz(chord[v]), 1.0, false, 4000.0, rate, 0.003, 0.5);
    }
  }

  // Piano: a sine melody of eighth and sixteenth notes with rests, MIDI 72..95.
  for (std::size_t pos = 0; pos < n;) {
    const std::size_t len = uniform01(rng) < 0.5 ? sixteenth * 2 : sixteenth;
    if (uniform01(rng) > 0.15) {
      const int degree = kPentatonic[uniform_index(rng, kPentatonic.size())];
      const int octave = static_cast<int>(uniform_index(rng, 2));
      const double midi = 72 + 12 * octave + (root + degree) % 12;
      add_partials(piano, pos, len, midi_to_hz(midi), 1.0, true, midi_to_hz(midi) * 1.5, rate, 0.003, 0.25);
    }
    pos += len;
  }

  StemSet set;
  set.names = default_stem_names();
  std::vector<std::vector<double>*> order{&bass, &drums, &guitar, &piano};
  for (auto* s : order) {
    normalize_rms(*s, 0.1 * uniform(rng, 0.7, 1.3));
    set.stems.emplace_back(std::move(*s), rate);
  }
  set.mixture.sample_rate = rate;
  set.remix();
  return set;
}

DatasetSplit make_toy_dataset(const ToyDatasetOptions& options, const fs::path& out_dir) {
  const SplitSizes sizes = split_sizes(static_cast<std::size_t>(std::max(0, options.n_tracks)));
  try {
    fs::create_directories(out_dir);
  } catch (const fs::filesystem_error& e) {
    fail(ErrorKind::kIo, "cannot create output directory " + out_dir.string() + ": " + e.what());
  }

  DatasetSplit split;
  for (int i = 0; i < options.n_tracks; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "Track%05d", i + 1);
    const fs::path track_dir = out_dir / name;
    try {
      fs::create_directories(track_dir / "stems");
    } catch (const fs::filesystem_error& e) {
      fail(ErrorKind::kIo, "cannot create track directory " + track_dir.string() + ": " + e.what());
    }

    const std::uint64_t track_seed = options.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(i) + 1;
    StemSet set = synthesize_toy_track(track_seed, options.seconds, options.sample_rate);

    double peak = 0.0;
    for (double v : set.mixture.samples) peak = std::max(peak, std::abs(v));
    const double gain = peak > 0.0 ? 0.9 / peak : 1.0;

    std::vector<std::int32_t> mix(set.length(), 0);
    for (std::size_t s = 0; s < set.size(); ++s) {
      std::vector<std::int16_t> pcm(set.length());
      for (std::size_t k = 0; k < pcm.size(); ++k) {
        pcm[k] = to_pcm16(set.stems[s].samples[k] * gain);
        mix[k] += pcm[k];
      }
      write_wav_pcm16(track_dir / "stems" / (set.names[s] + ".wav"), pcm, options.sample_rate);
    }
    std::vector<std::int16_t> mix_pcm(mix.size());
    for (std::size_t k = 0; k < mix.size(); ++k) {
      mix_pcm[k] = static_cast<std::int16_t>(std::clamp(mix[k], -32768, 32767));
    }
    write_wav_pcm16(track_dir / "mix.wav", mix_pcm, options.sample_rate);

    const auto idx = static_cast<std::size_t>(i);
    if (idx < sizes.train) split.train.push_back(track_dir);
    else if (idx < sizes.train + sizes.validation) split.validation.push_back(track_dir);
    else split.test.push_back(track_dir);
  }
  write_manifest(out_dir / "manifest.txt", split);
  return split;
}

}  // namespace rqsep::data
