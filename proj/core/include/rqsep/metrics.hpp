// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rqsep/data.hpp"

namespace rqsep::metrics {

inline constexpr double kClampDb = 100.0;

/// Scale-invariant SDR in dB, clamped to [-100, 100].
double si_sdr(std::span<const double> reference, std::span<const double> estimate);
double si_sdr(const dsp::Waveform& reference, const dsp::Waveform& estimate);

/// si_sdr(reference, estimate) - si_sdr(reference, mixture).
double si_sdri(std::span<const double> reference, std::span<const double> estimate, std::span<const double> mixture);
double si_sdri(const dsp::Waveform& reference, const dsp::Waveform& estimate, const dsp::Waveform& mixture);

double rms(std::span<const double> x);

struct EvalOptions {
  double chunk_seconds = 4.0;
  double hop_seconds = 2.0;
  double activity_threshold = 1e-4;
  int min_active = 2;
};

struct StemScore {
  std::string name;
  double mean_si_sdri = 0.0;  // over the chunks where this stem was active
  int active_chunks = 0;
};

struct EvalReport {
  std::vector<StemScore> per_stem;
  double all_mean = 0.0;  // mean of the per-stem means that have at least one chunk
  int chunk_count = 0;
  int skipped_tracks = 0;  // shorter than one chunk

  const StemScore& stem(const std::string& name) const;
};

/// Maps a mixture chunk to estimated stems in the order of the test tracks.
using Separator = std::function<data::StemSet(const dsp::Waveform& mixture)>;

/// Sliding-window evaluation. A chunk counts when at least min_active stems
/// have RMS above the threshold; silent stems in a counted chunk are left
/// out of that stem's average.
EvalReport evaluate(const Separator& separate, const std::vector<data::StemSet>& tracks, const EvalOptions& options = {});

/// Plain-text table with one column per stem plus "All".
std::string render_table(const EvalReport& report, const std::string& label = "RQ-VAE");
/// One key=value pair per line; see docs/report-format.md.
std::string render_key_values(const EvalReport& report);

}  // namespace rqsep::metrics
