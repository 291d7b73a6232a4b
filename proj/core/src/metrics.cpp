// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "rqsep/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "rqsep/error.hpp"

namespace rqsep::metrics {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) fail(ErrorKind::kShape, "si_sdr: reference has " + std::to_string(a) + " samples, estimate " + std::to_string(b));
}

std::string format_db(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

double si_sdr(std::span<const double> reference, std::span<const double> estimate) {
  check_lengths(reference.size(), estimate.size());
  // Dividing by the peak makes c * estimate and estimate identical inputs
  // whenever the scaled samples are exact: (c e) / (c m) rounds like e / m.
  double peak = 0.0;
  for (double v : estimate) peak = std::max(peak, std::abs(v));
  if (!std::isfinite(peak)) fail(ErrorKind::kNumeric, "si_sdr: non-finite input");
  double ref_energy = 0.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    ref_energy += reference[i] * reference[i];
    if (peak > 0.0) dot += reference[i] * (estimate[i] / peak);
  }
  if (ref_energy == 0.0) fail(ErrorKind::kInvalidArgument, "si_sdr: reference is all zeros");
  if (peak == 0.0) return -kClampDb;
  const double alpha = dot / ref_energy;
  double signal = 0.0;
  double error = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = alpha * reference[i];
    const double e = s - estimate[i] / peak;
    signal += s * s;
    error += e * e;
  }
  if (!std::isfinite(signal) || !std::isfinite(error)) fail(ErrorKind::kNumeric, "si_sdr: non-finite input");
  if (error <= 1e-12 * signal) return kClampDb;
  if (signal <= 1e-12 * error) return -kClampDb;
  return std::clamp(10.0 * std::log10(signal / error), -kClampDb, kClampDb);
}

double si_sdr(const dsp::Waveform& reference, const dsp::Waveform& estimate) {
  return si_sdr(std::span<const double>(reference.samples), std::span<const double>(estimate.samples));
}

double si_sdri(std::span<const double> reference, std::span<const double> estimate, std::span<const double> mixture) {
  check_lengths(reference.size(), mixture.size());
  return si_sdr(reference, estimate) - si_sdr(reference, mixture);
}

double si_sdri(const dsp::Waveform& reference, const dsp::Waveform& estimate, const dsp::Waveform& mixture) {
  return si_sdri(std::span<const double>(reference.samples), std::span<const double>(estimate.samples),
                 std::span<const double>(mixture.samples));
}

double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

const StemScore& EvalReport::stem(const std::string& name) const {
  for (const auto& s : per_stem) {
    if (s.name == name) return s;
  }
  fail(ErrorKind::kInvalidArgument, "no stem named '" + name + "' in the report");
}

EvalReport evaluate(const Separator& separate, const std::vector<data::StemSet>& tracks, const EvalOptions& options) {
  EvalReport report;
  std::vector<double> sums;
  for (const auto& track : tracks) {
    if (report.per_stem.empty()) {
      for (const auto& n : track.names) report.per_stem.push_back({n, 0.0, 0});
      sums.assign(track.names.size(), 0.0);
    } else if (track.names.size() != report.per_stem.size()) {
      fail(ErrorKind::kShape, "evaluate: tracks have different stem sets");
    }
    const auto window = static_cast<std::size_t>(std::llround(options.chunk_seconds * track.sample_rate()));
    if (track.length() < window) {
      std::cerr << "warning: skipping a track of " << track.mixture.seconds() << " s, shorter than one "
                << options.chunk_seconds << " s chunk\n";
      ++report.skipped_tracks;
      continue;
    }
    for (const auto& c : data::chunk(track, options.chunk_seconds, options.hop_seconds)) {
      std::vector<bool> active(c.size());
      int n_active = 0;
      for (std::size_t s = 0; s < c.size(); ++s) {
        active[s] = rms(c.stems[s].samples) > options.activity_threshold;
        n_active += active[s] ? 1 : 0;
      }
      if (n_active < options.min_active) continue;
      const data::StemSet est = separate(c.mixture);
      if (est.size() != c.size()) fail(ErrorKind::kShape, "evaluate: separator returned the wrong number of stems");
      ++report.chunk_count;
      for (std::size_t s = 0; s < c.size(); ++s) {
        if (!active[s]) continue;
        sums[s] += si_sdri(c.stems[s], est.stems[s], c.mixture);
        ++report.per_stem[s].active_chunks;
      }
    }
  }
  int counted = 0;
  for (std::size_t s = 0; s < report.per_stem.size(); ++s) {
    auto& score = report.per_stem[s];
    if (score.active_chunks == 0) continue;
    score.mean_si_sdri = sums[s] / score.active_chunks;
    report.all_mean += score.mean_si_sdri;
    ++counted;
  }
  if (counted > 0) report.all_mean /= counted;
  return report;
}

std::string render_table(const EvalReport& report, const std::string& label) {
  std::ostringstream head;
  std::ostringstream rule;
  std::ostringstream row;
  auto cell = [](std::ostringstream& os, const std::string& text, std::size_t width) {
    os << " | " << text << std::string(width > text.size() ? width - text.size() : 0, ' ');
  };
  const std::size_t first = std::max<std::size_t>(label.size(), 5);
  head << "Model" << std::string(first - 5, ' ');
  rule << std::string(first, '-');
  row << label << std::string(first - label.size(), ' ');
  for (const auto& s : report.per_stem) {
    std::string name = s.name;
    if (!name.empty()) name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
    const std::size_t w = std::max<std::size_t>(name.size(), 7);
    cell(head, name, w);
    rule << "-|-" << std::string(w, '-');
    cell(row, s.active_chunks > 0 ? format_db(s.mean_si_sdri) : "n/a", w);
  }
  cell(head, "All", 7);
  rule << "-|-" << std::string(7, '-');
  cell(row, format_db(report.all_mean), 7);
  std::ostringstream out;
  out << "SI-SDRi (dB) over " << report.chunk_count << " chunks\n"
      << head.str() << "\n" << rule.str() << "\n" << row.str() << "\n";
  return out.str();
}

std::string render_key_values(const EvalReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "chunk_count=" << report.chunk_count << "\n";
  out << "skipped_tracks=" << report.skipped_tracks << "\n";
  for (const auto& s : report.per_stem) {
    out << "si_sdri." << s.name << "=" << s.mean_si_sdri << "\n";
    out << "active_chunks." << s.name << "=" << s.active_chunks << "\n";
  }
  out << "si_sdri.all=" << report.all_mean << "\n";
  return out.str();
}

}  // namespace rqsep::metrics
