// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "rqsep/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "rqsep/error.hpp"
#include "rqsep/wav.hpp"

namespace rqsep::data {

namespace fs = std::filesystem;

void StemSet::remix() {
  if (stems.empty()) {
    mixture = dsp::Waveform({}, mixture.sample_rate);
    return;
  }
  std::vector<double> sum(stems.front().size(), 0.0);
  for (const auto& s : stems) {
    if (s.size() != sum.size()) fail(ErrorKind::kShape, "stems must have equal length");
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += s.samples[i];
  }
  mixture = dsp::Waveform(std::move(sum), stems.front().sample_rate);
}

const std::vector<fs::path>& DatasetSplit::by_name(const std::string& split) const {
  if (split == "train") return train;
  if (split == "validation") return validation;
  if (split == "test") return test;
  fail(ErrorKind::kInvalidArgument, "unknown split '" + split + "' (expected train, validation or test)");
}

void write_manifest(const fs::path& path, const DatasetSplit& split) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write manifest " + path.string());
  const fs::path base = path.parent_path();
  auto section = [&](const char* name, const std::vector<fs::path>& tracks) {
    out << '[' << name << "]\n";
    for (const auto& t : tracks) {
      const auto rel = base.empty() ? t : t.lexically_relative(base);
      out << (rel.empty() ? t : rel).generic_string() << '\n';
    }
  };
  section("train", split.train);
  section("validation", split.validation);
  section("test", split.test);
}

DatasetSplit read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open manifest " + path.string());
  DatasetSplit split;
  std::vector<fs::path>* current = nullptr;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    line = line.substr(first);
    if (line.front() == '[') {
      if (line == "[train]") current = &split.train;
      else if (line == "[validation]") current = &split.validation;
      else if (line == "[test]") current = &split.test;
      else fail(ErrorKind::kFormat, path.string() + ":" + std::to_string(line_no) + ": unknown section " + line);
      continue;
    }
    if (current == nullptr) {
      fail(ErrorKind::kFormat, path.string() + ":" + std::to_string(line_no) + ": track listed before any section");
    }
    fs::path p(line);
    current->push_back(p.is_absolute() ? p : path.parent_path() / p);
  }
  return split;
}

StemSet load_track(const fs::path& dir, const LoadOptions& options) {
  StemSet set;
  set.names = options.stem_names;
  for (const auto& name : options.stem_names) {
    const fs::path file = dir / "stems" / (name + ".wav");
    if (!fs::exists(file)) fail(ErrorKind::kIo, "missing stem file " + file.string());
    set.stems.push_back(dsp::resample(read_wav(file), options.sample_rate));
  }
  std::size_t shortest = set.stems.empty() ? 0 : set.stems.front().size();
  for (const auto& s : set.stems) shortest = std::min(shortest, s.size());
  for (auto& s : set.stems) s.samples.resize(shortest);
  set.mixture.sample_rate = options.sample_rate;
  set.remix();

  double peak = 0.0;
  for (double v : set.mixture.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    const double gain = options.peak / peak;
    for (auto& s : set.stems) {
      for (double& v : s.samples) v *= gain;
    }
    set.remix();
  }
  return set;
}

std::vector<std::size_t> window_offsets(std::size_t length, std::size_t window, std::size_t hop) {
  std::vector<std::size_t> offsets;
  if (window == 0 || hop == 0) return offsets;
  for (std::size_t off = 0; off + window <= length; off += hop) offsets.push_back(off);
  return offsets;
}

std::vector<StemSet> chunk(const StemSet& track, double seconds, double hop_seconds) {
  if (!(hop_seconds > 0.0)) fail(ErrorKind::kInvalidArgument, "chunk: hop must be positive");
  if (!(seconds > 0.0)) fail(ErrorKind::kInvalidArgument, "chunk: window must be positive");
  const int rate = track.sample_rate();
  const auto window = static_cast<std::size_t>(std::llround(seconds * rate));
  const auto hop = static_cast<std::size_t>(std::llround(hop_seconds * rate));

  std::vector<StemSet> chunks;
  for (std::size_t off : window_offsets(track.length(), window, hop)) {
    StemSet c;
    c.names = track.names;
    auto slice = [&](const dsp::Waveform& w) {
      return dsp::Waveform(std::vector<double>(w.samples.begin() + static_cast<std::ptrdiff_t>(off),
                                               w.samples.begin() + static_cast<std::ptrdiff_t>(off + window)),
                           w.sample_rate);
    };
    for (const auto& s : track.stems) c.stems.push_back(slice(s));
    c.mixture = slice(track.mixture);
    chunks.push_back(std::move(c));
  }
  return chunks;
}

SplitSizes split_sizes(std::size_t n_tracks) {
  const std::size_t held = std::max<std::size_t>(1, (n_tracks * 15) / 100);
  if (n_tracks < 3) fail(ErrorKind::kInvalidArgument, "toy dataset needs at least 3 tracks");
  return {n_tracks - 2 * held, held, held};
}

}  // namespace rqsep::data
