// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rqsep/dsp.hpp"

namespace rqsep::data {

inline const std::vector<std::string>& default_stem_names() {
  static const std::vector<std::string> names{"bass", "drums", "guitar", "piano"};
  return names;
}

// Named stems in a fixed order plus their sum.
struct StemSet {
  std::vector<std::string> names;
  std::vector<dsp::Waveform> stems;
  dsp::Waveform mixture;

  std::size_t size() const { return stems.size(); }
  std::size_t length() const { return mixture.size(); }
  int sample_rate() const { return mixture.sample_rate; }

  // Recomputes the mixture as the elementwise sum of the stems.
  void remix();
};

struct DatasetSplit {
  std::vector<std::filesystem::path> train;
  std::vector<std::filesystem::path> validation;
  std::vector<std::filesystem::path> test;

  const std::vector<std::filesystem::path>& by_name(const std::string& split) const;
};

// Manifest: "[train]" / "[validation]" / "[test]" sections, one track
// directory per line, relative paths resolved against the manifest's folder.
void write_manifest(const std::filesystem::path& path, const DatasetSplit& split);
DatasetSplit read_manifest(const std::filesystem::path& path);

struct LoadOptions {
  std::vector<std::string> stem_names = default_stem_names();
  int sample_rate = 22050;
  double peak = 0.95;
};

/// Reads <dir>/stems/<name>.wav for every configured stem, resamples,
/// truncates to the shortest stem, sums the mixture and peak-normalizes it
/// with one gain shared by all stems.
StemSet load_track(const std::filesystem::path& dir, const LoadOptions& options = {});

/// Aligned windows over stems and mixture; a trailing partial window is dropped.
std::vector<StemSet> chunk(const StemSet& track, double seconds, double hop_seconds);

/// Window start offsets (in samples) used by chunk().
std::vector<std::size_t> window_offsets(std::size_t length, std::size_t window, std::size_t hop);

struct ToyDatasetOptions {
  int n_tracks = 60;
  double seconds = 12.0;
  std::uint64_t seed = 7;
  int sample_rate = 22050;
};

/// Synthetic four-instrument dataset in the Slakh track layout, split 70/15/15.
/// Also writes <track>/mix.wav (the integer sum of the stem PCM) and
/// <out_dir>/manifest.txt.
DatasetSplit make_toy_dataset(const ToyDatasetOptions& options, const std::filesystem::path& out_dir);

/// The four synthetic instruments for one track, before any normalization.
StemSet synthesize_toy_track(std::uint64_t track_seed, double seconds, int sample_rate);

/// Split sizes for n tracks with the 70/15/15 ratio (train gets the remainder).
struct SplitSizes {
  std::size_t train, validation, test;
};
SplitSizes split_sizes(std::size_t n_tracks);

}  // namespace rqsep::data
