// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

// Whole-track commands built on the codec and the prior.

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rqsep/config.hpp"
#include "rqsep/metrics.hpp"

namespace rqsep::train {

/// Chunk start offsets covering a track: a regular grid with the given hop,
/// plus one chunk flush with the end when the grid falls short of it.
std::vector<std::size_t> cover_offsets(std::size_t length, std::size_t window, std::size_t hop);

/// Per-chunk cross-fade weights (one row per offset, `window` columns).
/// Chunks ramp triangularly across overlaps and keep weight 1 over the
/// track edges; columns are normalized so the weights covering any sample
/// sum to 1.
std::vector<std::vector<double>> crossfade_weights(std::size_t length, std::size_t window,
                                                   const std::vector<std::size_t>& offsets);

/// Chunked separation with overlap-add. Stems have exactly the mixture's length.
data::StemSet separate_track(const metrics::Separator& separate, const dsp::Waveform& mixture, double chunk_seconds,
                             double hop_seconds);

/// separate: reads the mixture, writes <out_dir>/<stem>.wav.
std::vector<std::filesystem::path> separate_file(const std::filesystem::path& codec_checkpoint,
                                                 const std::filesystem::path& mixture_wav,
                                                 const std::filesystem::path& out_dir);

/// evaluate: scores the test split of a manifest and writes
/// <out_dir>/report.txt and <out_dir>/report.kv. Evaluation options default
/// to the checkpoint's [eval] section.
metrics::EvalReport evaluate_file(const std::filesystem::path& codec_checkpoint, const std::filesystem::path& manifest,
                                  const std::filesystem::path& out_dir, const metrics::EvalOptions* options = nullptr);

/// generate: samples a code grid, decodes it with skips off, writes the
/// summed track to out_wav and the stems next to it.
CodeGrid generate_file(const std::filesystem::path& lm_checkpoint, const std::filesystem::path& codec_checkpoint,
                       double seconds, std::uint64_t seed, const std::filesystem::path& out_wav);

/// encode: zero-pads the mixture to a multiple of the fold and writes its grid.
CodeGrid encode_file(const std::filesystem::path& codec_checkpoint, const std::filesystem::path& mixture_wav,
                     const std::filesystem::path& out_grid);

/// decode: renders a grid with skips off to <out_dir>/<stem>.wav and mix.wav.
void decode_file(const std::filesystem::path& codec_checkpoint, const std::filesystem::path& grid_path,
                 const std::filesystem::path& out_dir);

}  // namespace rqsep::train
