// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rqsep/dsp.hpp"

namespace rqsep::data {

// RIFF/WAVE PCM 16-bit. Multichannel input is downmixed by averaging.
// Samples map to [-1, 1) by 1/32768.
dsp::Waveform read_wav(const std::filesystem::path& path);

// Mono 16-bit PCM; round half away from zero, clipped to the int16 range.
void write_wav(const std::filesystem::path& path, const dsp::Waveform& w);

std::int16_t to_pcm16(double sample);
void write_wav_pcm16(const std::filesystem::path& path, std::span<const std::int16_t> pcm, int sample_rate);

}  // namespace rqsep::data
