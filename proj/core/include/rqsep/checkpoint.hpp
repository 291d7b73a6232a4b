// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

// Self-describing checkpoint container; byte layout in docs/checkpoint-format.md.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "rqsep/tensor.hpp"

namespace rqsep::train {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;                              // "codec" or "lm"
  std::string config;                            // INI text
  std::map<std::string, std::string> metadata;  // step, RNG state, counters
  std::map<std::string, Matrix> arrays;         // parameters, buffers, optimizer moments
};

std::string serialize(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a over names and raw values, for detecting parameter changes.
std::uint64_t hash_arrays(const std::map<std::string, Matrix>& arrays);

}  // namespace rqsep::train
