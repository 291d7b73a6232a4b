// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration: INI text with one section per module. The schema is
// listed in docs/config.md; unknown sections and keys are rejected.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rqsep/codec.hpp"
#include "rqsep/lm.hpp"
#include "rqsep/metrics.hpp"
#include "rqsep/rvq.hpp"

namespace rqsep::train {

struct TrainSettings {
  int batch_size = 16;
  double learning_rate = 1e-3;
  int max_steps = 1000;
  int checkpoint_every = 500;
  int log_every = 10;
  std::uint64_t seed = 0;
  double grad_clip = 5.0;
  int warmup_steps = 0;
  double final_lr_scale = 1.0;  // linear decay to this fraction of the rate at max_steps
  int val_chunks = 0;           // validation chunks scored at each checkpoint
};

struct LMTrainSettings {
  int batch_size = 16;
  double learning_rate = 1e-3;
  int max_steps = 1000;
  int checkpoint_every = 500;
  int log_every = 10;
  double chunk_hop_seconds = 2.0;
};

struct DataSettings {
  std::vector<std::string> stems = data::default_stem_names();
  double peak = 0.95;
};

struct Config {
  codec::CodecConfig codec;
  rvq::QuantizerConfig rvq;
  codec::LossConfig loss;
  TrainSettings train;
  lm::LMConfig lm;
  LMTrainSettings lm_train;
  DataSettings data;
  metrics::EvalOptions eval;

  /// Throws kConfig naming the first invalid field.
  void validate() const;
};

/// Parses INI text on top of the defaults.
Config parse_config(const std::string& text);
Config load_config(const std::filesystem::path& path);
/// Canonical INI text listing every field.
std::string to_ini(const Config& config);
/// The named sections only, in canonical form.
std::string to_ini(const Config& config, const std::vector<std::string>& sections);

/// Sets "section.key" (or a bare key that names exactly one field).
void set_field(Config& config, const std::string& key, const std::string& value);
/// Every "section.key" name, in schema order.
std::vector<std::string> field_names();

/// Throws kConfig naming the first field of the given sections that differs.
void require_same(const Config& expected, const Config& actual, const std::vector<std::string>& sections,
                  const std::string& context);

inline const std::vector<std::string>& codec_sections() {
  static const std::vector<std::string> s{"codec", "rvq"};
  return s;
}

}  // namespace rqsep::train
