// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "rqsep/adam.hpp"
#include "rqsep/checkpoint.hpp"
#include "rqsep/codec.hpp"
#include "rqsep/config.hpp"
#include "rqsep/lm.hpp"

namespace rqsep::train {

struct StepLog {
  long long step = 0;
  codec::LossBreakdown loss;
  double grad_norm = 0.0;
  int reinitialized = 0;
};

/// Learning rate after `step` completed steps under the warmup/decay settings.
double scheduled_learning_rate(const TrainSettings& settings, long long step);

// Codec training state: model, optimizer, quantizer usage and the sampling
// RNG. Checkpointing and restoring it reproduces the following steps
// bit-exactly.
class CodecTrainer {
 public:
  CodecTrainer(const Config& config, std::vector<data::StemSet> train_tracks,
               std::vector<data::StemSet> validation_tracks = {});

  /// One optimization step. The first call runs the k-means initialization.
  StepLog step();
  /// Mean validation loss over the configured validation chunks.
  codec::LossBreakdown validate();

  Checkpoint checkpoint();
  /// Loads a checkpoint written by checkpoint(); codec and rvq sections must
  /// match this trainer's config.
  void restore(const Checkpoint& checkpoint);

  long long steps() const { return step_; }
  int kmeans_inits() const { return kmeans_inits_; }
  codec::CodecModel& model() { return model_; }
  const Config& config() const { return config_; }

  /// Random aligned crops of training tracks.
  codec::TrainingBatch sample_batch();

 private:
  void init_codebooks();

  Config config_;
  std::vector<data::StemSet> train_;
  std::vector<data::StemSet> validation_chunks_;
  codec::CodecModel model_;
  Adam adam_;
  Rng rng_;
  long long step_ = 0;
  int kmeans_inits_ = 0;
};

/// Writes a codec checkpoint to <out_dir>/codec.ckpt, plus codec-<step>.ckpt
/// every checkpoint_every steps. Returns the final checkpoint path.
std::filesystem::path train_codec(const Config& config, const std::filesystem::path& manifest,
                                  const std::filesystem::path& out_dir, std::ostream& log,
                                  const std::optional<std::filesystem::path>& resume = std::nullopt);

/// Rebuilds a codec from a checkpoint. When `expected` is given its codec and
/// rvq sections must match the checkpoint's.
codec::CodecModel load_codec(const std::filesystem::path& path, Config* config_out = nullptr,
                             const Config* expected = nullptr);
lm::LMModel load_lm(const std::filesystem::path& path, Config* config_out = nullptr);

std::map<std::string, Matrix> codec_arrays(codec::CodecModel& model);

/// Grid cache file: all training grids of one codec, tagged with its hash.
void write_grid_cache(const std::filesystem::path& path, std::uint64_t codec_hash, const std::vector<CodeGrid>& grids);
/// Returns nullopt when the file is missing or belongs to another codec.
std::optional<std::vector<CodeGrid>> read_grid_cache(const std::filesystem::path& path, std::uint64_t codec_hash);

/// Encodes the training split with the frozen codec, caches the grids in
/// <out_dir>/grids.cache and fits the prior. Writes <out_dir>/lm.ckpt.
std::filesystem::path train_lm(const Config& config, const std::filesystem::path& codec_checkpoint,
                               const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
                               std::ostream& log);

}  // namespace rqsep::train
