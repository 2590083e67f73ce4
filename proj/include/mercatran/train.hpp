// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

// Single-writer training loop: deterministic shuffle per (seed, epoch),
// teacher-forced multi-step contrastive loss, Adam under the warmup schedule,
// checkpoint after every epoch.

#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include <nlohmann/json.hpp>

#include "mercatran/checkpoint.hpp"
#include "mercatran/model.hpp"
#include "mercatran/preprocess.hpp"

namespace mercatran {

struct TrainOptions {
  int epochs = 1;
  // Empty disables checkpointing. Otherwise `<dir>/last` is written after
  // every epoch and `<dir>/best` whenever the epoch loss improves.
  std::filesystem::path checkpoint_dir;
  // Continue from `<dir>/last` when it exists; its config must match.
  bool resume = false;
  // Stop once this many epochs are complete (0 = run to `epochs`). Models an
  // interrupted run; the schedule still sees the full epoch budget.
  int stop_after_epoch = 0;
  nlohmann::json vocab;  // stored in checkpoints when non-null
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  MercatranModel<float> model;
  TrainingProgress progress;
};

TrainResult Train(const std::vector<SbrExample>& examples, const ModelConfig& config, const TrainOptions& options);

// Batch order for one epoch (0-based), a permutation of [0, n).
std::vector<std::size_t> EpochOrder(std::size_t n, std::uint64_t seed, int epoch);

}  // namespace mercatran
