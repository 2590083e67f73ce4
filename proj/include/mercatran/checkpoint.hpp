// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

// Checkpoint file: magic "MTRN1", u64 manifest length, JSON manifest
// (tensor names, shapes, dtype, byte offsets, config echo, training
// progress), then raw little-endian float32 payloads at the listed offsets.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mercatran/model.hpp"
#include "mercatran/nn/adam.hpp"

namespace mercatran {

struct EpochLog {
  int epoch = 0;          // 1-based
  std::int64_t step = 0;  // optimizer steps taken after this epoch
  double loss = 0.0;      // mean training loss over the epoch
  double lr = 0.0;        // learning rate of the epoch's last step

  bool operator==(const EpochLog&) const = default;
};

struct TrainingProgress {
  int epochs_completed = 0;
  std::vector<EpochLog> log;
  nn::AdamState<float> adam;
};

struct Checkpoint {
  MercatranModel<float> model;
  std::optional<TrainingProgress> progress;
  nlohmann::json vocab;  // null when the trainer was given no vocabulary
  std::string model_version;
};

void SaveCheckpoint(const std::filesystem::path& path, const MercatranModel<float>& model,
                    const TrainingProgress* progress = nullptr, const nlohmann::json& vocab = nullptr);

// Throws Error(kIoError) or Error(kCorruptFile); shapes are validated against
// the config echo.
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

// Content hash of the parameter values, hex encoded.
std::string ModelVersion(const MercatranModel<float>& model);

}  // namespace mercatran
