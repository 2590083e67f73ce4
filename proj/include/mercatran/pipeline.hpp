// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

// gen -> prep -> train -> eval -> index stages over a working directory.
// Every stage reads only the artifacts of earlier stages, so deleting an
// artifact and rerunning reproduces it.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "mercatran/eval.hpp"
#include "mercatran/model.hpp"
#include "mercatran/preprocess.hpp"
#include "mercatran/synthgen.hpp"

namespace mercatran {

struct PipelinePaths {
  std::filesystem::path workdir;
  std::filesystem::path events;
  std::filesystem::path items;
  std::filesystem::path vocab;
  std::filesystem::path train_examples;
  std::filesystem::path test_examples;
  std::filesystem::path checkpoints;  // directory holding `last` and `best`
  std::filesystem::path eval_checkpoint;  // empty: checkpoints/best
  std::filesystem::path index;
  std::filesystem::path store;
  std::filesystem::path report;
  std::filesystem::path manifest;

  // Default layout under one working directory.
  static PipelinePaths Under(const std::filesystem::path& workdir);
};

struct PipelineConfig {
  PipelinePaths paths = PipelinePaths::Under("work");
  std::uint64_t seed = 42;  // drives generation, split, init, shuffle, dropout
  GenConfig gen;
  ModelConfig model;
  FeatureConfig feature_config = FeatureConfig::kTitleBrandCategory;
  int vocab_limit = kDefaultVocabLimit;
  int segment_length = 0;
  double test_fraction = 0.2;
  int epochs = 5;
  int threads = 1;
  std::vector<int> ks{5, 20};
};

// Applies the seed to every seeded component.
void ApplySeed(PipelineConfig& config, std::uint64_t seed);

// Keys: workdir, seed, gen, model, feature_config, vocab_limit,
// segment_length, test_fraction, epochs, threads, ks. Missing keys keep the
// values already in `base`. Throws Error(kInvalidConfig).
PipelineConfig PipelineConfigFromJson(const nlohmann::json& j, PipelineConfig base = {});
nlohmann::json PipelineConfigToJson(const PipelineConfig& config);

// "smoke" or "full-desk"; throws Error(kInvalidConfig) for anything else.
PipelineConfig DemoProfile(std::string_view profile, const std::filesystem::path& workdir);

// JSON-lines logging to stderr.
void LogJson(std::string_view event, nlohmann::json fields = nlohmann::json::object());

void RunGen(const PipelineConfig& config);
void RunPrep(const PipelineConfig& config);
// Resumes from ckpt/last when present.
void RunTrain(const PipelineConfig& config);
// Evaluates ckpt/best on the test split and writes report.json.
nlohmann::json RunEval(const PipelineConfig& config);
// Item index from the catalog plus user vectors from the event log.
void RunIndex(const PipelineConfig& config);

// Full demo; returns the report that was written. Stage failures are
// rethrown as Error with the stage name prefixed.
nlohmann::json RunDemo(const PipelineConfig& config);

}  // namespace mercatran
