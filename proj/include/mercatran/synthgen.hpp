// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

// Deterministic generator of synthetic marketplace clickstream corpora.
//
// Items are laid out round-robin over brands and grouped into small "series"
// (same brand, same leaf category, shared title word). Every user carries a
// planted brand preference; each event stays in that brand with probability
// affinity_strength, otherwise a brand is drawn uniformly. Within a brand the
// next item continues the previous item's series with probability
// series_continue, which gives item-level sequential signal that only the
// title text can resolve.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mercatran/datamodel.hpp"

namespace mercatran {

struct Taxonomy {
  int n_c0 = 3;
  int n_c1_per_c0 = 2;
  int n_c2_per_c1 = 3;

  int num_leaves() const { return n_c0 * n_c1_per_c0 * n_c2_per_c1; }
};

struct GenConfig {
  std::uint64_t seed = 42;
  int n_users = 1000;
  int n_items = 2000;
  int n_brands = 40;
  Taxonomy taxonomy;
  std::array<int, 2> events_per_user_range = {12, 40};
  double affinity_strength = 0.9;
  int vocab_per_c2 = 24;
  std::array<double, kNumEventTypes> event_type_weights = {80, 10, 4, 3, 2, 1};
  int series_size = 4;
  double series_continue = 0.6;
  std::int64_t start_time_us = 1682899200000000;  // 2023-05-01T00:00:00Z
};

// Throws Error(kInvalidConfig).
void ValidateGenConfig(const GenConfig& config);
GenConfig GenConfigFromJson(const nlohmann::json& j);
nlohmann::json GenConfigToJson(const GenConfig& config);

struct Corpus {
  std::vector<ItemSnapshot> items;
  std::vector<EventRecord> events;  // sorted by (user_id, stime)
};

Corpus GenerateCorpus(const GenConfig& config);

// Brand id the generator planted for user_id. Throws Error(kUnknownUser).
std::int64_t PlantedAffinityOracle(const GenConfig& config, const std::string& user_id);

// "u" + zero-padded index; the width makes lexicographic order numeric.
std::string SyntheticUserId(const GenConfig& config, int index);

}  // namespace mercatran
