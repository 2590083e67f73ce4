// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

// Local key-value store of precomputed user query vectors. One writer (the
// batch job) and any number of concurrent readers.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "mercatran/nn/tape.hpp"

namespace mercatran {

struct UserVectorCacheEntry {
  std::string user_id;
  nn::Matrix<float> vectors;          // [steps, d], unit rows
  std::int64_t computed_at_us = 0;    // stime of the newest event used
  std::int64_t source_event_count = 0;

  bool operator==(const UserVectorCacheEntry& o) const {
    return user_id == o.user_id && vectors == o.vectors && computed_at_us == o.computed_at_us &&
           source_event_count == o.source_event_count;
  }
};

class FeatureStore {
 public:
  static constexpr std::size_t kMaxUserIdBytes = 64;

  FeatureStore(int steps, int dim);
  FeatureStore(FeatureStore&& other) noexcept;
  FeatureStore& operator=(FeatureStore&& other) noexcept;

  int steps() const { return steps_; }
  int dim() const { return dim_; }
  std::size_t size() const;

  std::optional<UserVectorCacheEntry> Get(const std::string& user_id) const;

  // Returns true when the stored entry changed. Throws
  // Error(kShapeMismatch), Error(kNonUnitRows) or Error(kInvalidArgument)
  // for ids longer than kMaxUserIdBytes.
  bool Upsert(UserVectorCacheEntry entry);

  std::vector<std::string> UserIds() const;

  // Format: magic "MFST1", u64 manifest length, JSON manifest
  // {count, steps, d, id_bytes}, then fixed-width records sorted by user id:
  // id (zero padded), i64 computed_at_us, i64 source_event_count, steps*d f32.
  void Save(const std::filesystem::path& path) const;
  // Throws Error(kIoError) or Error(kCorruptFile).
  static FeatureStore Load(const std::filesystem::path& path);

 private:
  int steps_;
  int dim_;
  mutable std::shared_mutex mu_;
  std::map<std::string, UserVectorCacheEntry> entries_;
};

}  // namespace mercatran
