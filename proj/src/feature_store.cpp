// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mercatran/feature_store.hpp"

#include <cmath>
#include <mutex>
#include <span>

#include "mercatran/binary_io.hpp"

namespace mercatran {

namespace {

constexpr std::string_view kMagic = "MFST1";

}  // namespace

FeatureStore::FeatureStore(int steps, int dim) : steps_(steps), dim_(dim) {
  if (steps < 1 || dim < 1) throw Error(ErrorCode::kInvalidArgument, "feature store needs steps >= 1 and d >= 1");
}

FeatureStore::FeatureStore(FeatureStore&& other) noexcept
    : steps_(other.steps_), dim_(other.dim_), entries_(std::move(other.entries_)) {}

FeatureStore& FeatureStore::operator=(FeatureStore&& other) noexcept {
  if (this != &other) {
    std::unique_lock lock(mu_);
    steps_ = other.steps_;
    dim_ = other.dim_;
    entries_ = std::move(other.entries_);
  }
  return *this;
}

std::size_t FeatureStore::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

std::optional<UserVectorCacheEntry> FeatureStore::Get(const std::string& user_id) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(user_id);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

bool FeatureStore::Upsert(UserVectorCacheEntry entry) {
  if (entry.user_id.empty() || entry.user_id.size() > kMaxUserIdBytes) {
    throw Error(ErrorCode::kInvalidArgument, "user id must be 1.." + std::to_string(kMaxUserIdBytes) + " bytes");
  }
  if (entry.vectors.rows() != steps_ || entry.vectors.cols() != dim_) {
    throw Error(ErrorCode::kShapeMismatch, "cache entry must be [" + std::to_string(steps_) + ", " +
                                               std::to_string(dim_) + "]");
  }
  for (Eigen::Index r = 0; r < entry.vectors.rows(); ++r) {
    if (std::abs(entry.vectors.row(r).norm() - 1.0f) > 1e-3f) {
      throw Error(ErrorCode::kNonUnitRows, "cache vector " + std::to_string(r) + " is not unit norm");
    }
  }
  std::unique_lock lock(mu_);
  auto it = entries_.find(entry.user_id);
  if (it != entries_.end() && it->second == entry) return false;
  const std::string key = entry.user_id;
  entries_.insert_or_assign(key, std::move(entry));
  return true;
}

std::vector<std::string> FeatureStore::UserIds() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [id, _] : entries_) out.push_back(id);
  return out;
}

void FeatureStore::Save(const std::filesystem::path& path) const {
  std::shared_lock lock(mu_);
  ByteWriter w;
  w.Header(kMagic, {{"count", entries_.size()}, {"steps", steps_}, {"d", dim_}, {"id_bytes", kMaxUserIdBytes}, {"version", 1}});
  char id[kMaxUserIdBytes];
  for (const auto& [key, e] : entries_) {
    std::fill(std::begin(id), std::end(id), '\0');
    std::copy(key.begin(), key.end(), id);
    w.Raw(id, sizeof id);
    w.I64(e.computed_at_us);
    w.I64(e.source_event_count);
    w.Floats(std::span<const float>(e.vectors.data(), static_cast<std::size_t>(e.vectors.size())));
  }
  w.WriteFile(path);
}

FeatureStore FeatureStore::Load(const std::filesystem::path& path) {
  ByteReader r = ByteReader::FromFile(path);
  const auto manifest = r.Header(kMagic);
  std::size_t count = 0;
  int steps = 0, dim = 0;
  try {
    count = manifest.at("count").get<std::size_t>();
    steps = manifest.at("steps").get<int>();
    dim = manifest.at("d").get<int>();
    if (manifest.at("id_bytes").get<std::size_t>() != kMaxUserIdBytes) {
      throw Error(ErrorCode::kCorruptFile, "unsupported id width");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptFile, std::string("feature store manifest: ") + e.what());
  }
  if (steps < 1 || dim < 1) throw Error(ErrorCode::kCorruptFile, "invalid feature store shape");
  const std::size_t record = kMaxUserIdBytes + 16 + static_cast<std::size_t>(steps) * static_cast<std::size_t>(dim) * 4;
  if (r.remaining() != count * record) throw Error(ErrorCode::kCorruptFile, "feature store length mismatch");
  FeatureStore store(steps, dim);
  char id[kMaxUserIdBytes];
  for (std::size_t i = 0; i < count; ++i) {
    UserVectorCacheEntry e;
    r.Raw(id, sizeof id);
    e.user_id.assign(id, strnlen(id, sizeof id));
    e.computed_at_us = r.I64();
    e.source_event_count = r.I64();
    e.vectors.resize(steps, dim);
    r.Floats(std::span<float>(e.vectors.data(), static_cast<std::size_t>(e.vectors.size())));
    try {
      store.Upsert(std::move(e));
    } catch (const Error& err) {
      throw Error(ErrorCode::kCorruptFile, err.what());
    }
  }
  return store;
}

}  // namespace mercatran
