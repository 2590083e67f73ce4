// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

// Offline precompute jobs and the request-time recommender. Requests share a
// frozen model and an immutable index snapshot; the snapshot pointer is
// swapped whole, so a request sees exactly one index version.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mercatran/datamodel.hpp"
#include "mercatran/feature_store.hpp"
#include "mercatran/model.hpp"
#include "mercatran/preprocess.hpp"
#include "mercatran/vector_index.hpp"

namespace mercatran {

// Serving-time context of one user: events ordered by stime (stable),
// consecutive duplicates removed, last `max_history` kept. Used by both the
// batch job and inline requests so the two paths agree exactly.
struct ServingHistory {
  std::vector<TokenizedItem> tokens;
  std::int64_t newest_stime_us = 0;
};
ServingHistory BuildServingHistory(std::vector<EventRecord> events, const Vocab& vocab, int max_tokens, int max_history);

using ServeLogFn = std::function<void(const std::string& user_id, const Error& error)>;

// Recomputes every user's query vectors from the log and upserts them.
// Per-user failures are reported through `on_error` and skipped. Returns the
// number of entries whose stored value changed.
std::size_t PrecomputeUsers(const std::vector<EventRecord>& events, const MercatranModel<float>& model,
                            const Vocab& vocab, FeatureStore& store, const ServeLogFn& on_error = {});

// Item-tower embeddings for a catalog (last snapshot of an id wins). When
// `out` is non-empty the index is also written there.
EmbeddingIndex PrecomputeItems(const std::vector<ItemSnapshot>& items, const MercatranModel<float>& model,
                               const Vocab& vocab, const std::filesystem::path& out = {});

// Content hash of an index, hex encoded.
std::string IndexVersion(const EmbeddingIndex& index);

struct ItemInfo {
  std::string name;
  std::string brand_name;
  std::optional<double> price;
};

struct RecommendedItem {
  std::string item_id;
  float score = 0.0f;
  ItemInfo info;
};

struct RecommendResponse {
  std::vector<std::vector<RecommendedItem>> steps;
  std::string model_version;
  std::string index_version;
  bool cache_hit = false;

  nlohmann::json ToJson() const;
};

// Returns an empty string when `j` is a well-formed response body, else the
// first violation found.
std::string ValidateRecommendResponse(const nlohmann::json& j, int k);

struct RecommendRequest {
  std::optional<std::string> user_id;
  std::vector<EventRecord> events;
  int k = 10;

  // Throws Error(kBadRequest) and the event parser's errors.
  static RecommendRequest FromJson(const nlohmann::json& j);
};

class RecommendService {
 public:
  static constexpr int kMaxK = 1000;

  struct IndexSnapshot {
    EmbeddingIndex index;
    std::unordered_map<std::string, ItemInfo> items;
    std::string version;
  };

  RecommendService(std::shared_ptr<const MercatranModel<float>> model, std::string model_version, Vocab vocab,
                   std::shared_ptr<const FeatureStore> store);

  // Errors: kBadRequest (k out of range), kEmptyHistory (no events and no
  // cache entry), kNotReady (no index), plus event/model errors.
  RecommendResponse Recommend(const RecommendRequest& request) const;

  // Top-k by the indexed item's own embedding, the item itself included.
  // Throws Error(kUnknownItem) for ids not in the current index.
  std::vector<RecommendedItem> Similar(const std::string& item_id, int k, std::string* index_version = nullptr) const;

  // Installs a new index atomically and returns the previous version ("" if
  // none). Throws Error(kDimensionMismatch) and keeps the old index.
  std::string SwapIndex(EmbeddingIndex index, const std::vector<ItemSnapshot>& catalog = {});

  std::shared_ptr<const IndexSnapshot> snapshot() const;
  const std::string& model_version() const { return model_version_; }
  const Vocab& vocab() const { return vocab_; }
  const MercatranModel<float>& model() const { return *model_; }

  // Query vectors for an inline event history.
  nn::Matrix<float> QueryVectors(const std::vector<EventRecord>& events) const;

 private:
  std::shared_ptr<const MercatranModel<float>> model_;
  std::string model_version_;
  Vocab vocab_;
  std::shared_ptr<const FeatureStore> store_;
  mutable std::mutex snapshot_mu_;
  std::shared_ptr<const IndexSnapshot> snapshot_;
};

}  // namespace mercatran
