// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

// Exact top-K inner-product index over unit item embeddings. Immutable after
// build; any number of threads may search one instance.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace mercatran {

struct IndexedItem {
  std::string item_id;
  Eigen::VectorXf embedding;
  std::int64_t brand_id = 0;
  std::int64_t c2_id = 0;
};

struct SearchHit {
  std::string item_id;
  float score = 0.0f;
  std::size_t row = 0;  // position inside the index

  bool operator==(const SearchHit&) const = default;
};

class EmbeddingIndex {
 public:
  using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  EmbeddingIndex() = default;

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  int dim() const { return dim_; }

  const std::string& item_id(std::size_t row) const { return ids_[row]; }
  std::int64_t brand_id(std::size_t row) const { return brand_ids_[row]; }
  std::int64_t c2_id(std::size_t row) const { return c2_ids_[row]; }
  auto embedding(std::size_t row) const { return embeddings_.row(static_cast<Eigen::Index>(row)); }
  const RowMatrix& embeddings() const { return embeddings_; }

  // Row of an item id, or -1.
  std::int64_t Find(const std::string& item_id) const;

 private:
  friend EmbeddingIndex BuildIndex(std::span<const IndexedItem> items, int dim);
  friend EmbeddingIndex LoadIndex(const std::filesystem::path& path);

  int dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<std::int64_t> brand_ids_;
  std::vector<std::int64_t> c2_ids_;
  RowMatrix embeddings_;
  std::unordered_map<std::string, std::size_t> rows_;
};

// Rows keep first-seen order of each item id, holding that id's latest
// entry. `dim` fixes the dimension of an empty index (0 = infer from the
// first item). Throws Error(kDimensionMismatch) or Error(kNonUnitEmbedding).
EmbeddingIndex BuildIndex(std::span<const IndexedItem> items, int dim = 0);

// Descending score, ties by item_id ascending; min(k, size) hits.
// Throws Error(kDimensionMismatch) or Error(kInvalidArgument) for k < 1.
std::vector<SearchHit> SearchTopK(const EmbeddingIndex& index, const Eigen::Ref<const Eigen::VectorXf>& query, int k);

// Format: magic "MIDX1", u64 manifest length, JSON manifest {count, d},
// then per item: u32 id length + id bytes, i64 brand_id, i64 c2_id, and d
// float32 values.
void SaveIndex(const EmbeddingIndex& index, const std::filesystem::path& path);
// Throws Error(kIoError) or Error(kCorruptFile).
EmbeddingIndex LoadIndex(const std::filesystem::path& path);

}  // namespace mercatran
