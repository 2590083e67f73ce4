// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mercatran/vector_index.hpp"

#include <algorithm>
#include <cmath>
#include <span>

#include "mercatran/binary_io.hpp"
#include "mercatran/error.hpp"

namespace mercatran {

namespace {

constexpr std::string_view kMagic = "MIDX1";
constexpr float kUnitTolerance = 1e-4f;

bool Better(float score_a, const std::string& id_a, float score_b, const std::string& id_b) {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}

}  // namespace

std::int64_t EmbeddingIndex::Find(const std::string& item_id) const {
  auto it = rows_.find(item_id);
  return it == rows_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

EmbeddingIndex BuildIndex(std::span<const IndexedItem> items, int dim) {
  EmbeddingIndex index;
  index.dim_ = dim > 0 ? dim : (items.empty() ? 0 : static_cast<int>(items.front().embedding.size()));
  std::vector<const IndexedItem*> latest;
  for (const auto& item : items) {
    if (item.embedding.size() != index.dim_) {
      throw Error(ErrorCode::kDimensionMismatch, "item '" + item.item_id + "' has dimension " +
                                                     std::to_string(item.embedding.size()) + ", index has " +
                                                     std::to_string(index.dim_));
    }
    const float norm = item.embedding.norm();
    if (!std::isfinite(norm) || std::abs(norm - 1.0f) > kUnitTolerance) {
      throw Error(ErrorCode::kNonUnitEmbedding, "item '" + item.item_id + "' has norm " + std::to_string(norm));
    }
    auto [it, inserted] = index.rows_.try_emplace(item.item_id, latest.size());
    if (inserted) {
      latest.push_back(&item);
    } else {
      latest[it->second] = &item;
    }
  }
  const auto n = static_cast<Eigen::Index>(latest.size());
  index.embeddings_.resize(n, index.dim_);
  for (Eigen::Index r = 0; r < n; ++r) {
    const IndexedItem& item = *latest[static_cast<std::size_t>(r)];
    index.ids_.push_back(item.item_id);
    index.brand_ids_.push_back(item.brand_id);
    index.c2_ids_.push_back(item.c2_id);
    index.embeddings_.row(r) = item.embedding.transpose();
  }
  return index;
}

std::vector<SearchHit> SearchTopK(const EmbeddingIndex& index, const Eigen::Ref<const Eigen::VectorXf>& query, int k) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (query.size() != index.dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "query dimension " + std::to_string(query.size()) + " != index dimension " + std::to_string(index.dim()));
  }
  const std::size_t n = index.size();
  const std::size_t keep = std::min(static_cast<std::size_t>(k), n);
  if (keep == 0) return {};

  const Eigen::VectorXf scores = index.embeddings() * query;
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  auto cmp = [&](std::size_t a, std::size_t b) {
    return Better(scores[static_cast<Eigen::Index>(a)], index.item_id(a), scores[static_cast<Eigen::Index>(b)],
                  index.item_id(b));
  };
  std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(keep), rows.end(), cmp);

  std::vector<SearchHit> hits;
  hits.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    hits.push_back({index.item_id(rows[i]), scores[static_cast<Eigen::Index>(rows[i])], rows[i]});
  }
  return hits;
}

void SaveIndex(const EmbeddingIndex& index, const std::filesystem::path& path) {
  ByteWriter w;
  w.Header(kMagic, {{"count", index.size()}, {"d", index.dim()}, {"version", 1}});
  for (std::size_t r = 0; r < index.size(); ++r) {
    w.Str(index.item_id(r));
    w.I64(index.brand_id(r));
    w.I64(index.c2_id(r));
    const auto row = index.embedding(r);
    w.Floats(std::span<const float>(row.data(), static_cast<std::size_t>(row.size())));
  }
  w.WriteFile(path);
}

EmbeddingIndex LoadIndex(const std::filesystem::path& path) {
  ByteReader r = ByteReader::FromFile(path);
  const auto manifest = r.Header(kMagic);
  std::size_t count = 0;
  int dim = 0;
  try {
    count = manifest.at("count").get<std::size_t>();
    dim = manifest.at("d").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptFile, std::string("index manifest: ") + e.what());
  }
  if (dim < 0) throw Error(ErrorCode::kCorruptFile, "negative dimension");
  std::vector<IndexedItem> items;
  items.reserve(std::min<std::size_t>(count, r.remaining()));
  std::vector<float> buf(static_cast<std::size_t>(dim));
  for (std::size_t i = 0; i < count; ++i) {
    IndexedItem item;
    item.item_id = r.Str();
    item.brand_id = r.I64();
    item.c2_id = r.I64();
    r.Floats(buf);
    item.embedding = Eigen::Map<const Eigen::VectorXf>(buf.data(), dim);
    items.push_back(std::move(item));
  }
  if (r.remaining() != 0) throw Error(ErrorCode::kCorruptFile, "trailing bytes after index records");
  try {
    return BuildIndex(items, dim);
  } catch (const Error& e) {
    throw Error(ErrorCode::kCorruptFile, e.what());
  }
}

}  // namespace mercatran
