// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

// Offline evaluation: index the union of all test targets, generate one query
// vector per forecast step from each history, and score item / category /
// brand hits at several cutoffs.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mercatran/model.hpp"
#include "mercatran/preprocess.hpp"
#include "mercatran/vector_index.hpp"

namespace mercatran {

// 1/log2(rank + 1) when rank <= k, else 0; nullopt is a miss.
// Throws Error(kInvalidRank) for rank < 1 and Error(kInvalidArgument) for k < 1.
double NdcgSingle(std::optional<int> rank, int k);
inline double RecallSingle(bool hit) { return hit ? 1.0 : 0.0; }

enum class Granularity { kItem = 0, kCategory = 1, kBrand = 2 };
inline constexpr int kNumGranularities = 3;
std::string_view GranularityName(Granularity g);

struct EvalReport {
  std::string feature_config;
  std::vector<int> ks;
  int steps = 0;
  std::size_t num_sequences = 0;
  std::size_t num_indexed_items = 0;
  // recall[granularity][step][k index]; ndcg[step][k index] (item level).
  std::vector<std::vector<std::vector<double>>> recall;
  std::vector<std::vector<double>> ndcg;

  // step is 1-based; k must be one of `ks`.
  double Recall(Granularity g, int step, int k) const;
  double Ndcg(int step, int k) const;

  // Rows granularity x step; columns ndcg@K (item rows only) and recall@K.
  nlohmann::json ToJson() const;
};

struct EvalOptions {
  std::vector<int> ks{5, 20};
  int threads = 1;  // results do not depend on this
};

// Hooks that stand in for the model in fixtures: `encode_items` maps target
// items to unit rows, `queries` maps one example to [steps, d] unit rows.
struct Retriever {
  std::function<nn::Matrix<float>(std::span<const TokenizedItem>)> encode_items;
  std::function<nn::Matrix<float>(const SbrExample&)> queries;
};

Retriever ModelRetriever(const MercatranModel<float>& model);

// Index over the union of test targets (last occurrence of an item id wins).
EmbeddingIndex BuildTargetIndex(const Retriever& retriever, std::span<const SbrExample> examples);

// Throws Error(kEmptyTestSet).
EvalReport EvaluateWith(const Retriever& retriever, std::span<const SbrExample> examples, const EvalOptions& options = {});
EvalReport Evaluate(const MercatranModel<float>& model, std::span<const SbrExample> examples,
                    const EvalOptions& options = {});

// Item recall of recommending the K most frequent items (counted over all
// events of `train`, restricted to ids present in the test-target union,
// ties by item id) to every test example. Result is [step][k index].
std::vector<std::vector<double>> MostPopularItemRecall(std::span<const SbrExample> train,
                                                       std::span<const SbrExample> test, std::span<const int> ks);

// Expected recall of uniformly random retrieval: K / M.
inline double RandomRecall(int k, std::size_t indexed_items) {
  return indexed_items == 0 ? 0.0 : std::min(1.0, static_cast<double>(k) / static_cast<double>(indexed_items));
}

}  // namespace mercatran
