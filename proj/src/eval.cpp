// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mercatran/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "mercatran/inference.hpp"

namespace mercatran {

namespace {

constexpr std::size_t kEncodeChunk = 512;

// Neumaier summation; the order of Add calls is fixed by the caller.
class CompensatedSum {
 public:
  void Add(double x) {
    const double t = sum_ + x;
    comp_ += std::abs(sum_) >= std::abs(x) ? (sum_ - t) + x : (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

std::size_t KIndex(const std::vector<int>& ks, int k) {
  auto it = std::find(ks.begin(), ks.end(), k);
  if (it == ks.end()) throw Error(ErrorCode::kInvalidArgument, "k=" + std::to_string(k) + " not in report");
  return static_cast<std::size_t>(it - ks.begin());
}

// Per example: [step][k] hit flags per granularity plus item ndcg.
struct ExampleScore {
  std::vector<std::vector<std::array<bool, kNumGranularities>>> hits;
  std::vector<std::vector<double>> ndcg;
};

ExampleScore ScoreExample(const Retriever& retriever, const EmbeddingIndex& index, const SbrExample& ex,
                          const std::vector<int>& ks, int max_k) {
  const nn::Matrix<float> q = retriever.queries(ex);
  const int steps = static_cast<int>(ex.targets.size());
  if (q.rows() != steps || q.cols() != index.dim()) {
    throw Error(ErrorCode::kShapeMismatch, "query vectors do not match targets or index dimension");
  }
  ExampleScore score;
  score.hits.resize(static_cast<std::size_t>(steps));
  score.ndcg.resize(static_cast<std::size_t>(steps));
  for (int s = 0; s < steps; ++s) {
    const Eigen::VectorXf query = q.row(s).transpose();
    const auto hits = SearchTopK(index, query, max_k);
    const auto& truth = ex.targets[static_cast<std::size_t>(s)];
    std::optional<int> rank;
    int first_category = -1, first_brand = -1;
    for (std::size_t r = 0; r < hits.size(); ++r) {
      const int pos = static_cast<int>(r) + 1;
      const bool same_item = hits[r].item_id == truth.item_id;
      if (!rank && same_item) rank = pos;
      // An item hit counts at every coarser level even if the indexed
      // snapshot carries different metadata.
      if (first_category < 0 && (same_item || index.c2_id(hits[r].row) == truth.c2_id)) first_category = pos;
      if (first_brand < 0 && (same_item || index.brand_id(hits[r].row) == truth.brand_id)) first_brand = pos;
    }
    for (int k : ks) {
      score.hits[static_cast<std::size_t>(s)].push_back(
          {rank.has_value() && *rank <= k, first_category > 0 && first_category <= k, first_brand > 0 && first_brand <= k});
      score.ndcg[static_cast<std::size_t>(s)].push_back(NdcgSingle(rank, k));
    }
  }
  return score;
}

}  // namespace

double NdcgSingle(std::optional<int> rank, int k) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (!rank) return 0.0;
  if (*rank < 1) throw Error(ErrorCode::kInvalidRank, "rank " + std::to_string(*rank) + " < 1");
  if (*rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(*rank) + 1.0);
}

std::string_view GranularityName(Granularity g) {
  switch (g) {
    case Granularity::kItem: return "item";
    case Granularity::kCategory: return "category";
    case Granularity::kBrand: return "brand";
  }
  return "?";
}

double EvalReport::Recall(Granularity g, int step, int k) const {
  return recall.at(static_cast<std::size_t>(g)).at(static_cast<std::size_t>(step - 1)).at(KIndex(ks, k));
}

double EvalReport::Ndcg(int step, int k) const {
  return ndcg.at(static_cast<std::size_t>(step - 1)).at(KIndex(ks, k));
}

nlohmann::json EvalReport::ToJson() const {
  nlohmann::json rows = nlohmann::json::array();
  for (int g = 0; g < kNumGranularities; ++g) {
    for (int s = 1; s <= steps; ++s) {
      nlohmann::json row = {{"granularity", GranularityName(static_cast<Granularity>(g))}, {"step", s}};
      for (int k : ks) {
        const std::string key = "@" + std::to_string(k);
        row["ndcg" + key] = g == 0 ? nlohmann::json(Ndcg(s, k)) : nlohmann::json(nullptr);
      }
      for (int k : ks) row["recall@" + std::to_string(k)] = Recall(static_cast<Granularity>(g), s, k);
      rows.push_back(std::move(row));
    }
  }
  return {{"feature_config", feature_config},
          {"ks", ks},
          {"steps", steps},
          {"num_sequences", num_sequences},
          {"num_indexed_items", num_indexed_items},
          {"rows", std::move(rows)}};
}

Retriever ModelRetriever(const MercatranModel<float>& model) {
  Retriever r;
  r.encode_items = [&model](std::span<const TokenizedItem> items) { return EncodeItems(model, items); };
  r.queries = [&model](const SbrExample& ex) {
    std::vector<TokenizedItem> history;
    history.reserve(ex.history.size());
    for (const auto& e : ex.history) history.push_back(e.tokens);
    return GenerateQueryVectors(model, std::span<const TokenizedItem>(history));
  };
  return r;
}

EmbeddingIndex BuildTargetIndex(const Retriever& retriever, std::span<const SbrExample> examples) {
  std::vector<const PreparedEvent*> targets;
  for (const auto& ex : examples) {
    for (const auto& t : ex.targets) targets.push_back(&t);
  }
  std::vector<IndexedItem> items;
  items.reserve(targets.size());
  int dim = 0;
  for (std::size_t begin = 0; begin < targets.size(); begin += kEncodeChunk) {
    const std::size_t end = std::min(targets.size(), begin + kEncodeChunk);
    std::vector<TokenizedItem> chunk;
    for (std::size_t i = begin; i < end; ++i) chunk.push_back(targets[i]->tokens);
    const nn::Matrix<float> emb = retriever.encode_items(chunk);
    dim = static_cast<int>(emb.cols());
    for (std::size_t i = begin; i < end; ++i) {
      const auto& t = *targets[i];
      items.push_back({t.item_id, emb.row(static_cast<Eigen::Index>(i - begin)).transpose(), t.brand_id, t.c2_id});
    }
  }
  return BuildIndex(items, dim);
}

EvalReport EvaluateWith(const Retriever& retriever, std::span<const SbrExample> examples, const EvalOptions& options) {
  if (examples.empty()) throw Error(ErrorCode::kEmptyTestSet, "no test examples");
  if (options.ks.empty()) throw Error(ErrorCode::kInvalidArgument, "no cutoffs");
  for (int k : options.ks) {
    if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  }
  const int steps = static_cast<int>(examples.front().targets.size());
  for (const auto& ex : examples) {
    if (static_cast<int>(ex.targets.size()) != steps) throw Error(ErrorCode::kShapeMismatch, "ragged target counts");
  }
  const EmbeddingIndex index = BuildTargetIndex(retriever, examples);
  const int max_k = *std::max_element(options.ks.begin(), options.ks.end());

  std::vector<ExampleScore> scores(examples.size());
  const std::size_t threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(options.threads, 1)), 1,
                                                      examples.size());
  if (threads == 1) {
    for (std::size_t i = 0; i < examples.size(); ++i) scores[i] = ScoreExample(retriever, index, examples[i], options.ks, max_k);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < examples.size(); i += threads) {
            scores[i] = ScoreExample(retriever, index, examples[i], options.ks, max_k);
          }
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  EvalReport report;
  report.ks = options.ks;
  report.steps = steps;
  report.num_sequences = examples.size();
  report.num_indexed_items = index.size();
  report.feature_config = std::string(FeatureConfigName(examples.front().targets.front().tokens.feature_config));
  const std::size_t nk = options.ks.size();
  const double n = static_cast<double>(examples.size());
  report.recall.assign(kNumGranularities, std::vector<std::vector<double>>(static_cast<std::size_t>(steps),
                                                                           std::vector<double>(nk)));
  report.ndcg.assign(static_cast<std::size_t>(steps), std::vector<double>(nk));
  for (std::size_t s = 0; s < static_cast<std::size_t>(steps); ++s) {
    for (std::size_t ki = 0; ki < nk; ++ki) {
      std::array<std::size_t, kNumGranularities> count{};
      CompensatedSum ndcg;
      for (const auto& sc : scores) {
        for (int g = 0; g < kNumGranularities; ++g) count[static_cast<std::size_t>(g)] += sc.hits[s][ki][static_cast<std::size_t>(g)];
        ndcg.Add(sc.ndcg[s][ki]);
      }
      for (int g = 0; g < kNumGranularities; ++g) {
        report.recall[static_cast<std::size_t>(g)][s][ki] = static_cast<double>(count[static_cast<std::size_t>(g)]) / n;
      }
      report.ndcg[s][ki] = ndcg.value() / n;
    }
  }
  return report;
}

EvalReport Evaluate(const MercatranModel<float>& model, std::span<const SbrExample> examples, const EvalOptions& options) {
  return EvaluateWith(ModelRetriever(model), examples, options);
}

std::vector<std::vector<double>> MostPopularItemRecall(std::span<const SbrExample> train,
                                                       std::span<const SbrExample> test, std::span<const int> ks) {
  if (test.empty()) throw Error(ErrorCode::kEmptyTestSet, "no test examples");
  std::unordered_set<std::string> candidates;
  for (const auto& ex : test) {
    for (const auto& t : ex.targets) candidates.insert(t.item_id);
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& id : candidates) counts[id] = 0;
  for (const auto& ex : train) {
    for (const auto* events : {&ex.history, &ex.targets}) {
      for (const auto& e : *events) {
        auto it = counts.find(e.item_id);
        if (it != counts.end()) ++it->second;
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::unordered_map<std::string, std::size_t> rank_of;
  for (std::size_t i = 0; i < ranked.size(); ++i) rank_of[ranked[i].first] = i + 1;

  const std::size_t steps = test.front().targets.size();
  std::vector<std::vector<double>> out(steps, std::vector<double>(ks.size()));
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      std::size_t hits = 0;
      for (const auto& ex : test) hits += rank_of.at(ex.targets[s].item_id) <= static_cast<std::size_t>(ks[ki]);
      out[s][ki] = static_cast<double>(hits) / static_cast<double>(test.size());
    }
  }
  return out;
}

}  // namespace mercatran
