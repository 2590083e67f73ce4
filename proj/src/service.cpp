// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mercatran/service.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "mercatran/inference.hpp"

namespace mercatran {

namespace {

constexpr std::size_t kEncodeChunk = 512;

}  // namespace

ServingHistory BuildServingHistory(std::vector<EventRecord> events, const Vocab& vocab, int max_tokens, int max_history) {
  std::stable_sort(events.begin(), events.end(),
                   [](const EventRecord& a, const EventRecord& b) { return a.stime_us < b.stime_us; });
  UserSequence seq;
  seq.events = std::move(events);
  const UserSequence deduped = DedupConsecutive(seq);
  const std::size_t n = deduped.events.size();
  const std::size_t begin = n > static_cast<std::size_t>(max_history) ? n - static_cast<std::size_t>(max_history) : 0;
  ServingHistory out;
  for (std::size_t i = begin; i < n; ++i) {
    out.tokens.push_back(TokenizeItem(deduped.events[i].item, vocab, vocab.feature_config(), max_tokens));
  }
  if (n > 0) out.newest_stime_us = deduped.events.back().stime_us;
  return out;
}

std::size_t PrecomputeUsers(const std::vector<EventRecord>& events, const MercatranModel<float>& model,
                            const Vocab& vocab, FeatureStore& store, const ServeLogFn& on_error) {
  std::map<std::string, std::vector<EventRecord>> by_user;
  for (const auto& e : events) by_user[e.user_id].push_back(e);
  const auto& cfg = model.config();
  std::size_t updated = 0;
  for (auto& [user, user_events] : by_user) {
    try {
      const ServingHistory h = BuildServingHistory(std::move(user_events), vocab, cfg.max_tokens, cfg.max_history);
      UserVectorCacheEntry entry;
      entry.user_id = user;
      entry.vectors = GenerateQueryVectors(model, std::span<const TokenizedItem>(h.tokens));
      entry.computed_at_us = h.newest_stime_us;
      entry.source_event_count = static_cast<std::int64_t>(h.tokens.size());
      updated += store.Upsert(std::move(entry)) ? 1 : 0;
    } catch (const Error& e) {
      if (on_error) on_error(user, e);
    }
  }
  return updated;
}

EmbeddingIndex PrecomputeItems(const std::vector<ItemSnapshot>& items, const MercatranModel<float>& model,
                               const Vocab& vocab, const std::filesystem::path& out) {
  std::vector<IndexedItem> indexed;
  indexed.reserve(items.size());
  for (std::size_t begin = 0; begin < items.size(); begin += kEncodeChunk) {
    const std::size_t end = std::min(items.size(), begin + kEncodeChunk);
    std::vector<TokenizedItem> chunk;
    for (std::size_t i = begin; i < end; ++i) {
      chunk.push_back(TokenizeItem(items[i], vocab, vocab.feature_config(), model.config().max_tokens));
    }
    const nn::Matrix<float> emb = EncodeItems(model, std::span<const TokenizedItem>(chunk));
    for (std::size_t i = begin; i < end; ++i) {
      indexed.push_back({items[i].item_id, emb.row(static_cast<Eigen::Index>(i - begin)).transpose(),
                         items[i].brand_id.value_or(0), items[i].c2_id.value_or(0)});
    }
  }
  EmbeddingIndex index = BuildIndex(indexed, model.config().d_model);
  if (!out.empty()) SaveIndex(index, out);
  return index;
}

std::string IndexVersion(const EmbeddingIndex& index) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t r = 0; r < index.size(); ++r) {
    mix(index.item_id(r).data(), index.item_id(r).size() + 1);
    const auto row = index.embedding(r);
    mix(row.data(), static_cast<std::size_t>(row.size()) * sizeof(float));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json RecommendResponse::ToJson() const {
  nlohmann::json out_steps = nlohmann::json::array();
  for (std::size_t s = 0; s < steps.size(); ++s) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& it : steps[s]) {
      items.push_back({{"item_id", it.item_id},
                       {"score", it.score},
                       {"name", it.info.name},
                       {"brand_name", it.info.brand_name},
                       {"price", it.info.price ? nlohmann::json(*it.info.price) : nlohmann::json(nullptr)}});
    }
    out_steps.push_back({{"step", s + 1}, {"items", std::move(items)}});
  }
  return {{"steps", std::move(out_steps)},
          {"model_version", model_version},
          {"index_version", index_version},
          {"cache_hit", cache_hit}};
}

std::string ValidateRecommendResponse(const nlohmann::json& j, int k) {
  if (!j.is_object()) return "body is not an object";
  for (const char* key : {"model_version", "index_version"}) {
    if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty()) {
      return std::string(key) + " missing or not a non-empty string";
    }
  }
  if (!j.contains("cache_hit") || !j["cache_hit"].is_boolean()) return "cache_hit missing or not boolean";
  if (!j.contains("steps") || !j["steps"].is_array()) return "steps missing or not an array";
  if (j["steps"].size() != static_cast<std::size_t>(kForecastSteps)) return "expected 4 steps";
  for (std::size_t s = 0; s < j["steps"].size(); ++s) {
    const auto& step = j["steps"][s];
    if (!step.is_object() || !step.contains("step") || step["step"] != s + 1) return "step numbering broken";
    if (!step.contains("items") || !step["items"].is_array()) return "step items missing";
    const auto& items = step["items"];
    if (items.size() > static_cast<std::size_t>(k)) return "more than k items";
    double prev = 2.0;
    for (const auto& it : items) {
      if (!it.is_object() || !it.contains("item_id") || !it["item_id"].is_string()) return "item_id missing";
      if (!it.contains("score") || !it["score"].is_number()) return "score missing";
      if (!it.contains("name") || !it["name"].is_string()) return "name missing";
      if (!it.contains("brand_name") || !it["brand_name"].is_string()) return "brand_name missing";
      if (!it.contains("price") || !(it["price"].is_number() || it["price"].is_null())) return "price malformed";
      const double score = it["score"].get<double>();
      if (score > prev) return "scores not descending";
      if (score < -1.0 - 1e-5 || score > 1.0 + 1e-5) return "score outside [-1, 1]";
      prev = score;
    }
  }
  return "";
}

RecommendRequest RecommendRequest::FromJson(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kBadRequest, "request body must be a JSON object");
  RecommendRequest req;
  if (j.contains("user_id") && !j["user_id"].is_null()) {
    if (!j["user_id"].is_string()) throw Error(ErrorCode::kBadRequest, "user_id must be a string");
    req.user_id = j["user_id"].get<std::string>();
  }
  if (j.contains("events") && !j["events"].is_null()) {
    if (!j["events"].is_array()) throw Error(ErrorCode::kBadRequest, "events must be an array");
    for (const auto& e : j["events"]) req.events.push_back(ParseEventJson(e));
  }
  if (j.contains("k") && !j["k"].is_null()) {
    if (!j["k"].is_number_integer()) throw Error(ErrorCode::kBadRequest, "k must be an integer");
    req.k = j["k"].get<int>();
  }
  return req;
}

RecommendService::RecommendService(std::shared_ptr<const MercatranModel<float>> model, std::string model_version,
                                   Vocab vocab, std::shared_ptr<const FeatureStore> store)
    : model_(std::move(model)), model_version_(std::move(model_version)), vocab_(std::move(vocab)),
      store_(std::move(store)) {
  if (!model_) throw Error(ErrorCode::kInvalidArgument, "service needs a model");
  if (store_ && (store_->dim() != model_->config().d_model || store_->steps() != model_->config().forecast_steps)) {
    throw Error(ErrorCode::kDimensionMismatch, "feature store shape does not match the model");
  }
}

std::shared_ptr<const RecommendService::IndexSnapshot> RecommendService::snapshot() const {
  std::lock_guard lock(snapshot_mu_);
  return snapshot_;
}

std::string RecommendService::SwapIndex(EmbeddingIndex index, const std::vector<ItemSnapshot>& catalog) {
  if (index.dim() != model_->config().d_model && !(index.empty() && index.dim() == 0)) {
    throw Error(ErrorCode::kDimensionMismatch, "index dimension " + std::to_string(index.dim()) + " != model d " +
                                                   std::to_string(model_->config().d_model));
  }
  auto next = std::make_shared<IndexSnapshot>();
  next->version = IndexVersion(index);
  for (const auto& item : catalog) {
    if (index.Find(item.item_id) >= 0) next->items[item.item_id] = {item.name, item.brand_name, item.price_usd};
  }
  next->index = std::move(index);
  std::lock_guard lock(snapshot_mu_);
  std::string previous = snapshot_ ? snapshot_->version : "";
  snapshot_ = std::move(next);
  return previous;
}

nn::Matrix<float> RecommendService::QueryVectors(const std::vector<EventRecord>& events) const {
  const auto& cfg = model_->config();
  const ServingHistory h = BuildServingHistory(events, vocab_, cfg.max_tokens, cfg.max_history);
  return GenerateQueryVectors(*model_, std::span<const TokenizedItem>(h.tokens));
}

RecommendResponse RecommendService::Recommend(const RecommendRequest& request) const {
  if (request.k < 1 || request.k > kMaxK) {
    throw Error(ErrorCode::kBadRequest, "k must be in [1, " + std::to_string(kMaxK) + "]");
  }
  RecommendResponse response;
  response.model_version = model_version_;
  nn::Matrix<float> queries;
  std::optional<UserVectorCacheEntry> cached;
  if (request.user_id && store_) cached = store_->Get(*request.user_id);
  if (cached) {
    queries = std::move(cached->vectors);
    response.cache_hit = true;
  } else if (!request.events.empty()) {
    queries = QueryVectors(request.events);
  } else {
    throw Error(ErrorCode::kEmptyHistory, request.user_id ? "no cached vectors for user '" + *request.user_id + "'"
                                                          : std::string("request has neither user_id nor events"));
  }

  const auto snap = snapshot();
  if (!snap) throw Error(ErrorCode::kNotReady, "no index loaded");
  response.index_version = snap->version;
  for (Eigen::Index s = 0; s < queries.rows(); ++s) {
    std::vector<RecommendedItem> items;
    if (!snap->index.empty()) {
      const Eigen::VectorXf q = queries.row(s).transpose();
      for (const auto& hit : SearchTopK(snap->index, q, request.k)) {
        auto it = snap->items.find(hit.item_id);
        items.push_back({hit.item_id, hit.score, it == snap->items.end() ? ItemInfo{} : it->second});
      }
    }
    response.steps.push_back(std::move(items));
  }
  return response;
}

std::vector<RecommendedItem> RecommendService::Similar(const std::string& item_id, int k,
                                                       std::string* index_version) const {
  if (k < 1 || k > kMaxK) throw Error(ErrorCode::kBadRequest, "k must be in [1, " + std::to_string(kMaxK) + "]");
  const auto snap = snapshot();
  if (!snap) throw Error(ErrorCode::kNotReady, "no index loaded");
  const std::int64_t row = snap->index.Find(item_id);
  if (row < 0) throw Error(ErrorCode::kUnknownItem, "unknown item '" + item_id + "'");
  if (index_version) *index_version = snap->version;
  const Eigen::VectorXf q = snap->index.embedding(static_cast<std::size_t>(row)).transpose();
  std::vector<RecommendedItem> out;
  for (const auto& hit : SearchTopK(snap->index, q, k)) {
    auto it = snap->items.find(hit.item_id);
    out.push_back({hit.item_id, hit.score, it == snap->items.end() ? ItemInfo{} : it->second});
  }
  return out;
}

}  // namespace mercatran
