// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <atomic>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include "fixtures.hpp"
#include "mercatran/checkpoint.hpp"
#include "mercatran/feature_store.hpp"
#include "mercatran/http_server.hpp"
#include "mercatran/inference.hpp"
#include "mercatran/service.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that collides with Eigen internals.
#include <httplib.h>

using namespace mercatran;
using mercatran::testing::MakeTinyCorpus;
using mercatran::testing::ScratchDir;
using mercatran::testing::TinyModelConfig;

namespace {

struct Fixture {
  mercatran::testing::TinyCorpus tc = MakeTinyCorpus(10);
  std::shared_ptr<const MercatranModel<float>> model =
      std::make_shared<const MercatranModel<float>>(TinyModelConfig(tc.vocab.size()));

  std::vector<EventRecord> EventsOf(const std::string& user) const {
    std::vector<EventRecord> out;
    for (const auto& e : tc.corpus.events) {
      if (e.user_id == user) out.push_back(e);
    }
    return out;
  }
};

std::string Bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename Fn>
ErrorCode CodeOf(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kNotReady;
}

UserVectorCacheEntry Entry(const std::string& id, int steps, int d, float fill = 1.0f) {
  UserVectorCacheEntry e;
  e.user_id = id;
  e.vectors = nn::Matrix<float>::Zero(steps, d);
  for (int s = 0; s < steps; ++s) e.vectors(s, s % d) = fill;
  e.computed_at_us = 5;
  e.source_event_count = 3;
  return e;
}

}  // namespace

TEST_CASE("feature store upsert, get and persistence") {
  FeatureStore store(4, 8);
  CHECK(store.size() == 0);
  CHECK_FALSE(store.Get("u1").has_value());
  CHECK(store.Upsert(Entry("u1", 4, 8)));
  CHECK_FALSE(store.Upsert(Entry("u1", 4, 8)));
  CHECK(store.Upsert(Entry("u0", 4, 8)));
  CHECK(store.size() == 2);
  CHECK(store.UserIds() == std::vector<std::string>{"u0", "u1"});
  CHECK(*store.Get("u1") == Entry("u1", 4, 8));

  CHECK(CodeOf([&] { store.Upsert(Entry("u2", 3, 8)); }) == ErrorCode::kShapeMismatch);
  CHECK(CodeOf([&] { store.Upsert(Entry("u2", 4, 8, 2.0f)); }) == ErrorCode::kNonUnitRows);
  CHECK(CodeOf([&] { store.Upsert(Entry(std::string(65, 'x'), 4, 8)); }) == ErrorCode::kInvalidArgument);

  const auto dir = ScratchDir("store");
  store.Save(dir / "s.mfst");
  const FeatureStore back = FeatureStore::Load(dir / "s.mfst");
  CHECK(back.size() == 2);
  CHECK(*back.Get("u0") == *store.Get("u0"));
  back.Save(dir / "t.mfst");
  CHECK(Bytes(dir / "s.mfst") == Bytes(dir / "t.mfst"));
  std::filesystem::resize_file(dir / "t.mfst", std::filesystem::file_size(dir / "t.mfst") - 4);
  CHECK(CodeOf([&] { FeatureStore::Load(dir / "t.mfst"); }) == ErrorCode::kCorruptFile);
  std::filesystem::remove_all(dir);
}

TEST_CASE("precompute_users") {
  Fixture f;
  FeatureStore store(4, f.model->config().d_model);
  CHECK(PrecomputeUsers({}, *f.model, f.tc.vocab, store) == 0);
  CHECK(PrecomputeUsers(f.tc.corpus.events, *f.model, f.tc.vocab, store) == 10);
  CHECK(store.size() == 10);
  for (const auto& id : store.UserIds()) {
    const auto e = store.Get(id);
    REQUIRE(e.has_value());
    CHECK(e->vectors.rows() == 4);
    for (int s = 0; s < 4; ++s) CHECK(std::abs(e->vectors.row(s).norm() - 1.0f) <= 1e-5f);
    CHECK(e->source_event_count >= 1);
    CHECK(e->source_event_count <= 22);
  }
  const auto dir = ScratchDir("precompute_users");
  store.Save(dir / "a.mfst");
  CHECK(PrecomputeUsers(f.tc.corpus.events, *f.model, f.tc.vocab, store) == 0);
  store.Save(dir / "b.mfst");
  CHECK(Bytes(dir / "a.mfst") == Bytes(dir / "b.mfst"));

  // A user whose events reference an out-of-range token is reported and skipped.
  ModelConfig small = f.model->config();
  small.vocab_size = 4;
  const MercatranModel<float> tiny_vocab(small);
  FeatureStore other(4, small.d_model);
  std::vector<std::string> failed;
  PrecomputeUsers(f.tc.corpus.events, tiny_vocab, f.tc.vocab, other,
                  [&failed](const std::string& u, const Error&) { failed.push_back(u); });
  CHECK(failed.size() == 10);
  CHECK(other.size() == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("precompute_items") {
  Fixture f;
  const auto dir = ScratchDir("precompute_items");
  CHECK(PrecomputeItems({}, *f.model, f.tc.vocab).size() == 0);
  const EmbeddingIndex a = PrecomputeItems(f.tc.corpus.items, *f.model, f.tc.vocab, dir / "a.midx");
  CHECK(a.size() == f.tc.corpus.items.size());
  CHECK(a.dim() == f.model->config().d_model);
  PrecomputeItems(f.tc.corpus.items, *f.model, f.tc.vocab, dir / "b.midx");
  CHECK(Bytes(dir / "a.midx") == Bytes(dir / "b.midx"));
  CHECK(IndexVersion(a) == IndexVersion(LoadIndex(dir / "b.midx")));
  std::filesystem::remove_all(dir);
}

TEST_CASE("recommend contract") {
  Fixture f;
  auto store = std::make_shared<FeatureStore>(4, f.model->config().d_model);
  PrecomputeUsers(f.tc.corpus.events, *f.model, f.tc.vocab, *store);
  RecommendService service(f.model, "m1", f.tc.vocab, store);

  RecommendRequest inline_req;
  inline_req.events = f.EventsOf(SyntheticUserId(GenConfig{.n_users = 10}, 0));
  inline_req.events.resize(5);
  inline_req.k = 5;
  CHECK(CodeOf([&] { service.Recommend(inline_req); }) == ErrorCode::kNotReady);

  const std::string old = service.SwapIndex(PrecomputeItems(f.tc.corpus.items, *f.model, f.tc.vocab), f.tc.corpus.items);
  CHECK(old.empty());
  const RecommendResponse r = service.Recommend(inline_req);
  REQUIRE(r.steps.size() == 4);
  for (const auto& step : r.steps) {
    CHECK(step.size() <= 5);
    CHECK_FALSE(step.empty());
    for (std::size_t i = 1; i < step.size(); ++i) CHECK(step[i - 1].score >= step[i].score);
    CHECK_FALSE(step[0].info.name.empty());
  }
  CHECK_FALSE(r.cache_hit);
  CHECK(r.model_version == "m1");
  CHECK(r.index_version == service.snapshot()->version);
  CHECK(ValidateRecommendResponse(r.ToJson(), 5).empty());

  RecommendRequest unknown;
  unknown.user_id = "nobody";
  CHECK(CodeOf([&] { service.Recommend(unknown); }) == ErrorCode::kEmptyHistory);
  RecommendRequest nothing;
  CHECK(CodeOf([&] { service.Recommend(nothing); }) == ErrorCode::kEmptyHistory);
  RecommendRequest bad_k = inline_req;
  bad_k.k = 0;
  CHECK(CodeOf([&] { service.Recommend(bad_k); }) == ErrorCode::kBadRequest);
}

TEST_CASE("cached and computed paths agree") {
  Fixture f;
  auto store = std::make_shared<FeatureStore>(4, f.model->config().d_model);
  PrecomputeUsers(f.tc.corpus.events, *f.model, f.tc.vocab, *store);
  RecommendService service(f.model, "m1", f.tc.vocab, store);
  service.SwapIndex(PrecomputeItems(f.tc.corpus.items, *f.model, f.tc.vocab), f.tc.corpus.items);
  for (const auto& user : store->UserIds()) {
    RecommendRequest cached;
    cached.user_id = user;
    cached.k = 10;
    RecommendRequest computed;
    computed.events = f.EventsOf(user);
    computed.k = 10;
    const RecommendResponse a = service.Recommend(cached);
    const RecommendResponse b = service.Recommend(computed);
    CHECK(a.cache_hit);
    CHECK_FALSE(b.cache_hit);
    auto ja = a.ToJson();
    auto jb = b.ToJson();
    ja.erase("cache_hit");
    jb.erase("cache_hit");
    CHECK(ja == jb);
  }
}

TEST_CASE("history windowing at serve time") {
  Fixture f;
  auto events = f.EventsOf(SyntheticUserId(GenConfig{.n_users = 10}, 1));
  REQUIRE(events.size() >= 12);
  // Shuffled input order and a repeated event give the same serving history.
  auto shuffled = events;
  std::reverse(shuffled.begin(), shuffled.end());
  shuffled.push_back(events.back());
  const auto a = BuildServingHistory(events, f.tc.vocab, 32, 22);
  const auto b = BuildServingHistory(shuffled, f.tc.vocab, 32, 22);
  CHECK(a.tokens == b.tokens);
  CHECK(a.newest_stime_us == events.back().stime_us);
  std::vector<EventRecord> many;
  for (int rep = 0; rep < 3; ++rep) many.insert(many.end(), events.begin(), events.end());
  for (std::size_t i = 0; i < many.size(); ++i) many[i].stime_us = static_cast<std::int64_t>(i);
  CHECK(BuildServingHistory(many, f.tc.vocab, 32, 22).tokens.size() == 22);
}

TEST_CASE("swap_index") {
  Fixture f;
  RecommendService service(f.model, "m1", f.tc.vocab, std::make_shared<FeatureStore>(4, 16));
  const EmbeddingIndex full = PrecomputeItems(f.tc.corpus.items, *f.model, f.tc.vocab);
  service.SwapIndex(full, f.tc.corpus.items);
  const std::string v1 = service.snapshot()->version;
  std::vector<ItemSnapshot> half(f.tc.corpus.items.begin(), f.tc.corpus.items.begin() + 50);
  CHECK(service.SwapIndex(PrecomputeItems(half, *f.model, f.tc.vocab), half) == v1);
  RecommendRequest req;
  req.events = f.tc.corpus.events;
  req.events.resize(8);
  CHECK(service.Recommend(req).index_version != v1);
  CHECK(service.Recommend(req).index_version == service.snapshot()->version);

  const std::string v2 = service.snapshot()->version;
  std::vector<IndexedItem> wrong = {{"x", Eigen::VectorXf::Unit(8, 0), 0, 0}};
  CHECK(CodeOf([&] { service.SwapIndex(BuildIndex(wrong)); }) == ErrorCode::kDimensionMismatch);
  CHECK(service.snapshot()->version == v2);

  std::string version;
  const auto similar = service.Similar(half[3].item_id, 5, &version);
  REQUIRE(similar.size() == 5);
  CHECK(similar[0].item_id == half[3].item_id);
  CHECK(version == v2);
  CHECK(CodeOf([&] { service.Similar(f.tc.corpus.items.back().item_id, 5); }) == ErrorCode::kUnknownItem);
}

TEST_CASE("concurrent requests during index swaps never mix versions") {
  Fixture f;
  RecommendService service(f.model, "m1", f.tc.vocab, std::make_shared<FeatureStore>(4, 16));
  // Eleven indexes over different catalog slices; item ids identify the slice.
  std::vector<EmbeddingIndex> indexes;
  std::vector<std::vector<ItemSnapshot>> catalogs;
  std::map<std::string, std::set<std::string>> items_of_version;
  for (int v = 0; v <= 10; ++v) {
    std::vector<ItemSnapshot> slice(f.tc.corpus.items.begin() + v * 5, f.tc.corpus.items.begin() + v * 5 + 40);
    EmbeddingIndex idx = PrecomputeItems(slice, *f.model, f.tc.vocab);
    auto& ids = items_of_version[IndexVersion(idx)];
    for (const auto& it : slice) ids.insert(it.item_id);
    indexes.push_back(std::move(idx));
    catalogs.push_back(std::move(slice));
  }
  REQUIRE(items_of_version.size() == 11);
  service.SwapIndex(indexes[0], catalogs[0]);

  std::atomic<int> failures{0}, mixed{0}, done{0};
  std::vector<std::thread> clients;
  for (int c = 0; c < 4; ++c) {
    clients.emplace_back([&, c] {
      for (int i = c; i < 100; i += 4) {
        try {
          RecommendRequest req;
          req.events = f.EventsOf(SyntheticUserId(GenConfig{.n_users = 10}, i % 10));
          req.k = 10;
          const RecommendResponse r = service.Recommend(req);
          const auto it = items_of_version.find(r.index_version);
          if (it == items_of_version.end()) {
            ++mixed;
            continue;
          }
          for (const auto& step : r.steps) {
            for (const auto& item : step) {
              if (!it->second.count(item.item_id)) ++mixed;
            }
          }
        } catch (...) {
          ++failures;
        }
        ++done;
      }
    });
  }
  for (int v = 1; v <= 10; ++v) {
    service.SwapIndex(indexes[static_cast<std::size_t>(v)], catalogs[static_cast<std::size_t>(v)]);
    std::this_thread::yield();
  }
  for (auto& t : clients) t.join();
  CHECK(done == 100);
  CHECK(failures == 0);
  CHECK(mixed == 0);
}

TEST_CASE("HTTP endpoints") {
  Fixture f;
  auto store = std::make_shared<FeatureStore>(4, f.model->config().d_model);
  PrecomputeUsers(f.tc.corpus.events, *f.model, f.tc.vocab, *store);
  RecommendService service(f.model, "m1", f.tc.vocab, store);
  const auto dir = ScratchDir("http");
  WriteItemCatalog(dir / "items.jsonl", f.tc.corpus.items);
  HttpServer server(service, [&](const std::string& path) {
    const auto items = ReadItemCatalog(path);
    service.SwapIndex(PrecomputeItems(items, *f.model, f.tc.vocab), items);
    return service.snapshot()->version;
  });
  const int port = server.BindToAnyPort("127.0.0.1");
  REQUIRE(port > 0);
  std::thread listener([&server] { server.ListenAfterBind(); });
  server.WaitUntilReady();
  httplib::Client client("127.0.0.1", port);

  auto health = client.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(nlohmann::json::parse(health->body)["status"] == "no_index");

  const std::string user = store->UserIds().front();
  const std::string by_user = nlohmann::json{{"user_id", user}, {"k", 5}}.dump();
  auto not_ready = client.Post("/v1/recommendations", by_user, "application/json");
  REQUIRE(not_ready);
  CHECK(not_ready->status == 503);
  CHECK(nlohmann::json::parse(not_ready->body)["error"] == "NotReady");

  auto reindex = client.Post("/admin/reindex", nlohmann::json{{"items_path", (dir / "items.jsonl").string()}}.dump(),
                             "application/json");
  REQUIRE(reindex);
  CHECK(reindex->status == 200);
  const std::string version = nlohmann::json::parse(reindex->body)["index_version"];
  CHECK(version == service.snapshot()->version);

  auto ok = client.Post("/v1/recommendations", by_user, "application/json");
  REQUIRE(ok);
  CHECK(ok->status == 200);
  const auto body = nlohmann::json::parse(ok->body);
  CHECK(ValidateRecommendResponse(body, 5).empty());
  CHECK(body["cache_hit"] == true);
  CHECK(body["index_version"] == version);

  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : f.EventsOf(user)) events.push_back(EventToJson(e));
  auto inline_ok = client.Post("/v1/recommendations", nlohmann::json{{"events", events}, {"k", 5}}.dump(),
                               "application/json");
  REQUIRE(inline_ok);
  CHECK(inline_ok->status == 200);
  auto a = nlohmann::json::parse(inline_ok->body);
  auto b = body;
  a.erase("cache_hit");
  b.erase("cache_hit");
  CHECK(a == b);

  auto empty = client.Post("/v1/recommendations", R"({"user_id":"nobody"})", "application/json");
  REQUIRE(empty);
  CHECK(empty->status == 400);
  CHECK(nlohmann::json::parse(empty->body)["error"] == "EmptyHistory");
  auto bad_k = client.Post("/v1/recommendations", nlohmann::json{{"user_id", user}, {"k", 0}}.dump(), "application/json");
  REQUIRE(bad_k);
  CHECK(bad_k->status == 400);
  auto not_json = client.Post("/v1/recommendations", "{oops", "application/json");
  REQUIRE(not_json);
  CHECK(not_json->status == 400);

  const std::string item = f.tc.corpus.items[7].item_id;
  auto similar = client.Get("/v1/items/" + item + "/similar?k=3");
  REQUIRE(similar);
  CHECK(similar->status == 200);
  const auto sj = nlohmann::json::parse(similar->body);
  REQUIRE(sj["items"].size() == 3);
  CHECK(sj["items"][0]["item_id"] == item);
  auto missing = client.Get("/v1/items/no-such-item/similar?k=3");
  REQUIRE(missing);
  CHECK(missing->status == 404);

  health = client.Get("/healthz");
  REQUIRE(health);
  const auto hj = nlohmann::json::parse(health->body);
  CHECK(hj["status"] == "ok");
  CHECK(hj["model_version"] == "m1");
  CHECK(hj["index_version"] == version);

  server.Stop();
  listener.join();
  std::filesystem::remove_all(dir);
}

TEST_CASE("port override") {
  ::unsetenv("MERCATRAN_PORT");
  CHECK(ResolvePort(8080) == 8080);
  ::setenv("MERCATRAN_PORT", "9091", 1);
  CHECK(ResolvePort(8080) == 9091);
  ::setenv("MERCATRAN_PORT", "junk", 1);
  CHECK(ResolvePort(8080) == 8080);
  ::unsetenv("MERCATRAN_PORT");
  CHECK(HttpStatusFor(ErrorCode::kEmptyHistory) == 400);
  CHECK(HttpStatusFor(ErrorCode::kBadRequest) == 400);
  CHECK(HttpStatusFor(ErrorCode::kNotReady) == 503);
  CHECK(HttpStatusFor(ErrorCode::kUnknownItem) == 404);
  CHECK(HttpStatusFor(ErrorCode::kNaNInput) == 500);
}
