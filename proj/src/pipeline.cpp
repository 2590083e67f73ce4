// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mercatran/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <mutex>

#include "mercatran/checkpoint.hpp"
#include "mercatran/feature_store.hpp"
#include "mercatran/service.hpp"
#include "mercatran/train.hpp"
#include "mercatran/vector_index.hpp"

namespace mercatran {

using nlohmann::json;

namespace {

constexpr std::string_view kToolVersion = "0.1.0";

void WriteJsonFile(const std::filesystem::path& path, const json& j) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp);
    out << j.dump(2) << "\n";
    if (!out) throw Error(ErrorCode::kIoError, "write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

json MergeInto(json base, const json& overrides) {
  if (!overrides.is_object()) throw Error(ErrorCode::kInvalidConfig, "config section must be an object");
  base.update(overrides);
  return base;
}

Checkpoint LoadBest(const PipelineConfig& config) {
  if (!config.paths.eval_checkpoint.empty()) return LoadCheckpoint(config.paths.eval_checkpoint);
  const auto dir = config.paths.checkpoints;
  return LoadCheckpoint(std::filesystem::exists(dir / "best") ? dir / "best" : dir / "last");
}

template <typename Fn>
auto Stage(std::string_view name, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  LogJson("stage_start", {{"stage", name}});
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      LogJson("stage_done", {{"stage", name},
                             {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}});
    } else {
      auto out = fn();
      LogJson("stage_done", {{"stage", name},
                             {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}});
      return out;
    }
  } catch (const Error& e) {
    LogJson("stage_failed", {{"stage", name}, {"error", std::string(ErrorCodeName(e.code()))}, {"message", e.what()}});
    throw Error(e.code(), "stage " + std::string(name) + ": " + e.what());
  }
}

}  // namespace

PipelinePaths PipelinePaths::Under(const std::filesystem::path& workdir) {
  PipelinePaths p;
  p.workdir = workdir;
  p.events = workdir / "events.jsonl";
  p.items = workdir / "items.jsonl";
  p.vocab = workdir / "vocab.json";
  p.train_examples = workdir / "train.bin";
  p.test_examples = workdir / "test.bin";
  p.checkpoints = workdir / "ckpt";
  p.index = workdir / "index.midx";
  p.store = workdir / "store.mfst";
  p.report = workdir / "report.json";
  p.manifest = workdir / "run_manifest.json";
  return p;
}

void ApplySeed(PipelineConfig& config, std::uint64_t seed) {
  config.seed = seed;
  config.gen.seed = seed;
  config.model.seed = seed;
}

PipelineConfig PipelineConfigFromJson(const json& j, PipelineConfig base) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidConfig, "pipeline config must be a JSON object");
  try {
    if (j.contains("workdir")) base.paths = PipelinePaths::Under(j.at("workdir").get<std::string>());
    if (j.contains("seed")) ApplySeed(base, j.at("seed").get<std::uint64_t>());
    if (j.contains("gen")) base.gen = GenConfigFromJson(MergeInto(GenConfigToJson(base.gen), j.at("gen")));
    if (j.contains("model")) base.model = ModelConfigFromJson(MergeInto(ModelConfigToJson(base.model), j.at("model")));
    if (j.contains("feature_config")) base.feature_config = ParseFeatureConfig(j.at("feature_config").get<std::string>());
    base.vocab_limit = j.value("vocab_limit", base.vocab_limit);
    base.segment_length = j.value("segment_length", base.segment_length);
    base.test_fraction = j.value("test_fraction", base.test_fraction);
    base.epochs = j.value("epochs", base.epochs);
    base.threads = j.value("threads", base.threads);
    if (j.contains("ks")) base.ks = j.at("ks").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("pipeline config: ") + e.what());
  }
  if (base.vocab_limit <= Vocab::kNumReserved || base.vocab_limit > kDefaultVocabLimit) {
    throw Error(ErrorCode::kInvalidConfig, "vocab_limit must be in (3, 32768]");
  }
  if (!(base.test_fraction > 0.0 && base.test_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "test_fraction must be in (0, 1)");
  }
  if (base.epochs < 0 || base.threads < 1 || base.segment_length < 0) {
    throw Error(ErrorCode::kInvalidConfig, "epochs, threads and segment_length must be non-negative (threads >= 1)");
  }
  return base;
}

json PipelineConfigToJson(const PipelineConfig& c) {
  return {{"workdir", c.paths.workdir.string()},
          {"seed", c.seed},
          {"gen", GenConfigToJson(c.gen)},
          {"model", ModelConfigToJson(c.model)},
          {"feature_config", std::string(FeatureConfigName(c.feature_config))},
          {"vocab_limit", c.vocab_limit},
          {"segment_length", c.segment_length},
          {"test_fraction", c.test_fraction},
          {"epochs", c.epochs},
          {"threads", c.threads},
          {"ks", c.ks}};
}

PipelineConfig DemoProfile(std::string_view profile, const std::filesystem::path& workdir) {
  PipelineConfig c;
  c.paths = PipelinePaths::Under(workdir);
  if (profile == "smoke") {
    c.gen.n_users = 1000;
    c.epochs = 5;
  } else if (profile == "full-desk") {
    c.gen.n_users = 5000;
    c.gen.n_items = 2000;
    c.gen.affinity_strength = 0.9;
    c.epochs = 20;
    c.model.batch_size = 64;
    c.model.warmup_steps = 400;
  } else {
    throw Error(ErrorCode::kInvalidConfig, "unknown demo profile '" + std::string(profile) + "'");
  }
  ApplySeed(c, 42);
  return c;
}

void LogJson(std::string_view event, json fields) {
  static std::mutex mu;
  const auto now = std::chrono::system_clock::now();
  const auto us = std::chrono::duration_cast<std::chrono::microseconds>(now.time_since_epoch()).count();
  fields["ts"] = FormatRfc3339Micros(us);
  fields["event"] = event;
  const std::string line = fields.dump();
  std::lock_guard lock(mu);
  std::cerr << line << '\n';
}

void RunGen(const PipelineConfig& config) {
  for (const auto& p : {config.paths.items, config.paths.events}) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  }
  const Corpus corpus = GenerateCorpus(config.gen);
  WriteItemCatalog(config.paths.items, corpus.items);
  WriteEventLog(config.paths.events, corpus.events);
  LogJson("gen", {{"items", corpus.items.size()}, {"events", corpus.events.size()}, {"users", config.gen.n_users}});
}

void RunPrep(const PipelineConfig& config) {
  const auto items = ReadItemCatalog(config.paths.items);
  const auto events = ReadEventLog(config.paths.events);
  const Vocab vocab = Vocab::Build(items, config.feature_config, config.vocab_limit);

  std::vector<EventRecord> train_events, test_events;
  for (const auto& e : events) {
    (IsHeldOutUser(e.user_id, config.test_fraction, config.seed) ? test_events : train_events).push_back(e);
  }
  const PrepOptions options{config.segment_length, config.model.max_tokens};
  ExampleSet train{config.feature_config, config.model.max_tokens, vocab.size(),
                   PrepareExamples(train_events, vocab, options)};
  ExampleSet test{config.feature_config, config.model.max_tokens, vocab.size(),
                  PrepareExamples(test_events, vocab, options)};
  vocab.Save(config.paths.vocab);
  SaveExamples(config.paths.train_examples, train);
  SaveExamples(config.paths.test_examples, test);
  LogJson("prep", {{"vocab_size", vocab.size()},
                   {"train_examples", train.examples.size()},
                   {"test_examples", test.examples.size()}});
}

void RunTrain(const PipelineConfig& config) {
  const Vocab vocab = Vocab::Load(config.paths.vocab);
  const ExampleSet train = LoadExamples(config.paths.train_examples);
  ModelConfig model = config.model;
  // The embedding table only needs rows for tokens the vocabulary can emit.
  model.vocab_size = std::max(vocab.size(), Vocab::kNumReserved + 1);
  TrainOptions options;
  options.epochs = config.epochs;
  options.checkpoint_dir = config.paths.checkpoints;
  options.resume = true;
  options.vocab = vocab.ToJson();
  options.on_epoch = [](const EpochLog& e) {
    LogJson("epoch", {{"epoch", e.epoch}, {"step", e.step}, {"loss", e.loss}, {"lr", e.lr}});
  };
  Train(train.examples, model, options);
}

json RunEval(const PipelineConfig& config) {
  const Checkpoint ck = LoadBest(config);
  const ExampleSet test = LoadExamples(config.paths.test_examples);
  const ExampleSet train = LoadExamples(config.paths.train_examples);
  EvalOptions options;
  options.ks = config.ks;
  options.threads = config.threads;
  const EvalReport report = Evaluate(ck.model, test.examples, options);

  json popular = json::object();
  json random = json::object();
  const auto pop = MostPopularItemRecall(train.examples, test.examples, config.ks);
  for (std::size_t ki = 0; ki < config.ks.size(); ++ki) {
    json per_step = json::array();
    for (const auto& step : pop) per_step.push_back(step[ki]);
    popular["recall@" + std::to_string(config.ks[ki])] = per_step;
    random["recall@" + std::to_string(config.ks[ki])] = RandomRecall(config.ks[ki], report.num_indexed_items);
  }
  json out = {{"model_version", ck.model_version},
              {"epochs_trained", ck.progress ? ck.progress->epochs_completed : 0},
              {"evaluation", report.ToJson()},
              {"baselines", {{"most_popular_item", popular}, {"random_item", random}}}};
  WriteJsonFile(config.paths.report, out);
  LogJson("eval", {{"sequences", report.num_sequences}, {"indexed_items", report.num_indexed_items}});
  return out;
}

void RunIndex(const PipelineConfig& config) {
  const Checkpoint ck = LoadBest(config);
  const Vocab vocab = Vocab::Load(config.paths.vocab);
  const auto items = ReadItemCatalog(config.paths.items);
  const EmbeddingIndex index = PrecomputeItems(items, ck.model, vocab, config.paths.index);
  FeatureStore store(ck.model.config().forecast_steps, ck.model.config().d_model);
  if (std::filesystem::exists(config.paths.store)) store = FeatureStore::Load(config.paths.store);
  std::size_t failures = 0;
  const std::size_t updated = PrecomputeUsers(ReadEventLog(config.paths.events), ck.model, vocab, store,
                                              [&failures](const std::string& user, const Error& e) {
                                                ++failures;
                                                LogJson("precompute_user_failed",
                                                        {{"user_id", user}, {"message", e.what()}});
                                              });
  store.Save(config.paths.store);
  LogJson("index", {{"items", index.size()}, {"users_updated", updated}, {"user_failures", failures}});
}

json RunDemo(const PipelineConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  Stage("gen", [&] { RunGen(config); });
  Stage("prep", [&] { RunPrep(config); });
  Stage("train", [&] { RunTrain(config); });
  json report = Stage("eval", [&] { return RunEval(config); });
  Stage("index", [&] { RunIndex(config); });

  json served = Stage("serve", [&] {
    Checkpoint ck = LoadBest(config);
    const std::string model_version = ck.model_version;
    auto model = std::make_shared<const MercatranModel<float>>(std::move(ck.model));
    auto store = std::make_shared<FeatureStore>(FeatureStore::Load(config.paths.store));
    RecommendService service(model, model_version, Vocab::Load(config.paths.vocab), store);
    service.SwapIndex(LoadIndex(config.paths.index), ReadItemCatalog(config.paths.items));
    const auto users = store->UserIds();
    if (users.empty()) throw Error(ErrorCode::kEmptyHistory, "feature store is empty");
    RecommendRequest request;
    request.user_id = users.front();
    request.k = 5;
    return json{{"request", {{"user_id", users.front()}, {"k", 5}}}, {"response", service.Recommend(request).ToJson()}};
  });
  report["served_request"] = served;
  WriteJsonFile(config.paths.report, report);

  const json manifest = {
      {"tool_version", kToolVersion},
      {"config", PipelineConfigToJson(config)},
      {"seeds", {{"pipeline", config.seed}, {"gen", config.gen.seed}, {"model", config.model.seed}}},
      {"model_version", report["model_version"]},
      {"index_version", served["response"]["index_version"]},
      {"artifacts",
       {{"events", config.paths.events.string()},
        {"items", config.paths.items.string()},
        {"vocab", config.paths.vocab.string()},
        {"train_examples", config.paths.train_examples.string()},
        {"test_examples", config.paths.test_examples.string()},
        {"checkpoints", config.paths.checkpoints.string()},
        {"index", config.paths.index.string()},
        {"store", config.paths.store.string()},
        {"report", config.paths.report.string()}}},
      {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
  WriteJsonFile(config.paths.manifest, manifest);
  return report;
}

}  // namespace mercatran
