// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

// mercatran <gen|prep|train|eval|index|serve|demo> [options]

#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mercatran/checkpoint.hpp"
#include "mercatran/error.hpp"
#include "mercatran/feature_store.hpp"
#include "mercatran/http_server.hpp"
#include "mercatran/pipeline.hpp"
#include "mercatran/service.hpp"
#include "mercatran/vector_index.hpp"

namespace {

using mercatran::Error;
using mercatran::ErrorCode;
using nlohmann::json;

struct CommonFlags {
  std::string config;
  std::string workdir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;
};

void AddCommon(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "Pipeline config JSON (a bare model config for `train`)");
  cmd->add_option("--workdir", flags.workdir, "Working directory for artifacts");
  cmd->add_option_function<std::uint64_t>(
      "--seed",
      [&flags](const std::uint64_t& s) {
        flags.seed = s;
        flags.seed_set = true;
      },
      "Seed for every seeded component");
  cmd->add_option("--threads", flags.threads, "Worker threads")->check(CLI::PositiveNumber);
}

json ReadJson(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kInvalidConfig, path + " is not valid JSON");
  return j;
}

mercatran::PipelineConfig Resolve(const CommonFlags& flags) {
  mercatran::PipelineConfig config;
  if (!flags.config.empty()) {
    json j = ReadJson(flags.config);
    // A bare model config (as passed to `train --config model.json`).
    if (j.is_object() && j.contains("d_model") && !j.contains("model")) j = json{{"model", j}};
    config = mercatran::PipelineConfigFromJson(j, config);
  }
  if (!flags.workdir.empty()) config.paths = mercatran::PipelinePaths::Under(flags.workdir);
  if (flags.seed_set) mercatran::ApplySeed(config, flags.seed);
  config.threads = flags.threads;
  return config;
}

void EnsureParent(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

mercatran::HttpServer* g_server = nullptr;

void HandleSignal(int) {
  if (g_server != nullptr) g_server->Stop();
}

int Serve(const std::string& ckpt_path, const std::string& index_path, const std::string& store_path,
          const std::string& items_path, const std::string& vocab_path, const std::string& host, int port) {
  mercatran::Checkpoint ck = mercatran::LoadCheckpoint(ckpt_path);
  if (vocab_path.empty() && ck.vocab.is_null()) {
    throw Error(ErrorCode::kInvalidArgument, "checkpoint has no vocabulary; pass --vocab");
  }
  const mercatran::Vocab vocab =
      vocab_path.empty() ? mercatran::Vocab::FromJson(ck.vocab) : mercatran::Vocab::Load(vocab_path);
  const std::string model_version = ck.model_version;
  const int steps = ck.model.config().forecast_steps;
  const int d = ck.model.config().d_model;
  auto model = std::make_shared<const mercatran::MercatranModel<float>>(std::move(ck.model));
  auto store = std::make_shared<mercatran::FeatureStore>(
      store_path.empty() || !std::filesystem::exists(store_path) ? mercatran::FeatureStore(steps, d)
                                                                   : mercatran::FeatureStore::Load(store_path));
  mercatran::RecommendService service(model, model_version, vocab, store);
  std::vector<mercatran::ItemSnapshot> catalog;
  if (!items_path.empty()) catalog = mercatran::ReadItemCatalog(items_path);
  if (!index_path.empty()) service.SwapIndex(mercatran::LoadIndex(index_path), catalog);

  mercatran::HttpServer server(service, [&service, model, vocab](const std::string& path) {
    const auto items = mercatran::ReadItemCatalog(path);
    service.SwapIndex(mercatran::PrecomputeItems(items, *model, vocab), items);
    return service.snapshot()->version;
  });
  const int resolved = mercatran::ResolvePort(port);
  if (server.Bind(host, resolved) < 0) throw Error(ErrorCode::kIoError, "cannot bind " + host + ":" + std::to_string(resolved));
  g_server = &server;
  std::signal(SIGINT, HandleSignal);
  std::signal(SIGTERM, HandleSignal);
  mercatran::LogJson("serve_listening", {{"host", host}, {"port", resolved}, {"model_version", model_version}});
  server.ListenAfterBind();
  g_server = nullptr;
  mercatran::LogJson("serve_stopped");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Three-tower sequential recommender: data generation, training, evaluation and serving"};
  app.require_subcommand(1);

  CommonFlags gen_flags, prep_flags, train_flags, eval_flags, index_flags, demo_flags;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic corpus (events.jsonl, items.jsonl)");
  AddCommon(gen, gen_flags);
  int gen_users = 0, gen_items = 0;
  gen->add_option("--users", gen_users, "Override number of users");
  gen->add_option("--items", gen_items, "Override number of items");

  auto* prep = app.add_subcommand("prep", "Build the vocabulary and train/test example files");
  AddCommon(prep, prep_flags);
  std::string feature_config;
  prep->add_option("--feature-config", feature_config, "title_brand_category | title | brand_category");

  auto* train = app.add_subcommand("train", "Train the model, checkpointing every epoch");
  AddCommon(train, train_flags);
  std::string train_examples, train_vocab, train_out;
  int train_epochs = -1;
  train->add_option("--examples", train_examples, "Training examples file");
  train->add_option("--vocab", train_vocab, "Vocabulary JSON");
  train->add_option("--out", train_out, "Checkpoint directory");
  train->add_option("--epochs", train_epochs, "Number of epochs");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on held-out examples");
  AddCommon(eval, eval_flags);
  std::string eval_ckpt, eval_examples, eval_out;
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint file (default <workdir>/ckpt/best)");
  eval->add_option("--examples", eval_examples, "Test examples file");
  eval->add_option("--out", eval_out, "Report path");

  auto* index = app.add_subcommand("index", "Precompute the item index and the user feature store");
  AddCommon(index, index_flags);
  std::string index_ckpt, index_out, index_store;
  index->add_option("--ckpt", index_ckpt, "Checkpoint file");
  index->add_option("--out", index_out, "Index output path");
  index->add_option("--store", index_store, "Feature store path");

  auto* serve = app.add_subcommand("serve", "Serve recommendations over HTTP");
  std::string serve_ckpt, serve_index, serve_store, serve_items, serve_vocab, serve_host = "0.0.0.0";
  int serve_port = 8080;
  serve->add_option("--ckpt", serve_ckpt, "Checkpoint file")->required();
  serve->add_option("--index", serve_index, "Index file");
  serve->add_option("--store", serve_store, "Feature store file");
  serve->add_option("--items", serve_items, "Item catalog for response metadata");
  serve->add_option("--vocab", serve_vocab, "Vocabulary JSON (default: the one stored in the checkpoint)");
  serve->add_option("--host", serve_host, "Bind address");
  serve->add_option("--port", serve_port, "Port (MERCATRAN_PORT overrides)");

  auto* demo = app.add_subcommand("demo", "Run gen -> prep -> train -> eval -> index -> one served request");
  AddCommon(demo, demo_flags);
  std::string profile = "smoke";
  demo->add_option("profile", profile, "smoke | full-desk")->check(CLI::IsMember({"smoke", "full-desk"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      auto config = Resolve(gen_flags);
      if (gen_users > 0) config.gen.n_users = gen_users;
      if (gen_items > 0) config.gen.n_items = gen_items;
      mercatran::RunGen(config);
    } else if (prep->parsed()) {
      auto config = Resolve(prep_flags);
      if (!feature_config.empty()) config.feature_config = mercatran::ParseFeatureConfig(feature_config);
      mercatran::RunPrep(config);
    } else if (train->parsed()) {
      auto config = Resolve(train_flags);
      if (!train_examples.empty()) config.paths.train_examples = train_examples;
      if (!train_vocab.empty()) config.paths.vocab = train_vocab;
      if (!train_out.empty()) config.paths.checkpoints = train_out;
      if (train_epochs >= 0) config.epochs = train_epochs;
      mercatran::RunTrain(config);
    } else if (eval->parsed()) {
      auto config = Resolve(eval_flags);
      if (!eval_ckpt.empty()) config.paths.eval_checkpoint = eval_ckpt;
      if (!eval_examples.empty()) config.paths.test_examples = eval_examples;
      if (!eval_out.empty()) config.paths.report = eval_out;
      EnsureParent(config.paths.report);
      mercatran::RunEval(config);
    } else if (index->parsed()) {
      auto config = Resolve(index_flags);
      if (!index_ckpt.empty()) config.paths.eval_checkpoint = index_ckpt;
      if (!index_out.empty()) config.paths.index = index_out;
      if (!index_store.empty()) config.paths.store = index_store;
      EnsureParent(config.paths.index);
      EnsureParent(config.paths.store);
      mercatran::RunIndex(config);
    } else if (serve->parsed()) {
      return Serve(serve_ckpt, serve_index, serve_store, serve_items, serve_vocab, serve_host, serve_port);
    } else if (demo->parsed()) {
      auto config = mercatran::DemoProfile(profile, demo_flags.workdir.empty() ? "work/" + profile : demo_flags.workdir);
      if (!demo_flags.config.empty()) config = mercatran::PipelineConfigFromJson(ReadJson(demo_flags.config), config);
      if (demo_flags.seed_set) mercatran::ApplySeed(config, demo_flags.seed);
      config.threads = demo_flags.threads;
      mercatran::RunDemo(config);
    }
  } catch (const Error& e) {
    mercatran::LogJson("error", {{"code", std::string(mercatran::ErrorCodeName(e.code()))}, {"message", e.what()}});
    return 1;
  } catch (const std::exception& e) {
    mercatran::LogJson("error", {{"code", "Internal"}, {"message", e.what()}});
    return 2;
  }
  return 0;
}
