// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

// Small corpora and models shared by the test binaries.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mercatran/model.hpp"
#include "mercatran/preprocess.hpp"
#include "mercatran/synthgen.hpp"

namespace mercatran::testing {

struct TinyCorpus {
  Corpus corpus;
  Vocab vocab;
  std::vector<SbrExample> examples;
};

inline TinyCorpus MakeTinyCorpus(int n_users, std::uint64_t seed = 42, int n_items = 120) {
  GenConfig g;
  g.seed = seed;
  g.n_users = n_users;
  g.n_items = n_items;
  g.n_brands = 12;
  g.vocab_per_c2 = 6;
  TinyCorpus t{GenerateCorpus(g), Vocab(), {}};
  t.vocab = Vocab::Build(t.corpus.items, FeatureConfig::kTitleBrandCategory);
  t.examples = PrepareExamples(t.corpus.events, t.vocab);
  return t;
}

inline ModelConfig TinyModelConfig(int vocab_size) {
  ModelConfig c;
  c.d_model = 16;
  c.d_ff = 32;
  c.heads = 4;
  c.blocks = 2;
  c.vocab_size = vocab_size;
  c.batch_size = 8;
  c.dropout = 0.1;
  c.warmup_steps = 50;
  c.seed = 7;
  return c;
}

// A fresh empty directory under the system temp dir.
inline std::filesystem::path ScratchDir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mercatran_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace mercatran::testing
