// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mercatran/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string_view>

#include "mercatran/error.hpp"
#include "mercatran/rng.hpp"

namespace mercatran {

namespace {

// Stream tags for the counter-based generator.
constexpr std::uint64_t kStreamBrand = 1ULL << 56;
constexpr std::uint64_t kStreamCategory = 2ULL << 56;
constexpr std::uint64_t kStreamPool = 3ULL << 56;
constexpr std::uint64_t kStreamSeries = 4ULL << 56;
constexpr std::uint64_t kStreamItem = 5ULL << 56;
constexpr std::uint64_t kStreamUser = 6ULL << 56;
constexpr std::uint64_t kStreamPlanted = 7ULL << 56;

constexpr std::string_view kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh"};
constexpr std::string_view kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};

std::string PseudoWord(CounterRng& rng, int syllables) {
  std::string w;
  for (int i = 0; i < syllables; ++i) {
    w += kOnsets[rng.UniformInt(std::size(kOnsets))];
    w += kVowels[rng.UniformInt(std::size(kVowels))];
  }
  return w;
}

std::string Capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

struct Catalog {
  // Per leaf category.
  std::vector<std::int64_t> c0_of_leaf, c1_of_leaf;
  std::vector<std::string> c0_names, c1_names, c2_names;
  std::vector<std::vector<std::string>> pools;
  std::vector<std::string> brand_names;
  std::vector<ItemSnapshot> items;
  std::vector<int> series_of_item;
  std::vector<std::vector<int>> items_of_series;
  std::vector<std::vector<int>> items_of_brand;
};

std::int64_t BrandId(int b) { return 100 + b; }
std::int64_t C0Id(int c) { return 1 + c; }
std::int64_t C1Id(int c) { return 10 + c; }
std::int64_t C2Id(int c) { return 1000 + c; }

Catalog BuildCatalog(const GenConfig& cfg) {
  Catalog cat;
  const Taxonomy& tx = cfg.taxonomy;
  const int n_leaves = tx.num_leaves();
  for (int c0 = 0; c0 < tx.n_c0; ++c0) {
    CounterRng r(cfg.seed, kStreamCategory + static_cast<std::uint64_t>(c0));
    cat.c0_names.push_back(Capitalize(PseudoWord(r, 3)));
  }
  for (int c1 = 0; c1 < tx.n_c0 * tx.n_c1_per_c0; ++c1) {
    CounterRng r(cfg.seed, kStreamCategory + 10000 + static_cast<std::uint64_t>(c1));
    cat.c1_names.push_back(Capitalize(PseudoWord(r, 3)));
  }
  for (int leaf = 0; leaf < n_leaves; ++leaf) {
    const int c1 = leaf / tx.n_c2_per_c1;
    cat.c1_of_leaf.push_back(c1);
    cat.c0_of_leaf.push_back(c1 / tx.n_c1_per_c0);
    CounterRng r(cfg.seed, kStreamCategory + 20000 + static_cast<std::uint64_t>(leaf));
    cat.c2_names.push_back(Capitalize(PseudoWord(r, 3)) + " " + Capitalize(PseudoWord(r, 2)));
    CounterRng pr(cfg.seed, kStreamPool + static_cast<std::uint64_t>(leaf));
    std::vector<std::string> pool;
    while (static_cast<int>(pool.size()) < cfg.vocab_per_c2) {
      std::string w = PseudoWord(pr, 2 + static_cast<int>(pr.UniformInt(2)));
      if (std::find(pool.begin(), pool.end(), w) == pool.end()) pool.push_back(std::move(w));
    }
    cat.pools.push_back(std::move(pool));
  }
  for (int b = 0; b < cfg.n_brands; ++b) {
    CounterRng r(cfg.seed, kStreamBrand + static_cast<std::uint64_t>(b));
    cat.brand_names.push_back(Capitalize(PseudoWord(r, 2)) + std::to_string(b));
  }

  cat.items_of_brand.resize(static_cast<std::size_t>(std::max(cfg.n_brands, 0)));
  const int width = std::max<int>(6, static_cast<int>(std::to_string(std::max(cfg.n_items, 1)).size()));
  for (int i = 0; i < cfg.n_items; ++i) {
    const int brand = i % cfg.n_brands;
    const int rank_in_brand = i / cfg.n_brands;
    const int series_in_brand = rank_in_brand / cfg.series_size;
    const std::uint64_t series_key = static_cast<std::uint64_t>(brand) * 1000003ULL + static_cast<std::uint64_t>(series_in_brand);
    CounterRng sr(cfg.seed, kStreamSeries + series_key);
    const int leaf = static_cast<int>(sr.UniformInt(static_cast<std::uint64_t>(n_leaves)));
    const auto& pool = cat.pools[static_cast<std::size_t>(leaf)];
    const std::string& series_word = pool[sr.UniformInt(pool.size())];
    const double base_price = std::exp(2.0 + 3.0 * sr.Uniform());

    CounterRng ir(cfg.seed, kStreamItem + static_cast<std::uint64_t>(i));
    ItemSnapshot it;
    std::string id = std::to_string(i);
    it.item_id = "m" + std::string(static_cast<std::size_t>(width) - std::min<std::size_t>(id.size(), width), '0') + id;
    it.name = Capitalize(series_word) + " " + pool[ir.UniformInt(pool.size())] + " " + pool[ir.UniformInt(pool.size())] +
              " " + cat.brand_names[static_cast<std::size_t>(brand)];
    it.price_usd = std::round(base_price * (0.8 + 0.4 * ir.Uniform()) * 100.0) / 100.0;
    it.brand_id = BrandId(brand);
    it.brand_name = cat.brand_names[static_cast<std::size_t>(brand)];
    const auto c1 = cat.c1_of_leaf[static_cast<std::size_t>(leaf)];
    const auto c0 = cat.c0_of_leaf[static_cast<std::size_t>(leaf)];
    it.c0_id = C0Id(static_cast<int>(c0));
    it.c0_name = cat.c0_names[static_cast<std::size_t>(c0)];
    it.c1_id = C1Id(static_cast<int>(c1));
    it.c1_name = cat.c1_names[static_cast<std::size_t>(c1)];
    it.c2_id = C2Id(leaf);
    it.c2_name = cat.c2_names[static_cast<std::size_t>(leaf)];
    it.item_condition_id = 1 + static_cast<std::int64_t>(ir.UniformInt(5));
    it.size_id = static_cast<std::int64_t>(ir.UniformInt(20));
    it.shipper_id = static_cast<std::int64_t>(ir.UniformInt(2));

    // Series ids are dense per (brand, series_in_brand) in item order.
    int series_id;
    if (rank_in_brand % cfg.series_size == 0) {
      series_id = static_cast<int>(cat.items_of_series.size());
      cat.items_of_series.emplace_back();
    } else {
      series_id = cat.series_of_item[static_cast<std::size_t>(i - cfg.n_brands)];
    }
    cat.series_of_item.push_back(series_id);
    cat.items_of_series[static_cast<std::size_t>(series_id)].push_back(i);
    cat.items_of_brand[static_cast<std::size_t>(brand)].push_back(i);
    cat.items.push_back(std::move(it));
  }
  return cat;
}

int PlantedBrandIndex(const GenConfig& cfg, int user) {
  CounterRng r(cfg.seed, kStreamPlanted + static_cast<std::uint64_t>(user));
  return static_cast<int>(r.UniformInt(static_cast<std::uint64_t>(cfg.n_brands)));
}

EventType DrawEventType(CounterRng& rng, const std::array<double, kNumEventTypes>& w, double total) {
  double u = rng.Uniform() * total;
  for (int k = 0; k < kNumEventTypes; ++k) {
    if (u < w[static_cast<std::size_t>(k)]) return static_cast<EventType>(k);
    u -= w[static_cast<std::size_t>(k)];
  }
  for (int k = kNumEventTypes - 1; k >= 0; --k) {
    if (w[static_cast<std::size_t>(k)] > 0) return static_cast<EventType>(k);
  }
  return EventType::kItemView;
}

void GenerateUser(const GenConfig& cfg, const Catalog& cat, int user, std::vector<EventRecord>& out) {
  CounterRng rng(cfg.seed, kStreamUser + static_cast<std::uint64_t>(user));
  const int lo = cfg.events_per_user_range[0];
  const int hi = cfg.events_per_user_range[1];
  const int n_events = lo + static_cast<int>(rng.UniformInt(static_cast<std::uint64_t>(hi - lo + 1)));
  const int planted = PlantedBrandIndex(cfg, user);
  const double weight_total =
      std::accumulate(cfg.event_type_weights.begin(), cfg.event_type_weights.end(), 0.0);

  const std::string user_id = SyntheticUserId(cfg, user);
  std::int64_t t = cfg.start_time_us + static_cast<std::int64_t>(rng.UniformInt(30ULL * 86400ULL)) * 1000000;
  int session = 0;
  int prev_item = -1;
  for (int e = 0; e < n_events; ++e) {
    if (e > 0) {
      if (rng.Bernoulli(0.1)) {
        t += (3600 + static_cast<std::int64_t>(rng.UniformInt(3ULL * 86400ULL))) * 1000000;
        ++session;
      } else {
        t += (5 + static_cast<std::int64_t>(rng.UniformInt(600))) * 1000000 +
             static_cast<std::int64_t>(rng.UniformInt(1000000));
      }
    }
    const int brand = rng.Bernoulli(cfg.affinity_strength)
                          ? planted
                          : static_cast<int>(rng.UniformInt(static_cast<std::uint64_t>(cfg.n_brands)));
    const bool continue_series = rng.Bernoulli(cfg.series_continue);
    const auto& brand_items = cat.items_of_brand[static_cast<std::size_t>(brand)];
    int item;
    if (prev_item >= 0 && prev_item % cfg.n_brands == brand && continue_series) {
      const auto& series = cat.items_of_series[static_cast<std::size_t>(cat.series_of_item[static_cast<std::size_t>(prev_item)])];
      item = series[rng.UniformInt(series.size())];
    } else {
      item = brand_items[rng.UniformInt(brand_items.size())];
    }
    prev_item = item;

    EventRecord ev;
    ev.user_id = user_id;
    ev.sequence_id = user_id + "-s0";
    ev.session_id = user_id + "-v" + std::to_string(session);
    ev.stime_us = t;
    ev.event_type = DrawEventType(rng, cfg.event_type_weights, weight_total);
    ev.item = cat.items[static_cast<std::size_t>(item)];
    // Listings are editable: occasionally the snapshot carries a changed price.
    if (rng.Bernoulli(0.05) && ev.item.price_usd) {
      ev.item.price_usd = std::round(*ev.item.price_usd * (0.7 + 0.25 * rng.Uniform()) * 100.0) / 100.0;
    }
    out.push_back(std::move(ev));
  }
}

}  // namespace

void ValidateGenConfig(const GenConfig& c) {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::kInvalidConfig, why); };
  if (c.n_users < 0 || c.n_items < 0 || c.n_brands < 0) fail("counts must be non-negative");
  if (c.taxonomy.n_c0 <= 0 || c.taxonomy.n_c1_per_c0 <= 0 || c.taxonomy.n_c2_per_c1 <= 0) fail("taxonomy must be non-empty");
  if (c.n_brands == 0) fail("n_brands must be positive");
  if (c.n_items < c.n_brands) fail("n_items must be at least n_brands");
  if (c.events_per_user_range[0] < 0 || c.events_per_user_range[1] < c.events_per_user_range[0]) {
    fail("events_per_user_range must be [min,max] with 0 <= min <= max");
  }
  if (!(c.affinity_strength >= 0.0 && c.affinity_strength <= 1.0)) fail("affinity_strength must be in [0,1]");
  if (!(c.series_continue >= 0.0 && c.series_continue <= 1.0)) fail("series_continue must be in [0,1]");
  if (c.vocab_per_c2 <= 0) fail("vocab_per_c2 must be positive");
  if (c.series_size <= 0) fail("series_size must be positive");
  double total = 0;
  for (double w : c.event_type_weights) {
    if (!(w >= 0.0)) fail("event_type_weights must be non-negative");
    total += w;
  }
  if (!(total > 0.0)) fail("event_type_weights must not all be zero");
}

GenConfig GenConfigFromJson(const nlohmann::json& j) {
  GenConfig c;
  c.seed = j.value("seed", c.seed);
  c.n_users = j.value("n_users", c.n_users);
  c.n_items = j.value("n_items", c.n_items);
  c.n_brands = j.value("n_brands", c.n_brands);
  if (j.contains("taxonomy")) {
    const auto& t = j.at("taxonomy");
    if (t.is_array()) {
      c.taxonomy = {t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>()};
    } else {
      c.taxonomy.n_c0 = t.value("n_c0", c.taxonomy.n_c0);
      c.taxonomy.n_c1_per_c0 = t.value("n_c1_per_c0", c.taxonomy.n_c1_per_c0);
      c.taxonomy.n_c2_per_c1 = t.value("n_c2_per_c1", c.taxonomy.n_c2_per_c1);
    }
  }
  if (j.contains("events_per_user_range")) c.events_per_user_range = j.at("events_per_user_range").get<std::array<int, 2>>();
  c.affinity_strength = j.value("affinity_strength", c.affinity_strength);
  c.vocab_per_c2 = j.value("vocab_per_c2", c.vocab_per_c2);
  if (j.contains("event_type_weights")) {
    c.event_type_weights = j.at("event_type_weights").get<std::array<double, kNumEventTypes>>();
  }
  c.series_size = j.value("series_size", c.series_size);
  c.series_continue = j.value("series_continue", c.series_continue);
  c.start_time_us = j.value("start_time_us", c.start_time_us);
  ValidateGenConfig(c);
  return c;
}

nlohmann::json GenConfigToJson(const GenConfig& c) {
  return {
      {"seed", c.seed},
      {"n_users", c.n_users},
      {"n_items", c.n_items},
      {"n_brands", c.n_brands},
      {"taxonomy", {{"n_c0", c.taxonomy.n_c0}, {"n_c1_per_c0", c.taxonomy.n_c1_per_c0}, {"n_c2_per_c1", c.taxonomy.n_c2_per_c1}}},
      {"events_per_user_range", c.events_per_user_range},
      {"affinity_strength", c.affinity_strength},
      {"vocab_per_c2", c.vocab_per_c2},
      {"event_type_weights", c.event_type_weights},
      {"series_size", c.series_size},
      {"series_continue", c.series_continue},
      {"start_time_us", c.start_time_us},
  };
}

std::string SyntheticUserId(const GenConfig& config, int index) {
  const auto width = std::to_string(std::max(config.n_users - 1, 0)).size();
  std::string id = std::to_string(index);
  return "u" + std::string(width > id.size() ? width - id.size() : 0, '0') + id;
}

Corpus GenerateCorpus(const GenConfig& config) {
  ValidateGenConfig(config);
  Catalog cat = BuildCatalog(config);
  Corpus corpus;
  for (int u = 0; u < config.n_users; ++u) GenerateUser(config, cat, u, corpus.events);
  corpus.items = std::move(cat.items);
  return corpus;
}

std::int64_t PlantedAffinityOracle(const GenConfig& config, const std::string& user_id) {
  if (user_id.size() < 2 || user_id[0] != 'u' || user_id.size() > 12) throw Error(ErrorCode::kUnknownUser, user_id);
  std::int64_t index = 0;
  for (std::size_t i = 1; i < user_id.size(); ++i) {
    const char ch = user_id[i];
    if (ch < '0' || ch > '9') throw Error(ErrorCode::kUnknownUser, user_id);
    index = index * 10 + (ch - '0');
  }
  if (index >= config.n_users || SyntheticUserId(config, static_cast<int>(index)) != user_id) {
    throw Error(ErrorCode::kUnknownUser, user_id);
  }
  return BrandId(PlantedBrandIndex(config, static_cast<int>(index)));
}

}  // namespace mercatran
