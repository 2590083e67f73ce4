// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

// Cleaning, windowing and tokenization of user sequences into training
// examples: consecutive-duplicate removal, fixed-length segmentation, the
// (history <= 22, targets = 4) window and a frequency-ranked vocabulary.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mercatran/datamodel.hpp"

namespace mercatran {

inline constexpr int kMinSequenceLength = 10;
inline constexpr int kMaxHistory = 22;
inline constexpr int kForecastSteps = 4;
inline constexpr int kExampleWindow = kMaxHistory + kForecastSteps;
inline constexpr int kDefaultMaxTokens = 32;
inline constexpr int kDefaultVocabLimit = 32768;

enum class FeatureConfig : std::uint8_t { kTitleBrandCategory = 0, kTitleOnly = 1, kBrandCategory = 2 };

std::string_view FeatureConfigName(FeatureConfig config);
// Accepts "title_brand_category", "title" (or "title_only"), "brand_category".
FeatureConfig ParseFeatureConfig(std::string_view name);

// Lowercases ASCII and splits on ASCII whitespace and punctuation. Bytes
// >= 0x80 are kept inside tokens so UTF-8 text survives intact.
std::vector<std::string> TokenizeText(std::string_view text);

// Feature tokens of an item in canonical order: title, brand, c0, c1, c2.
std::vector<std::string> FeatureTokens(const ItemSnapshot& item, FeatureConfig config);

class Vocab {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;
  static constexpr std::int32_t kBos = 2;
  static constexpr std::int32_t kNumReserved = 3;

  Vocab();

  // Keeps the (limit - 3) most frequent tokens; ties by ascending token.
  static Vocab Build(const std::vector<ItemSnapshot>& items, FeatureConfig config, int limit = kDefaultVocabLimit);

  std::int32_t Id(std::string_view token) const;
  const std::string& Token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  int limit() const { return limit_; }
  FeatureConfig feature_config() const { return config_; }

  nlohmann::json ToJson() const;
  static Vocab FromJson(const nlohmann::json& j);
  void Save(const std::filesystem::path& path) const;
  static Vocab Load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
  int limit_ = kDefaultVocabLimit;
  FeatureConfig config_ = FeatureConfig::kTitleBrandCategory;
};

struct TokenizedItem {
  std::vector<std::int32_t> token_ids;
  FeatureConfig feature_config = FeatureConfig::kTitleBrandCategory;

  bool operator==(const TokenizedItem&) const = default;
};

TokenizedItem TokenizeItem(const ItemSnapshot& item, const Vocab& vocab, FeatureConfig config,
                           int max_tokens = kDefaultMaxTokens);

// One event of a prepared example.
struct PreparedEvent {
  std::string item_id;
  EventType event_type = EventType::kItemView;
  std::int64_t brand_id = 0;
  std::int64_t c2_id = 0;
  TokenizedItem tokens;

  bool operator==(const PreparedEvent&) const = default;
};

struct SbrExample {
  std::string user_id;
  std::string sequence_id;
  std::vector<PreparedEvent> history;  // 6..22 events
  std::vector<PreparedEvent> targets;  // exactly 4 events

  bool operator==(const SbrExample&) const = default;
};

UserSequence DedupConsecutive(const UserSequence& seq);

// Throws Error(kInvalidArgument) when max_len == 0.
std::vector<UserSequence> SegmentSequence(const UserSequence& seq, int max_len);

// Window of the last min(|seq|, 26) events: last 4 are targets. Returns
// nullopt for sequences shorter than 10.
struct SbrWindow {
  std::size_t history_begin = 0;
  std::size_t targets_begin = 0;
  std::size_t end = 0;
};
std::optional<SbrWindow> SelectSbrWindow(std::size_t sequence_length);

PreparedEvent PrepareEvent(const EventRecord& event, const Vocab& vocab, int max_tokens = kDefaultMaxTokens);

std::optional<SbrExample> MakeSbrExample(const UserSequence& seq, const Vocab& vocab,
                                         int max_tokens = kDefaultMaxTokens);

struct PrepOptions {
  int segment_length = 0;  // 0 keeps sequences whole
  int max_tokens = kDefaultMaxTokens;
};

// reconstruct -> dedup -> (segment) -> window -> tokenize.
std::vector<SbrExample> PrepareExamples(const std::vector<EventRecord>& events, const Vocab& vocab,
                                        const PrepOptions& options = {});

// Deterministic user-level split: a user lands in the test side when a hash
// of (seed, user_id) falls below test_fraction.
bool IsHeldOutUser(std::string_view user_id, double test_fraction, std::uint64_t seed);

struct ExampleSet {
  FeatureConfig feature_config = FeatureConfig::kTitleBrandCategory;
  int max_tokens = kDefaultMaxTokens;
  int vocab_size = 0;
  std::vector<SbrExample> examples;
};

// Format: magic "MSBR1", JSON manifest, then length-prefixed records.
void SaveExamples(const std::filesystem::path& path, const ExampleSet& set);
ExampleSet LoadExamples(const std::filesystem::path& path);

}  // namespace mercatran
