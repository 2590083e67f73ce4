// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mercatran/preprocess.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "mercatran/binary_io.hpp"
#include "mercatran/error.hpp"
#include "mercatran/rng.hpp"

namespace mercatran {

using nlohmann::json;

std::string_view FeatureConfigName(FeatureConfig config) {
  switch (config) {
    case FeatureConfig::kTitleBrandCategory: return "title_brand_category";
    case FeatureConfig::kTitleOnly: return "title";
    case FeatureConfig::kBrandCategory: return "brand_category";
  }
  return "title_brand_category";
}

FeatureConfig ParseFeatureConfig(std::string_view name) {
  if (name == "title_brand_category") return FeatureConfig::kTitleBrandCategory;
  if (name == "title" || name == "title_only") return FeatureConfig::kTitleOnly;
  if (name == "brand_category") return FeatureConfig::kBrandCategory;
  throw Error(ErrorCode::kInvalidArgument, "unknown feature config '" + std::string(name) + "'");
}

std::vector<std::string> TokenizeText(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    const bool word = c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
    if (word) {
      cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::string> FeatureTokens(const ItemSnapshot& item, FeatureConfig config) {
  std::vector<std::string> out;
  auto append = [&out](std::string_view text) {
    for (auto& t : TokenizeText(text)) out.push_back(std::move(t));
  };
  if (config != FeatureConfig::kBrandCategory) append(item.name);
  if (config != FeatureConfig::kTitleOnly) {
    append(item.brand_name);
    append(item.c0_name);
    append(item.c1_name);
    append(item.c2_name);
  }
  return out;
}

// Vocab ------------------------------------------------------------------------

Vocab::Vocab() : tokens_{"<pad>", "<unk>", "<bos>"} {
  for (std::int32_t i = 0; i < kNumReserved; ++i) index_.emplace(tokens_[static_cast<std::size_t>(i)], i);
}

Vocab Vocab::Build(const std::vector<ItemSnapshot>& items, FeatureConfig config, int limit) {
  if (limit <= kNumReserved) throw Error(ErrorCode::kInvalidArgument, "vocab limit must exceed 3");
  std::map<std::string, std::int64_t> counts;
  for (const auto& item : items) {
    for (auto& t : FeatureTokens(item, config)) ++counts[std::move(t)];
  }
  std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
  // map iteration is already ascending by token, so a stable sort on count
  // leaves ties in lexicographic order.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  v.limit_ = limit;
  v.config_ = config;
  const std::size_t keep = std::min(ranked.size(), static_cast<std::size_t>(limit - kNumReserved));
  for (std::size_t i = 0; i < keep; ++i) {
    // Tokens never collide with the reserved spellings: '<' is punctuation.
    v.index_.emplace(ranked[i].first, static_cast<std::int32_t>(v.tokens_.size()));
    v.tokens_.push_back(std::move(ranked[i].first));
  }
  return v;
}

std::int32_t Vocab::Id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

json Vocab::ToJson() const {
  json tokens = json::object();
  for (std::size_t i = 0; i < tokens_.size(); ++i) tokens[tokens_[i]] = static_cast<std::int32_t>(i);
  return {{"header", {{"version", 1}, {"feature_config", FeatureConfigName(config_)}, {"limit", limit_}}},
          {"tokens", std::move(tokens)}};
}

Vocab Vocab::FromJson(const json& j) {
  Vocab v;
  const auto& header = j.at("header");
  if (header.value("version", 0) != 1) throw Error(ErrorCode::kCorruptFile, "unsupported vocab version");
  v.config_ = ParseFeatureConfig(header.at("feature_config").get<std::string>());
  v.limit_ = header.at("limit").get<int>();
  const auto& tokens = j.at("tokens");
  std::vector<std::string> by_id(tokens.size());
  for (auto it = tokens.begin(); it != tokens.end(); ++it) {
    const auto id = it.value().get<std::int64_t>();
    if (id < 0 || id >= static_cast<std::int64_t>(by_id.size()) || !by_id[static_cast<std::size_t>(id)].empty()) {
      throw Error(ErrorCode::kCorruptFile, "vocab ids must be dense and unique");
    }
    by_id[static_cast<std::size_t>(id)] = it.key();
  }
  if (by_id.size() < kNumReserved || by_id[0] != "<pad>" || by_id[1] != "<unk>" || by_id[2] != "<bos>") {
    throw Error(ErrorCode::kCorruptFile, "vocab reserved ids are missing");
  }
  v.tokens_ = std::move(by_id);
  v.index_.clear();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) v.index_.emplace(v.tokens_[i], static_cast<std::int32_t>(i));
  return v;
}

void Vocab::Save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << ToJson().dump() << '\n';
}

Vocab Vocab::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kCorruptFile, "vocab is not JSON: " + path.string());
  return FromJson(j);
}

TokenizedItem TokenizeItem(const ItemSnapshot& item, const Vocab& vocab, FeatureConfig config, int max_tokens) {
  TokenizedItem out;
  out.feature_config = config;
  for (const auto& t : FeatureTokens(item, config)) {
    if (static_cast<int>(out.token_ids.size()) >= max_tokens) break;
    out.token_ids.push_back(vocab.Id(t));
  }
  if (out.token_ids.empty()) out.token_ids.push_back(Vocab::kUnk);
  return out;
}

// Sequences ----------------------------------------------------------------------

UserSequence DedupConsecutive(const UserSequence& seq) {
  UserSequence out{seq.user_id, seq.sequence_id, {}};
  out.events.reserve(seq.events.size());
  for (const auto& e : seq.events) {
    if (!out.events.empty() && out.events.back().event_type == e.event_type &&
        out.events.back().item.item_id == e.item.item_id) {
      continue;
    }
    out.events.push_back(e);
  }
  return out;
}

std::vector<UserSequence> SegmentSequence(const UserSequence& seq, int max_len) {
  if (max_len <= 0) throw Error(ErrorCode::kInvalidArgument, "max_len must be >= 1");
  std::vector<UserSequence> out;
  const auto n = seq.events.size();
  const auto step = static_cast<std::size_t>(max_len);
  for (std::size_t begin = 0; begin < n; begin += step) {
    const std::size_t end = std::min(n, begin + step);
    out.push_back(UserSequence{seq.user_id, seq.sequence_id,
                               {seq.events.begin() + static_cast<std::ptrdiff_t>(begin),
                                seq.events.begin() + static_cast<std::ptrdiff_t>(end)}});
  }
  return out;
}

std::optional<SbrWindow> SelectSbrWindow(std::size_t n) {
  if (n < static_cast<std::size_t>(kMinSequenceLength)) return std::nullopt;
  const std::size_t take = std::min(n, static_cast<std::size_t>(kExampleWindow));
  return SbrWindow{n - take, n - kForecastSteps, n};
}

PreparedEvent PrepareEvent(const EventRecord& event, const Vocab& vocab, int max_tokens) {
  const ProductId pid = ProductIdOf(event.item);
  return PreparedEvent{event.item.item_id, event.event_type, pid.brand_id, pid.c2_id,
                       TokenizeItem(event.item, vocab, vocab.feature_config(), max_tokens)};
}

std::optional<SbrExample> MakeSbrExample(const UserSequence& seq, const Vocab& vocab, int max_tokens) {
  const auto window = SelectSbrWindow(seq.events.size());
  if (!window) return std::nullopt;
  SbrExample ex{seq.user_id, seq.sequence_id, {}, {}};
  for (std::size_t i = window->history_begin; i < window->targets_begin; ++i) {
    ex.history.push_back(PrepareEvent(seq.events[i], vocab, max_tokens));
  }
  for (std::size_t i = window->targets_begin; i < window->end; ++i) {
    ex.targets.push_back(PrepareEvent(seq.events[i], vocab, max_tokens));
  }
  return ex;
}

std::vector<SbrExample> PrepareExamples(const std::vector<EventRecord>& events, const Vocab& vocab,
                                        const PrepOptions& options) {
  std::vector<SbrExample> out;
  for (const auto& seq : ReconstructSequences(events)) {
    const UserSequence clean = DedupConsecutive(seq);
    std::vector<UserSequence> parts;
    if (options.segment_length > 0) {
      parts = SegmentSequence(clean, options.segment_length);
    } else {
      parts.push_back(clean);
    }
    for (const auto& part : parts) {
      if (auto ex = MakeSbrExample(part, vocab, options.max_tokens)) out.push_back(std::move(*ex));
    }
  }
  return out;
}

bool IsHeldOutUser(std::string_view user_id, double test_fraction, std::uint64_t seed) {
  const std::uint64_t h = Mix64(Fnv1a64(user_id) ^ Mix64(seed));
  return static_cast<double>(h >> 11) * 0x1.0p-53 < test_fraction;
}

// Example files ------------------------------------------------------------------

namespace {

constexpr std::string_view kExampleMagic = "MSBR1";

void WriteEvent(ByteWriter& w, const PreparedEvent& e) {
  w.Str(e.item_id);
  w.U32(static_cast<std::uint32_t>(e.event_type));
  w.I64(e.brand_id);
  w.I64(e.c2_id);
  w.U32(static_cast<std::uint32_t>(e.tokens.token_ids.size()));
  for (auto id : e.tokens.token_ids) w.U32(static_cast<std::uint32_t>(id));
}

PreparedEvent ReadEvent(ByteReader& r, FeatureConfig config, int max_tokens, int vocab_size) {
  PreparedEvent e;
  e.item_id = r.Str();
  const std::uint32_t type = r.U32();
  if (type >= static_cast<std::uint32_t>(kNumEventTypes)) throw Error(ErrorCode::kCorruptFile, "bad event type");
  e.event_type = static_cast<EventType>(type);
  e.brand_id = r.I64();
  e.c2_id = r.I64();
  const std::uint32_t n = r.U32();
  if (n == 0 || n > static_cast<std::uint32_t>(max_tokens)) throw Error(ErrorCode::kCorruptFile, "bad token count");
  e.tokens.feature_config = config;
  e.tokens.token_ids.resize(n);
  for (auto& id : e.tokens.token_ids) {
    const std::uint32_t v = r.U32();
    if (v >= static_cast<std::uint32_t>(vocab_size)) throw Error(ErrorCode::kCorruptFile, "token id out of range");
    id = static_cast<std::int32_t>(v);
  }
  return e;
}

}  // namespace

void SaveExamples(const std::filesystem::path& path, const ExampleSet& set) {
  ByteWriter w;
  w.Header(kExampleMagic, {{"version", 1},
                           {"feature_config", FeatureConfigName(set.feature_config)},
                           {"max_tokens", set.max_tokens},
                           {"vocab_size", set.vocab_size},
                           {"count", set.examples.size()}});
  for (const auto& ex : set.examples) {
    w.Str(ex.user_id);
    w.Str(ex.sequence_id);
    w.U32(static_cast<std::uint32_t>(ex.history.size()));
    w.U32(static_cast<std::uint32_t>(ex.targets.size()));
    for (const auto& e : ex.history) WriteEvent(w, e);
    for (const auto& e : ex.targets) WriteEvent(w, e);
  }
  w.WriteFile(path);
}

ExampleSet LoadExamples(const std::filesystem::path& path) {
  ByteReader r = ByteReader::FromFile(path);
  const json manifest = r.Header(kExampleMagic);
  ExampleSet set;
  try {
    set.feature_config = ParseFeatureConfig(manifest.at("feature_config").get<std::string>());
    set.max_tokens = manifest.at("max_tokens").get<int>();
    set.vocab_size = manifest.at("vocab_size").get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptFile, std::string("example manifest: ") + e.what());
  }
  const auto count = manifest.at("count").get<std::uint64_t>();
  set.examples.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    SbrExample ex;
    ex.user_id = r.Str();
    ex.sequence_id = r.Str();
    const std::uint32_t nh = r.U32();
    const std::uint32_t nt = r.U32();
    if (nh == 0 || nh > static_cast<std::uint32_t>(kMaxHistory) || nt != static_cast<std::uint32_t>(kForecastSteps)) {
      throw Error(ErrorCode::kCorruptFile, "bad example shape");
    }
    for (std::uint32_t k = 0; k < nh; ++k) ex.history.push_back(ReadEvent(r, set.feature_config, set.max_tokens, set.vocab_size));
    for (std::uint32_t k = 0; k < nt; ++k) ex.targets.push_back(ReadEvent(r, set.feature_config, set.max_tokens, set.vocab_size));
    set.examples.push_back(std::move(ex));
  }
  if (r.remaining() != 0) throw Error(ErrorCode::kCorruptFile, "trailing bytes in example file");
  return set;
}

}  // namespace mercatran
