// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mercatran/datamodel.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <utility>

#include "mercatran/error.hpp"

namespace mercatran {

using nlohmann::json;

std::string_view EventTypeName(EventType type) {
  return kEventTypeNames[static_cast<std::size_t>(type)];
}

EventType ParseEventType(std::string_view name) {
  for (std::size_t i = 0; i < kEventTypeNames.size(); ++i) {
    if (kEventTypeNames[i] == name) return static_cast<EventType>(i);
  }
  throw Error(ErrorCode::kUnknownEventType, std::string(name));
}

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t DaysFromCivil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void CivilFromDays(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

[[noreturn]] void BadTime(std::string_view text) {
  throw Error(ErrorCode::kMalformedLine, "invalid timestamp '" + std::string(text) + "'");
}

int Digits(std::string_view text, std::size_t pos, std::size_t count) {
  if (pos + count > text.size()) BadTime(text);
  int value = 0;
  for (std::size_t i = pos; i < pos + count; ++i) {
    const char c = text[i];
    if (c < '0' || c > '9') BadTime(text);
    value = value * 10 + (c - '0');
  }
  return value;
}

void Expect(std::string_view text, std::size_t pos, char c) {
  if (pos >= text.size() || (text[pos] != c && !(c == 'T' && (text[pos] == 't' || text[pos] == ' ')))) {
    BadTime(text);
  }
}

const json* Find(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return nullptr;
  return &*it;
}

const json& Require(const json& obj, const char* key) {
  const json* v = Find(obj, key);
  if (v == nullptr) throw Error(ErrorCode::kMissingField, key);
  return *v;
}

// Identifier columns appear as strings or integers in real exports.
std::string AsIdString(const json& v, const char* key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  throw Error(ErrorCode::kMalformedLine, std::string("field '") + key + "' is not an id");
}

std::int64_t AsInt(const json& v, const char* key) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d == static_cast<double>(static_cast<std::int64_t>(d))) return static_cast<std::int64_t>(d);
  }
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    std::int64_t out = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec == std::errc() && ptr == s.data() + s.size()) return out;
  }
  throw Error(ErrorCode::kMalformedLine, std::string("field '") + key + "' is not an integer");
}

std::string AsText(const json& v, const char* key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) return v.dump();
  throw Error(ErrorCode::kMalformedLine, std::string("field '") + key + "' is not text");
}

std::optional<std::int64_t> OptInt(const json& obj, const char* key) {
  const json* v = Find(obj, key);
  if (v == nullptr) return std::nullopt;
  return AsInt(*v, key);
}

void PutOpt(json& obj, const char* key, const std::optional<std::int64_t>& v) {
  if (v) obj[key] = *v;
}

}  // namespace

std::int64_t ParseRfc3339Micros(std::string_view text) {
  // YYYY-MM-DDTHH:MM:SS
  const int year = Digits(text, 0, 4);
  Expect(text, 4, '-');
  const int month = Digits(text, 5, 2);
  Expect(text, 7, '-');
  const int day = Digits(text, 8, 2);
  Expect(text, 10, 'T');
  const int hour = Digits(text, 11, 2);
  Expect(text, 13, ':');
  const int minute = Digits(text, 14, 2);
  Expect(text, 16, ':');
  const int second = Digits(text, 17, 2);
  if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60) {
    BadTime(text);
  }
  std::size_t pos = 19;
  std::int64_t micros = 0;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    int n = 0;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
      if (n < 6) micros = micros * 10 + (text[pos] - '0');
      ++n;
      ++pos;
    }
    if (n == 0) BadTime(text);
    for (; n < 6; ++n) micros *= 10;
  }
  std::int64_t offset_s = 0;
  if (pos < text.size() && (text[pos] == 'Z' || text[pos] == 'z')) {
    ++pos;
  } else if (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) {
    const int sign = text[pos] == '+' ? 1 : -1;
    const int oh = Digits(text, pos + 1, 2);
    Expect(text, pos + 3, ':');
    const int om = Digits(text, pos + 4, 2);
    offset_s = sign * (oh * 3600 + om * 60);
    pos += 6;
  } else {
    BadTime(text);
  }
  if (pos != text.size()) BadTime(text);
  const std::int64_t days = DaysFromCivil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
  const std::int64_t secs = days * 86400 + hour * 3600 + minute * 60 + second - offset_s;
  return secs * 1000000 + micros;
}

std::string FormatRfc3339Micros(std::int64_t epoch_us) {
  std::int64_t secs = epoch_us / 1000000;
  std::int64_t micros = epoch_us % 1000000;
  if (micros < 0) {
    micros += 1000000;
    secs -= 1;
  }
  std::int64_t days = secs / 86400;
  std::int64_t sod = secs % 86400;
  if (sod < 0) {
    sod += 86400;
    days -= 1;
  }
  std::int64_t y;
  unsigned m, d;
  CivilFromDays(days, y, m, d);
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02lld:%02lld:%02lld.%06lldZ", static_cast<long long>(y), m, d,
                static_cast<long long>(sod / 3600), static_cast<long long>((sod / 60) % 60),
                static_cast<long long>(sod % 60), static_cast<long long>(micros));
  return buf;
}

ItemSnapshot ParseItemJson(const json& obj) {
  ItemSnapshot item;
  item.item_id = AsIdString(Require(obj, "item_id"), "item_id");
  item.name = AsText(Require(obj, "name"), "name");
  if (const json* p = Find(obj, "price")) {
    if (!p->is_number()) throw Error(ErrorCode::kMalformedLine, "field 'price' is not a number");
    item.price_usd = p->get<double>();
    if (*item.price_usd < 0) throw Error(ErrorCode::kMalformedLine, "negative price");
  }
  item.brand_id = AsInt(Require(obj, "brand_id"), "brand_id");
  item.brand_name = AsText(Require(obj, "brand_name"), "brand_name");
  item.c0_id = OptInt(obj, "c0_id");
  item.c0_name = AsText(Require(obj, "c0_name"), "c0_name");
  item.c1_id = OptInt(obj, "c1_id");
  item.c1_name = AsText(Require(obj, "c1_name"), "c1_name");
  item.c2_id = AsInt(Require(obj, "c2_id"), "c2_id");
  item.c2_name = AsText(Require(obj, "c2_name"), "c2_name");
  item.item_condition_id = OptInt(obj, "item_condition_id");
  item.size_id = OptInt(obj, "size_id");
  item.shipper_id = OptInt(obj, "shipper_id");
  if (item.shipper_id && *item.shipper_id != 0 && *item.shipper_id != 1) {
    throw Error(ErrorCode::kMalformedLine, "shipper_id must be 0 or 1");
  }
  return item;
}

json ItemToJson(const ItemSnapshot& item) {
  json obj;
  obj["item_id"] = item.item_id;
  obj["name"] = item.name;
  if (item.price_usd) obj["price"] = *item.price_usd;
  PutOpt(obj, "brand_id", item.brand_id);
  obj["brand_name"] = item.brand_name;
  PutOpt(obj, "c0_id", item.c0_id);
  obj["c0_name"] = item.c0_name;
  PutOpt(obj, "c1_id", item.c1_id);
  obj["c1_name"] = item.c1_name;
  PutOpt(obj, "c2_id", item.c2_id);
  obj["c2_name"] = item.c2_name;
  PutOpt(obj, "item_condition_id", item.item_condition_id);
  PutOpt(obj, "size_id", item.size_id);
  PutOpt(obj, "shipper_id", item.shipper_id);
  return obj;
}

EventRecord ParseEventJson(const json& obj) {
  if (!obj.is_object()) throw Error(ErrorCode::kMalformedLine, "event is not a JSON object");
  EventRecord ev;
  ev.user_id = AsIdString(Require(obj, "user_id"), "user_id");
  ev.sequence_id = AsIdString(Require(obj, "sequence_id"), "sequence_id");
  if (const json* s = Find(obj, "session_id")) ev.session_id = AsIdString(*s, "session_id");
  const json& stime = Require(obj, "stime");
  if (stime.is_string()) {
    ev.stime_us = ParseRfc3339Micros(stime.get_ref<const std::string&>());
  } else if (stime.is_number_integer()) {
    ev.stime_us = stime.get<std::int64_t>();
  } else {
    throw Error(ErrorCode::kMalformedLine, "field 'stime' is neither RFC-3339 text nor epoch microseconds");
  }
  const json& event_id = Require(obj, "event_id");
  if (!event_id.is_string()) throw Error(ErrorCode::kUnknownEventType, event_id.dump());
  ev.event_type = ParseEventType(event_id.get_ref<const std::string&>());
  ev.item = ParseItemJson(obj);
  return ev;
}

EventRecord ParseEventLine(std::string_view line) {
  json obj = json::parse(line.begin(), line.end(), nullptr, /*allow_exceptions=*/false);
  if (obj.is_discarded()) throw Error(ErrorCode::kMalformedLine, "invalid JSON");
  return ParseEventJson(obj);
}

json EventToJson(const EventRecord& event) {
  json obj = ItemToJson(event.item);
  obj["user_id"] = event.user_id;
  obj["sequence_id"] = event.sequence_id;
  if (event.session_id) obj["session_id"] = *event.session_id;
  obj["stime"] = FormatRfc3339Micros(event.stime_us);
  obj["event_id"] = std::string(EventTypeName(event.event_type));
  return obj;
}

std::string SerializeEvent(const EventRecord& event) { return EventToJson(event).dump(); }

namespace {

template <typename T, typename Fn>
std::vector<T> ReadJsonLines(const std::filesystem::path& path, Fn parse) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse(line));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(lineno) + ": " + e.detail());
    }
  }
  return out;
}

void WriteLines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

}  // namespace

std::vector<EventRecord> ReadEventLog(const std::filesystem::path& path) {
  return ReadJsonLines<EventRecord>(path, [](const std::string& l) { return ParseEventLine(l); });
}

void WriteEventLog(const std::filesystem::path& path, const std::vector<EventRecord>& events) {
  std::vector<std::string> lines;
  lines.reserve(events.size());
  for (const auto& e : events) lines.push_back(SerializeEvent(e));
  WriteLines(path, lines);
}

std::vector<ItemSnapshot> ReadItemCatalog(const std::filesystem::path& path) {
  return ReadJsonLines<ItemSnapshot>(path, [](const std::string& l) {
    json obj = json::parse(l, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) throw Error(ErrorCode::kMalformedLine, "invalid JSON");
    return ParseItemJson(obj);
  });
}

void WriteItemCatalog(const std::filesystem::path& path, const std::vector<ItemSnapshot>& items) {
  std::vector<std::string> lines;
  lines.reserve(items.size());
  for (const auto& it : items) lines.push_back(ItemToJson(it).dump());
  WriteLines(path, lines);
}

std::vector<UserSequence> ReconstructSequences(std::vector<EventRecord> events) {
  std::map<std::pair<std::string, std::string>, std::vector<EventRecord>> groups;
  for (auto& e : events) {
    auto key = std::make_pair(e.user_id, e.sequence_id);
    groups[std::move(key)].push_back(std::move(e));
  }
  std::vector<UserSequence> out;
  out.reserve(groups.size());
  for (auto& [key, evs] : groups) {
    std::stable_sort(evs.begin(), evs.end(),
                     [](const EventRecord& a, const EventRecord& b) { return a.stime_us < b.stime_us; });
    out.push_back(UserSequence{key.first, key.second, std::move(evs)});
  }
  return out;
}

ProductId ProductIdOf(const ItemSnapshot& item) {
  if (!item.brand_id) throw Error(ErrorCode::kMissingField, "brand_id");
  if (!item.c2_id) throw Error(ErrorCode::kMissingField, "c2_id");
  return ProductId{*item.brand_id, *item.c2_id};
}

}  // namespace mercatran
