// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

// Event/item schema for C2C clickstream logs and per-user sequence
// reconstruction. Field names match the clickstream log columns.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace mercatran {

enum class EventType : std::uint8_t {
  kItemView = 0,
  kItemLike,
  kItemAddToCart,
  kOfferMake,
  kBuyStart,
  kBuyComplete,
};

inline constexpr int kNumEventTypes = 6;

inline constexpr std::array<std::string_view, kNumEventTypes> kEventTypeNames = {
    "item_view", "item_like", "item_add_to_cart", "offer_make", "buy_start", "buy_complete"};

std::string_view EventTypeName(EventType type);
// Throws Error(kUnknownEventType).
EventType ParseEventType(std::string_view name);

struct ItemSnapshot {
  std::string item_id;
  std::string name;
  std::optional<double> price_usd;
  std::optional<std::int64_t> brand_id;
  std::string brand_name;
  std::optional<std::int64_t> c0_id;
  std::string c0_name;
  std::optional<std::int64_t> c1_id;
  std::string c1_name;
  std::optional<std::int64_t> c2_id;
  std::string c2_name;
  std::optional<std::int64_t> item_condition_id;
  std::optional<std::int64_t> size_id;
  std::optional<std::int64_t> shipper_id;

  bool operator==(const ItemSnapshot&) const = default;
};

struct EventRecord {
  std::string user_id;
  std::string sequence_id;
  std::optional<std::string> session_id;
  std::int64_t stime_us = 0;  // epoch microseconds, UTC
  EventType event_type = EventType::kItemView;
  ItemSnapshot item;

  bool operator==(const EventRecord&) const = default;
};

// Synthetic SKU proxy: brand merged with the leaf category.
struct ProductId {
  std::int64_t brand_id = 0;
  std::int64_t c2_id = 0;

  bool operator==(const ProductId&) const = default;
  auto operator<=>(const ProductId&) const = default;
};

struct UserSequence {
  std::string user_id;
  std::string sequence_id;
  std::vector<EventRecord> events;
};

// Timestamps -----------------------------------------------------------------

// Accepts "YYYY-MM-DDTHH:MM:SS[.ffffff](Z|+HH:MM|-HH:MM)". Throws
// Error(kMalformedLine) on anything else.
std::int64_t ParseRfc3339Micros(std::string_view text);
std::string FormatRfc3339Micros(std::int64_t epoch_us);

// Parsing and serialization -------------------------------------------------

EventRecord ParseEventLine(std::string_view line);
std::string SerializeEvent(const EventRecord& event);

ItemSnapshot ParseItemJson(const nlohmann::json& obj);
nlohmann::json ItemToJson(const ItemSnapshot& item);
// Event JSON object (the same object SerializeEvent dumps).
nlohmann::json EventToJson(const EventRecord& event);
EventRecord ParseEventJson(const nlohmann::json& obj);

// Reads a .jsonl event log; blank lines are skipped. Errors carry the line
// number in their detail.
std::vector<EventRecord> ReadEventLog(const std::filesystem::path& path);
void WriteEventLog(const std::filesystem::path& path, const std::vector<EventRecord>& events);

// Item catalog: one ItemSnapshot object per line.
std::vector<ItemSnapshot> ReadItemCatalog(const std::filesystem::path& path);
void WriteItemCatalog(const std::filesystem::path& path, const std::vector<ItemSnapshot>& items);

// Sequences ------------------------------------------------------------------

// One sequence per distinct (user_id, sequence_id), ordered by that key.
// Events are sorted by stime; equal timestamps keep input order.
std::vector<UserSequence> ReconstructSequences(std::vector<EventRecord> events);

ProductId ProductIdOf(const ItemSnapshot& item);

}  // namespace mercatran
