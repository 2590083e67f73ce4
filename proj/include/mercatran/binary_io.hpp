// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

// Little-endian framing shared by every on-disk format in this project:
// a 5-byte magic, a u64 manifest length, a JSON manifest, then payload.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mercatran/error.hpp"

namespace mercatran {

static_assert(std::endian::native == std::endian::little, "on-disk formats assume a little-endian host");

class ByteWriter {
 public:
  void Raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void U32(std::uint32_t v) { Raw(&v, sizeof v); }
  void U64(std::uint64_t v) { Raw(&v, sizeof v); }
  void I64(std::int64_t v) { Raw(&v, sizeof v); }
  void F32(float v) { Raw(&v, sizeof v); }
  void Str(std::string_view s) {
    U32(static_cast<std::uint32_t>(s.size()));
    Raw(s.data(), s.size());
  }
  void Floats(std::span<const float> v) { Raw(v.data(), v.size_bytes()); }

  // Magic + u64 length + manifest; call before any payload.
  void Header(std::string_view magic, const nlohmann::json& manifest) {
    Raw(magic.data(), magic.size());
    const std::string m = manifest.dump();
    U64(m.size());
    Raw(m.data(), m.size());
  }

  const std::vector<char>& bytes() const { return buf_; }

  void WriteFile(const std::filesystem::path& path) const {
    // Write-then-rename so readers never observe a partial file.
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp);
      out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
      if (!out) throw Error(ErrorCode::kIoError, "write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::kIoError, "rename to " + path.string() + ": " + ec.message());
  }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data) : data_(std::move(data)) {}

  static ByteReader FromFile(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ByteReader(std::move(data));
  }

  void Raw(void* out, std::size_t n) {
    Need(n);
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t U32() { std::uint32_t v; Raw(&v, sizeof v); return v; }
  std::uint64_t U64() { std::uint64_t v; Raw(&v, sizeof v); return v; }
  std::int64_t I64() { std::int64_t v; Raw(&v, sizeof v); return v; }
  float F32() { float v; Raw(&v, sizeof v); return v; }
  std::string Str() {
    const std::uint32_t n = U32();
    Need(n);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void Floats(std::span<float> out) { Raw(out.data(), out.size_bytes()); }

  nlohmann::json Header(std::string_view magic) {
    Need(magic.size());
    if (std::string_view(data_.data(), magic.size()) != magic) {
      throw Error(ErrorCode::kCorruptFile, "bad magic, expected " + std::string(magic));
    }
    pos_ += magic.size();
    const std::uint64_t n = U64();
    Need(n);
    nlohmann::json manifest = nlohmann::json::parse(data_.data() + pos_, data_.data() + pos_ + n, nullptr, false);
    if (manifest.is_discarded()) throw Error(ErrorCode::kCorruptFile, "unparseable manifest");
    pos_ += n;
    return manifest;
  }

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void Need(std::size_t n) const {
    if (n > data_.size() - pos_) throw Error(ErrorCode::kCorruptFile, "unexpected end of file");
  }

  std::vector<char> data_;
  std::size_t pos_ = 0;
};

}  // namespace mercatran
