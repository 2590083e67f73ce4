// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mercatran {

enum class ErrorCode {
  kMalformedLine,
  kMissingField,
  kUnknownEventType,
  kInvalidConfig,
  kUnknownUser,
  kInvalidArgument,
  kNaNInput,
  kShapeMismatch,
  kTokenOutOfRange,
  kEmptyHistory,
  kHistoryTooLong,
  kNonUnitRows,
  kDimensionMismatch,
  kNonUnitEmbedding,
  kIoError,
  kCorruptFile,
  kInvalidRank,
  kEmptyTestSet,
  kBadRequest,
  kNotReady,
  kUnknownItem,
};

std::string_view ErrorCodeName(ErrorCode code);

// All library failures surface as this exception; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

inline std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedLine: return "MalformedLine";
    case ErrorCode::kMissingField: return "MissingField";
    case ErrorCode::kUnknownEventType: return "UnknownEventType";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kUnknownUser: return "UnknownUser";
    case ErrorCode::kInvalidArgument: return "InvalidArg";
    case ErrorCode::kNaNInput: return "NaNInput";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kTokenOutOfRange: return "TokenOutOfRange";
    case ErrorCode::kEmptyHistory: return "EmptyHistory";
    case ErrorCode::kHistoryTooLong: return "HistoryTooLong";
    case ErrorCode::kNonUnitRows: return "NonUnitRows";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNonUnitEmbedding: return "NonUnitEmbedding";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kCorruptFile: return "CorruptFile";
    case ErrorCode::kInvalidRank: return "InvalidRank";
    case ErrorCode::kEmptyTestSet: return "EmptyTestSet";
    case ErrorCode::kBadRequest: return "BadRequest";
    case ErrorCode::kNotReady: return "NotReady";
    case ErrorCode::kUnknownItem: return "UnknownItem";
  }
  return "Unknown";
}

}  // namespace mercatran
