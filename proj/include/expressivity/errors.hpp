#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace expressivity {

enum class ErrorCode {
  InvalidArgument,
  NonFiniteValue,
  ZeroVarianceAttribute,
  NonBinaryValues,
  NonPositiveInput,
  LengthMismatch,
  DimensionMismatch,
  StaleCache,
  NonFiniteGradient,
  BatchTooLarge,
  Diverged,
  DegenerateCorrelation,
  EmptyJoint,
  TooManyAttributes,
  MalformedHeader,
  PayloadSizeMismatch,
  MissingColumn,
  RowCountMismatch,
  UnparsableValue,
  SchemaError,
  InsufficientAttributes,
  SingleIdentity,
  IoError,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::ZeroVarianceAttribute: return "ZeroVarianceAttribute";
    case ErrorCode::NonBinaryValues: return "NonBinaryValues";
    case ErrorCode::NonPositiveInput: return "NonPositiveInput";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::BatchTooLarge: return "BatchTooLarge";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::DegenerateCorrelation: return "DegenerateCorrelation";
    case ErrorCode::EmptyJoint: return "EmptyJoint";
    case ErrorCode::TooManyAttributes: return "TooManyAttributes";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::PayloadSizeMismatch: return "PayloadSizeMismatch";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::RowCountMismatch: return "RowCountMismatch";
    case ErrorCode::UnparsableValue: return "UnparsableValue";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::InsufficientAttributes: return "InsufficientAttributes";
    case ErrorCode::SingleIdentity: return "SingleIdentity";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

// Every contract violation in the library surfaces as this exception; the
// code is what callers (CLI exit mapping, sweep row status) dispatch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace expressivity
