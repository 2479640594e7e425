#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace geoloc {

enum class ErrorKind {
  ZeroVector,
  NonPositiveDepth,
  Parse,
  Schema,
  InvariantViolation,
  CapacityExceeded,
  TooShort,
  Format,
  ShapeMismatch,
  OutOfBounds,
  FrameMismatch,
  DegenerateMatch,
  NonFiniteLoss,
  Infeasible,
  OutOfOrderFrame,
  EmptyTrack,
  Config,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorKind::Parse: return "ParseError";
    case ErrorKind::Schema: return "SchemaError";
    case ErrorKind::InvariantViolation: return "InvariantViolation";
    case ErrorKind::CapacityExceeded: return "CapacityExceeded";
    case ErrorKind::TooShort: return "TooShort";
    case ErrorKind::Format: return "FormatError";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::FrameMismatch: return "FrameMismatch";
    case ErrorKind::DegenerateMatch: return "DegenerateMatch";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::Infeasible: return "Infeasible";
    case ErrorKind::OutOfOrderFrame: return "OutOfOrderFrame";
    case ErrorKind::EmptyTrack: return "EmptyTrack";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::Io: return "IoError";
  }
  return "Unknown";
}

/// Single exception type for the library; `kind()` discriminates the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace geoloc
