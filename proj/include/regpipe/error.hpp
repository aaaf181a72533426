#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace regpipe {

enum class ErrorCode {
  EmptyCloud,
  NonPositiveRadius,
  InsufficientNeighbors,
  TooFewPairs,
  DegenerateConfiguration,
  InvalidRotation,
  InvalidCloud,
  DegenerateBBox,
  InvalidParams,
  NonPositiveThreshold,
  MissingNormals,
  InvalidGamma,
  MissingScalar,
  NonPositiveScale,
  BordersMissing,
  PatchOutOfImage,
  MethodMismatch,
  EmptyFeatureSet,
  TooFewKeypoints,
  NotConverged,
  InvalidSpec,
  InvalidFraction,
  ParseError,
  UnsupportedProperty,
  IoError,
  ConfigError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::NonPositiveRadius: return "NonPositiveRadius";
    case ErrorCode::InsufficientNeighbors: return "InsufficientNeighbors";
    case ErrorCode::TooFewPairs: return "TooFewPairs";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::InvalidRotation: return "InvalidRotation";
    case ErrorCode::InvalidCloud: return "InvalidCloud";
    case ErrorCode::DegenerateBBox: return "DegenerateBBox";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::NonPositiveThreshold: return "NonPositiveThreshold";
    case ErrorCode::MissingNormals: return "MissingNormals";
    case ErrorCode::InvalidGamma: return "InvalidGamma";
    case ErrorCode::MissingScalar: return "MissingScalar";
    case ErrorCode::NonPositiveScale: return "NonPositiveScale";
    case ErrorCode::BordersMissing: return "BordersMissing";
    case ErrorCode::PatchOutOfImage: return "PatchOutOfImage";
    case ErrorCode::MethodMismatch: return "MethodMismatch";
    case ErrorCode::EmptyFeatureSet: return "EmptyFeatureSet";
    case ErrorCode::TooFewKeypoints: return "TooFewKeypoints";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::InvalidFraction: return "InvalidFraction";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnsupportedProperty: return "UnsupportedProperty";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure in the library is reported through this exception type; the
/// code identifies the contract that was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// An Error raised inside a named pipeline stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& inner)
      : Error(inner.code(), stage + " stage: " + strip_code(inner.what())), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  static std::string strip_code(std::string_view what) {
    const auto colon = what.find(": ");
    return std::string(colon == std::string_view::npos ? what : what.substr(colon + 2));
  }

  std::string stage_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace regpipe
