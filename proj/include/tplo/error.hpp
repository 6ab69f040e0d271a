#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tplo {

enum class ErrorCode {
  RejectedValue,
  DuplicateName,
  FormatError,
  TruncationError,
  ManifestError,
  EmptyInput,
  ShapeError,
  InvalidSparsity,
  InsufficientSamples,
  ProfileMismatch,
  ConfigError,
  VocabError,
  SingleClass,
  DegenerateDirection,
  InsufficientPairs,
  InsufficientPolarity,
  LayerError,
  SchemaError,
  DuplicateStatement,
  TemplateError,
  TooSmall,
  SourceExhausted,
  ItemFailed,
  IOError,
  UsageError,
};

/// Stable machine-readable name, used on stderr by the CLI.
constexpr std::string_view code_name(ErrorCode c) noexcept {
  switch (c) {
    case ErrorCode::RejectedValue: return "RejectedValue";
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::TruncationError: return "TruncationError";
    case ErrorCode::ManifestError: return "ManifestError";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::InvalidSparsity: return "InvalidSparsity";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::ProfileMismatch: return "ProfileMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::VocabError: return "VocabError";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::DegenerateDirection: return "DegenerateDirection";
    case ErrorCode::InsufficientPairs: return "InsufficientPairs";
    case ErrorCode::InsufficientPolarity: return "InsufficientPolarity";
    case ErrorCode::LayerError: return "LayerError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::DuplicateStatement: return "DuplicateStatement";
    case ErrorCode::TemplateError: return "TemplateError";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::SourceExhausted: return "SourceExhausted";
    case ErrorCode::ItemFailed: return "ItemFailed";
    case ErrorCode::IOError: return "IOError";
    case ErrorCode::UsageError: return "UsageError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace tplo
