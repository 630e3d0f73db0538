#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fastcycle {

enum class ErrorCode {
  invalid_topic_name,
  invalid_capacity,
  already_started,
  not_running,
  invalid_config,
  drain_timeout,
  parse_error,
  duplicate_component_name,
  missing_field,
  unknown_key,
  invalid_field,
  missing_param,
  type_mismatch,
  init_failed,
  unknown_component,
  invalid_period,
  invalid_state,
  empty_allowlist,
  bad_magic,
  unsupported_version,
  truncated,
  too_few_samples,
  io_error,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_topic_name: return "InvalidTopicName";
    case ErrorCode::invalid_capacity: return "InvalidCapacity";
    case ErrorCode::already_started: return "AlreadyStarted";
    case ErrorCode::not_running: return "NotRunning";
    case ErrorCode::invalid_config: return "InvalidConfig";
    case ErrorCode::drain_timeout: return "DrainTimeout";
    case ErrorCode::parse_error: return "ParseError";
    case ErrorCode::duplicate_component_name: return "DuplicateComponentName";
    case ErrorCode::missing_field: return "MissingField";
    case ErrorCode::unknown_key: return "UnknownKey";
    case ErrorCode::invalid_field: return "InvalidField";
    case ErrorCode::missing_param: return "MissingParam";
    case ErrorCode::type_mismatch: return "TypeMismatch";
    case ErrorCode::init_failed: return "InitFailed";
    case ErrorCode::unknown_component: return "UnknownComponent";
    case ErrorCode::invalid_period: return "InvalidPeriod";
    case ErrorCode::invalid_state: return "InvalidState";
    case ErrorCode::empty_allowlist: return "EmptyAllowlist";
    case ErrorCode::bad_magic: return "BadMagic";
    case ErrorCode::unsupported_version: return "UnsupportedVersion";
    case ErrorCode::truncated: return "Truncated";
    case ErrorCode::too_few_samples: return "TooFewSamples";
    case ErrorCode::io_error: return "IoError";
  }
  return "Unknown";
}

/// Base exception for every failure raised by the library. `code()` is the
/// stable discriminator; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised while decoding log records; `offset()` is the byte offset of the
/// record that failed, relative to the start of the stream being replayed.
class DecodeError : public Error {
 public:
  DecodeError(ErrorCode code, std::uint64_t offset, const std::string& what)
      : Error(code, what + " at byte offset " + std::to_string(offset)), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Manifest problems that can be pinned to a location in the source text.
/// Line and column are 1-based; both are 0 when no position is known.
class ManifestError : public Error {
 public:
  ManifestError(ErrorCode code, std::size_t byte, std::size_t line, std::size_t column,
                const std::string& what)
      : Error(code, line > 0 ? what + " (line " + std::to_string(line) + ", column " +
                                   std::to_string(column) + ")"
                             : what),
        byte_(byte),
        line_(line),
        column_(column) {}

  std::size_t byte() const noexcept { return byte_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t byte_;
  std::size_t line_;
  std::size_t column_;
};

}  // namespace fastcycle
