#pragma once

#include <compare>
#include <cstddef>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>

#include "fastcycle/error.hpp"

namespace fastcycle {

/// Validated topic identifier: 1..255 bytes, no NUL. Equality is byte equality.
class TopicName {
 public:
  static constexpr std::size_t max_bytes = 255;

  explicit TopicName(std::string value) : value_(std::move(value)) {
    if (value_.empty()) {
      throw Error(ErrorCode::invalid_topic_name, "topic name is empty");
    }
    if (value_.size() > max_bytes) {
      throw Error(ErrorCode::invalid_topic_name,
                  "topic name is " + std::to_string(value_.size()) + " bytes, limit is 255");
    }
    if (value_.find('\0') != std::string::npos) {
      throw Error(ErrorCode::invalid_topic_name, "topic name contains a NUL byte");
    }
  }
  explicit TopicName(std::string_view value) : TopicName(std::string(value)) {}
  explicit TopicName(const char* value) : TopicName(std::string(value)) {}

  const std::string& str() const noexcept { return value_; }
  std::size_t size() const noexcept { return value_.size(); }

  friend bool operator==(const TopicName&, const TopicName&) = default;
  friend auto operator<=>(const TopicName&, const TopicName&) = default;

  friend std::ostream& operator<<(std::ostream& os, const TopicName& name) {
    return os << name.value_;
  }

 private:
  std::string value_;
};

}  // namespace fastcycle

template <>
struct std::hash<fastcycle::TopicName> {
  std::size_t operator()(const fastcycle::TopicName& name) const noexcept {
    return std::hash<std::string>{}(name.str());
  }
};
