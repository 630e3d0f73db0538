#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <memory>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace fastcycle {

class Payload;

/// Shared read-only handle. Every subscriber of a publish receives a copy of
/// the same handle; the bytes are never duplicated on the transfer path.
using PayloadHandle = std::shared_ptr<const Payload>;

/// Immutable message content. Bytes are written exactly once, during
/// construction, and are only reachable through const views afterwards.
/// Each constructed instance draws a process-unique `instance_id`, which
/// lets tests and the benchmark verify that deliveries share the publisher's
/// instance instead of a copy.
class Payload {
  struct Token {};

 public:
  Payload(Token, std::unique_ptr<std::byte[]> data, std::size_t size) noexcept
      : data_(std::move(data)), size_(size), instance_id_(next_instance_id()) {}

  Payload(const Payload&) = delete;
  Payload& operator=(const Payload&) = delete;

  /// Allocates `size` bytes, lets `fill` write them, then freezes the result.
  template <class Fill>
  static PayloadHandle build(std::size_t size, Fill&& fill) {
    auto data = std::make_unique_for_overwrite<std::byte[]>(size);
    std::forward<Fill>(fill)(std::span<std::byte>(data.get(), size));
    return std::make_shared<const Payload>(Token{}, std::move(data), size);
  }

  static PayloadHandle copy_from(std::span<const std::byte> bytes) {
    return build(bytes.size(), [&](std::span<std::byte> out) {
      if (!bytes.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
    });
  }

  static PayloadHandle from_string(std::string_view text) {
    return copy_from(std::as_bytes(std::span<const char>(text.data(), text.size())));
  }

  /// New instance with identical bytes and a fresh instance_id.
  static PayloadHandle deep_copy(const Payload& other) { return copy_from(other.bytes()); }

  std::span<const std::byte> bytes() const noexcept { return {data_.get(), size_}; }
  std::size_t size() const noexcept { return size_; }
  std::uint64_t instance_id() const noexcept { return instance_id_; }

  std::string_view as_string_view() const noexcept {
    return {reinterpret_cast<const char*>(data_.get()), size_};
  }

 private:
  static std::uint64_t next_instance_id() noexcept {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
  }

  const std::unique_ptr<std::byte[]> data_;
  const std::size_t size_;
  const std::uint64_t instance_id_;
};

}  // namespace fastcycle
