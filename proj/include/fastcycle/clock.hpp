#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>

namespace fastcycle {

/// Monotonic nanoseconds. Only differences between two readings of the same
/// clock are meaningful.
using Nanos = std::int64_t;

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Nanos now() const noexcept = 0;
};

class SteadyClock final : public Clock {
 public:
  Nanos now() const noexcept override {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
  }
};

/// Test clock: returns whatever was last set. Thread-safe.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(Nanos start = 0) : value_(start) {}

  Nanos now() const noexcept override { return value_.load(std::memory_order_acquire); }
  void set(Nanos value) noexcept { value_.store(value, std::memory_order_release); }
  void advance(Nanos delta) noexcept { value_.fetch_add(delta, std::memory_order_acq_rel); }

 private:
  std::atomic<Nanos> value_;
};

inline std::shared_ptr<const Clock> steady_clock() {
  static const auto clock = std::make_shared<const SteadyClock>();
  return clock;
}

}  // namespace fastcycle
