#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fastcycle/component/runtime.hpp"
#include "fastcycle/core/topic_registry.hpp"
#include "fastcycle/error.hpp"
#include "fastcycle/logging/log_record.hpp"

namespace fastcycle {

class TopicFilter {
 public:
  static TopicFilter all() { return TopicFilter(); }

  static TopicFilter allowlist(std::vector<TopicName> topics) {
    if (topics.empty()) throw Error(ErrorCode::empty_allowlist, "allowlist must name at least one topic");
    TopicFilter f;
    f.topics_ = std::move(topics);
    return f;
  }

  bool is_all() const noexcept { return !topics_.has_value(); }
  const std::vector<TopicName>& topics() const { return *topics_; }

 private:
  TopicFilter() = default;
  std::optional<std::vector<TopicName>> topics_;
};

/// Byte destination for encoded records. Writes arrive serialized.
class LogSink {
 public:
  virtual ~LogSink() = default;
  virtual void write(std::span<const std::byte> bytes) = 0;
  virtual void flush() {}
};

class StreamSink final : public LogSink {
 public:
  explicit StreamSink(std::ostream& out) : out_(out) {}

  void write(std::span<const std::byte> bytes) override {
    out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  void flush() override { out_.flush(); }

 private:
  std::ostream& out_;
};

/// Writes `<stem>.<index><ext>` files, starting a new one before a record
/// would push the current file past `max_bytes`. Records are never split.
class SplitFileSink final : public LogSink {
 public:
  SplitFileSink(std::filesystem::path base, std::uint64_t max_bytes)
      : base_(std::move(base)), max_bytes_(max_bytes) {
    if (max_bytes_ == 0) throw Error(ErrorCode::invalid_config, "split size must be positive");
  }

  void write(std::span<const std::byte> bytes) override {
    if (!out_.is_open() || (written_ > 0 && written_ + bytes.size() > max_bytes_)) roll();
    out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out_) throw Error(ErrorCode::io_error, "write failed on " + files_.back().string());
    written_ += bytes.size();
  }
  void flush() override { out_.flush(); }

  const std::vector<std::filesystem::path>& files() const noexcept { return files_; }

 private:
  void roll() {
    if (out_.is_open()) out_.close();
    auto name = base_.stem().string() + "." + std::to_string(files_.size()) + base_.extension().string();
    files_.push_back(base_.parent_path() / name);
    out_.open(files_.back(), std::ios::binary | std::ios::trunc);
    if (!out_) throw Error(ErrorCode::io_error, "cannot open " + files_.back().string());
    written_ = 0;
  }

  std::filesystem::path base_;
  std::uint64_t max_bytes_;
  std::ofstream out_;
  std::uint64_t written_ = 0;
  std::vector<std::filesystem::path> files_;
};

struct LoggerOptions {
  QueueLimit limit = QueueLimit::bounded(1 << 16, DropPolicy::drop_oldest);
};

/// Records envelopes of the filtered topics. The logger is an ordinary
/// subscriber: it reads the shared payload in place and copies bytes only
/// into the sink. Detaches on destruction.
class Logger {
  struct State {
    std::shared_ptr<LogSink> sink;
    std::vector<std::byte> scratch;
    std::atomic<std::uint64_t> records{0};
    std::atomic<std::uint64_t> bytes{0};
    std::atomic<std::uint64_t> write_errors{0};
  };

 public:
  Logger(TopicRegistry& registry, const TopicFilter& filter, std::shared_ptr<LogSink> sink,
         LoggerOptions options = {})
      : registry_(registry), state_(std::make_shared<State>()) {
    state_->sink = std::move(sink);
    auto state = state_;
    Callback write = [state](const MessageEnvelope& env) {
      state->scratch.clear();
      encode_record(env, state->scratch);
      try {
        state->sink->write(state->scratch);
      } catch (...) {
        state->write_errors.fetch_add(1);
        throw;
      }
      state->records.fetch_add(1);
      state->bytes.fetch_add(state->scratch.size());
    };
    SubscribeOptions sub{options.limit, std::make_shared<SerialGroup>()};
    if (filter.is_all()) {
      wildcard_ = registry_.subscribe_all(std::move(write), sub);
    } else {
      for (const auto& topic : filter.topics()) ids_.push_back(registry_.subscribe(topic, write, sub));
    }
  }

  Logger(const Logger&) = delete;
  Logger& operator=(const Logger&) = delete;
  ~Logger() { detach(); }

  void detach() {
    if (wildcard_) registry_.unsubscribe_all(*std::exchange(wildcard_, std::nullopt));
    for (auto id : std::exchange(ids_, {})) registry_.unsubscribe(id);
  }

  std::vector<SubscriberId> subscriptions() const {
    return wildcard_ ? registry_.wildcard_members(*wildcard_) : ids_;
  }

  std::uint64_t records() const noexcept { return state_->records.load(); }
  std::uint64_t bytes() const noexcept { return state_->bytes.load(); }
  std::uint64_t write_errors() const noexcept { return state_->write_errors.load(); }

  /// Envelopes this logger lost to its queue policy.
  std::uint64_t dropped() const {
    std::uint64_t n = 0;
    for (auto id : subscriptions()) {
      if (auto info = registry_.subscription(id)) n += info->evicted + info->rejected;
    }
    return n;
  }

  void flush() { state_->sink->flush(); }

 private:
  TopicRegistry& registry_;
  std::shared_ptr<State> state_;
  std::optional<TopicRegistry::WildcardId> wildcard_;
  std::vector<SubscriberId> ids_;
};

inline std::unique_ptr<Logger> attach_logger(TopicRegistry& registry, const TopicFilter& filter,
                                             std::shared_ptr<LogSink> sink, LoggerOptions options = {}) {
  return std::make_unique<Logger>(registry, filter, std::move(sink), options);
}

inline std::unique_ptr<Logger> attach_logger(Runtime& runtime, const TopicFilter& filter,
                                             std::shared_ptr<LogSink> sink, LoggerOptions options = {}) {
  return attach_logger(runtime.registry(), filter, std::move(sink), options);
}

inline std::unique_ptr<Logger> attach_logger(Runtime& runtime, const TopicFilter& filter,
                                             std::ostream& out, LoggerOptions options = {}) {
  return attach_logger(runtime.registry(), filter, std::make_shared<StreamSink>(out), options);
}

}  // namespace fastcycle
