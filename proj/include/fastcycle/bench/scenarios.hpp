#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "fastcycle/bench/stats.hpp"
#include "fastcycle/component/runtime.hpp"
#include "fastcycle/core/payload.hpp"
#include "fastcycle/core/topic_registry.hpp"
#include "fastcycle/error.hpp"

namespace fastcycle::bench {

enum class BenchMode { latency, rtt };
enum class Transport { zero_copy, forced_copy };

constexpr std::string_view to_string(BenchMode m) noexcept {
  return m == BenchMode::latency ? "latency" : "rtt";
}
constexpr std::string_view to_string(Transport t) noexcept {
  return t == Transport::zero_copy ? "zero-copy" : "forced-copy";
}

struct BenchConfig {
  std::vector<std::size_t> payload_sizes{32768, 131072, 524288, 1048576, 4194304};
  std::size_t samples = 5000;
  std::chrono::nanoseconds interval = std::chrono::milliseconds(1);
  std::size_t warmup = 100;
  BenchMode mode = BenchMode::latency;
  Transport transport = Transport::zero_copy;
  std::size_t worker_count = default_worker_count();
  std::uint64_t seed = 1;
  /// rtt only: when false no echo component is registered and every sample is lost.
  bool echo_enabled = true;

  void validate() const {
    if (samples < 2) throw Error(ErrorCode::invalid_config, "samples must be >= 2");
    if (payload_sizes.empty()) throw Error(ErrorCode::invalid_config, "no payload sizes given");
    for (auto s : payload_sizes) {
      if (s == 0) throw Error(ErrorCode::invalid_config, "payload sizes must be >= 1");
    }
    if (interval.count() < 0) throw Error(ErrorCode::invalid_config, "interval must be >= 0");
    if (worker_count == 0) throw Error(ErrorCode::invalid_config, "worker_count must be >= 1");
  }

  /// Pongs arriving later than this after their ping are counted as lost.
  std::chrono::nanoseconds echo_timeout() const {
    return std::max<std::chrono::nanoseconds>(10 * interval, std::chrono::milliseconds(10));
  }
};

/// Builds benchmark payloads: the first 8 bytes carry the message index
/// (little-endian), the rest repeats a block drawn from a seeded generator.
class PayloadGenerator {
 public:
  static constexpr std::size_t kIndexBytes = 8;

  explicit PayloadGenerator(std::uint64_t seed, std::size_t block = 1 << 16) : block_(block) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < block_.size(); i += 8) {
      const std::uint64_t word = rng();
      std::memcpy(block_.data() + i, &word, std::min<std::size_t>(8, block_.size() - i));
    }
  }

  PayloadHandle make(std::uint64_t index, std::size_t size) const {
    return Payload::build(size, [&](std::span<std::byte> out) {
      std::size_t at = 0;
      while (at < out.size()) {
        const std::size_t n = std::min(block_.size(), out.size() - at);
        std::memcpy(out.data() + at, block_.data(), n);
        at += n;
      }
      for (std::size_t b = 0; b < kIndexBytes && b < out.size(); ++b) {
        out[b] = static_cast<std::byte>((index >> (8 * b)) & 0xFF);
      }
    });
  }

  /// Message index embedded by make(), or `fallback` when the payload is too short.
  static std::uint64_t index_of(const Payload& p, std::uint64_t fallback) noexcept {
    if (p.size() < kIndexBytes) return fallback;
    std::uint64_t v = 0;
    for (std::size_t b = kIndexBytes; b-- > 0;) v = (v << 8) | std::to_integer<std::uint64_t>(p.bytes()[b]);
    return v;
  }

 private:
  std::vector<std::byte> block_;
};

/// Wraps a subscriber callback with the benchmark transport. forced_copy
/// deep-copies the payload before the callback sees it.
inline Callback with_transport(Transport transport, Callback callback) {
  if (transport == Transport::zero_copy) return callback;
  return [cb = std::move(callback)](const MessageEnvelope& env) {
    MessageEnvelope copy{env.topic, env.seq, env.publish_ts, Payload::deep_copy(*env.payload)};
    cb(copy);
  };
}

struct SizeResult {
  std::size_t size_bytes = 0;
  std::vector<Sample> samples;  // received in time, warmup excluded
  std::size_t lost = 0;
  std::size_t delivered = 0;           // measured messages that reached the probe
  std::size_t identical_instance = 0;  // of those, same payload instance as published
};

struct BenchResult {
  BenchMode mode = BenchMode::latency;
  Transport transport = Transport::zero_copy;
  std::vector<SizeResult> sizes;  // in configured order
  std::vector<std::string> warnings;

  std::vector<StatsSummary> summaries() const {
    std::vector<StatsSummary> out;
    for (const auto& s : sizes) {
      if (s.samples.size() >= 2) out.push_back(compute_stats(s.samples, s.size_bytes));
    }
    return out;
  }
};

namespace detail {

// Per-message slots written by the sender and the receiving callback.
class DeliveryLog {
 public:
  explicit DeliveryLog(std::size_t n)
      : t_pub_(n), t_recv_(n), sent_id_(n), recv_id_(n), received_(n, false) {}

  std::size_t size() const noexcept { return t_pub_.size(); }

  void sent(std::uint64_t k, std::uint64_t instance_id) { sent_id_.at(k) = instance_id; }
  void published(std::uint64_t k, Nanos t_pub) { t_pub_.at(k) = t_pub; }

  void received(std::uint64_t k, Nanos t_recv, std::uint64_t instance_id) {
    {
      std::lock_guard lk(mu_);
      if (k >= size() || received_[k]) return;
      t_recv_[k] = t_recv;
      recv_id_[k] = instance_id;
      received_[k] = true;
      ++count_;
    }
    cv_.notify_all();
  }

  bool wait_for(std::size_t target, std::chrono::steady_clock::time_point deadline) {
    std::unique_lock lk(mu_);
    return cv_.wait_until(lk, deadline, [&] { return count_ >= target; });
  }

  std::size_t count() const {
    std::lock_guard lk(mu_);
    return count_;
  }

  /// Folds slots [warmup, n) into a SizeResult. `timeout` > 0 marks slower
  /// deliveries as lost.
  SizeResult collect(std::size_t size_bytes, std::size_t warmup, Nanos timeout) const {
    std::lock_guard lk(mu_);
    SizeResult r;
    r.size_bytes = size_bytes;
    for (std::size_t k = warmup; k < size(); ++k) {
      const bool in_time = received_[k] && (timeout <= 0 || t_recv_[k] - t_pub_[k] <= timeout);
      if (!in_time) {
        ++r.lost;
        continue;
      }
      ++r.delivered;
      if (recv_id_[k] == sent_id_[k]) ++r.identical_instance;
      r.samples.push_back({k - warmup, t_pub_[k], t_recv_[k]});
    }
    return r;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<Nanos> t_pub_;
  std::vector<Nanos> t_recv_;
  std::vector<std::uint64_t> sent_id_;
  std::vector<std::uint64_t> recv_id_;
  std::vector<bool> received_;
  std::size_t count_ = 0;
};

}  // namespace detail

/// One payload size of the latency scenario: a probe subscriber stamps
/// t_recv as the first thing its callback does; t_pub is the publish
/// timestamp returned by the registry.
class LatencySession {
 public:
  LatencySession(Runtime& runtime, const BenchConfig& config, std::size_t size_bytes,
                 std::shared_ptr<const PayloadGenerator> generator)
      : runtime_(runtime),
        config_(config),
        size_(size_bytes),
        topic_("bench/latency/" + std::to_string(size_bytes)),
        generator_(std::move(generator)),
        log_(std::make_shared<detail::DeliveryLog>(config.warmup + config.samples)) {
    auto log = log_;
    const Clock* clock = &runtime_.registry().clock();
    Callback probe = [log, clock](const MessageEnvelope& env) {
      const Nanos t_recv = clock->now();
      log->received(PayloadGenerator::index_of(*env.payload, env.seq), t_recv,
                    env.payload->instance_id());
    };
    subscriber_ = runtime_.registry().subscribe(topic_, with_transport(config.transport, std::move(probe)));
  }

  LatencySession(const LatencySession&) = delete;
  LatencySession& operator=(const LatencySession&) = delete;
  ~LatencySession() { runtime_.registry().unsubscribe(subscriber_); }

  std::size_t total() const noexcept { return log_->size(); }

  void send(std::uint64_t k) {
    auto payload = generator_->make(k, size_);
    log_->sent(k, payload->instance_id());
    const auto receipt = runtime_.registry().publish(topic_, std::move(payload));
    log_->published(k, receipt.publish_ts);
  }

  bool wait(std::chrono::steady_clock::time_point deadline) { return log_->wait_for(total(), deadline); }

  SizeResult collect() const { return log_->collect(size_, config_.warmup, 0); }

 private:
  Runtime& runtime_;
  BenchConfig config_;
  std::size_t size_;
  TopicName topic_;
  std::shared_ptr<const PayloadGenerator> generator_;
  std::shared_ptr<detail::DeliveryLog> log_;
  SubscriberId subscriber_ = 0;
};

/// Republishes every ping payload handle on the pong topic.
class EchoComponent final : public Component {
 public:
  explicit EchoComponent(Transport transport) : transport_(transport) {}

  void init(const ParamStore& params, ComponentContext& ctx) override {
    pong_.emplace(ctx.advertise(params.get<std::string>("output")));
    ctx.subscribe(params.get<std::string>("input"),
                  with_transport(transport_, [this](const MessageEnvelope& env) {
                    pong_->publish(env.payload);
                  }));
  }

 private:
  Transport transport_;
  std::optional<Publisher> pong_;
};

/// One payload size of the rtt scenario: ping on `bench/ping/<size>`, an
/// echo component answers on `bench/pong/<size>`, the probe stamps t_recv on
/// pong receipt. r_i = t_recv - t_pub of the original ping.
class RttSession {
 public:
  RttSession(Runtime& runtime, const BenchConfig& config, std::size_t size_bytes,
             std::shared_ptr<const PayloadGenerator> generator)
      : runtime_(runtime),
        config_(config),
        size_(size_bytes),
        ping_("bench/ping/" + std::to_string(size_bytes)),
        generator_(std::move(generator)),
        log_(std::make_shared<detail::DeliveryLog>(config.warmup + config.samples)) {
    const std::string pong = "bench/pong/" + std::to_string(size_bytes);
    if (config.echo_enabled) {
      ComponentDescriptor echo;
      echo.name = "bench.echo." + std::to_string(size_bytes);
      echo.params = ParamStore(Json{{"input", ping_.str()}, {"output", pong}});
      const Transport transport = config.transport;
      echo_ = runtime_.register_component(
          echo, [transport] { return std::make_unique<EchoComponent>(transport); });
    }
    auto log = log_;
    const Clock* clock = &runtime_.registry().clock();
    Callback probe = [log, clock](const MessageEnvelope& env) {
      const Nanos t_recv = clock->now();
      log->received(PayloadGenerator::index_of(*env.payload, env.seq), t_recv,
                    env.payload->instance_id());
    };
    subscriber_ = runtime_.registry().subscribe(TopicName(pong),
                                                with_transport(config.transport, std::move(probe)));
  }

  RttSession(const RttSession&) = delete;
  RttSession& operator=(const RttSession&) = delete;

  ~RttSession() {
    runtime_.registry().unsubscribe(subscriber_);
    if (echo_) {
      for (auto id : echo_->subscriptions()) runtime_.registry().unsubscribe(id);
    }
  }

  std::size_t total() const noexcept { return log_->size(); }

  void send(std::uint64_t k) {
    auto payload = generator_->make(k, size_);
    log_->sent(k, payload->instance_id());
    const auto receipt = runtime_.registry().publish(ping_, std::move(payload));
    log_->published(k, receipt.publish_ts);
  }

  bool wait(std::chrono::steady_clock::time_point deadline) { return log_->wait_for(total(), deadline); }

  SizeResult collect() const { return log_->collect(size_, config_.warmup, config_.echo_timeout().count()); }

 private:
  Runtime& runtime_;
  BenchConfig config_;
  std::size_t size_;
  TopicName ping_;
  std::shared_ptr<const PayloadGenerator> generator_;
  std::shared_ptr<detail::DeliveryLog> log_;
  std::optional<ComponentHandle> echo_;
  SubscriberId subscriber_ = 0;
};

namespace detail {

template <class Session>
BenchResult run_sweep(Runtime& runtime, const BenchConfig& config, BenchMode mode) {
  config.validate();
  if (!runtime.running()) runtime.start();
  auto generator = std::make_shared<const PayloadGenerator>(config.seed);

  BenchResult result;
  result.mode = mode;
  result.transport = config.transport;
  for (const std::size_t size : config.payload_sizes) {
    Session session(runtime, config, size, generator);
    // Absolute deadlines so pacing error does not accumulate.
    const auto t0 = std::chrono::steady_clock::now();
    for (std::uint64_t k = 0; k < session.total(); ++k) {
      std::this_thread::sleep_until(t0 + k * config.interval);
      session.send(k);
    }
    const auto grace = std::max<std::chrono::nanoseconds>(config.echo_timeout(), std::chrono::seconds(1));
    session.wait(std::chrono::steady_clock::now() + grace);
    runtime.broker().wait_idle(grace);

    auto r = session.collect();
    if (r.lost > 0) {
      result.warnings.push_back("LostSamples: " + std::to_string(size) + " bytes, n_effective=" +
                                std::to_string(r.samples.size()) + " of " +
                                std::to_string(config.samples));
    }
    result.sizes.push_back(std::move(r));
  }
  return result;
}

}  // namespace detail

/// l_i = t_recv - t_pub per message, for every configured payload size.
/// Starts `runtime` if it is not running yet; leaves it running.
inline BenchResult run_latency(Runtime& runtime, const BenchConfig& config) {
  return detail::run_sweep<LatencySession>(runtime, config, BenchMode::latency);
}

/// r_i = pong reception - ping publication, for every configured payload size.
inline BenchResult run_rtt(Runtime& runtime, const BenchConfig& config) {
  return detail::run_sweep<RttSession>(runtime, config, BenchMode::rtt);
}

}  // namespace fastcycle::bench
