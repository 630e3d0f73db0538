#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "fastcycle/broker/executor.hpp"
#include "fastcycle/clock.hpp"
#include "fastcycle/core/topic_registry.hpp"
#include "fastcycle/error.hpp"

namespace fastcycle {

/// Scan loop parks until a publish or a task completion signals it.
struct NotifyWakeup {};

/// Scan loop wakes on a fixed interval regardless of activity.
struct PollWakeup {
  std::chrono::nanoseconds interval{std::chrono::microseconds(100)};
};

using Wakeup = std::variant<NotifyWakeup, PollWakeup>;

inline std::size_t default_worker_count() noexcept {
  return std::max(1u, std::thread::hardware_concurrency());
}

struct BrokerConfig {
  std::size_t worker_count = default_worker_count();
  Wakeup wakeup = NotifyWakeup{};
  std::chrono::nanoseconds shutdown_drain_timeout = std::chrono::seconds(10);

  void validate() const {
    if (worker_count == 0) throw Error(ErrorCode::invalid_config, "worker_count must be >= 1");
    if (auto* poll = std::get_if<PollWakeup>(&wakeup); poll && poll->interval.count() <= 0) {
      throw Error(ErrorCode::invalid_config, "poll interval must be > 0");
    }
    if (shutdown_drain_timeout.count() < 0) {
      throw Error(ErrorCode::invalid_config, "shutdown_drain_timeout must be >= 0");
    }
  }
};

enum class StopMode { drain, immediate };

struct BrokerStats {
  std::uint64_t published = 0;
  std::uint64_t dispatched = 0;  // envelope callbacks that ran (including ones that threw)
  std::uint64_t dropped = 0;     // evicted + rejected + discarded
  std::uint64_t in_flight = 0;   // submitted tasks not yet finished
  std::uint64_t pending = 0;     // envelopes still queued
  std::uint64_t failed = 0;      // callbacks or serve calls that threw
  std::uint64_t timer_fires = 0;
  // Time from publish to callback start, summed over dispatched envelopes.
  std::uint64_t total_wait_ns = 0;
  std::uint64_t max_wait_ns = 0;

  double mean_wait_us() const noexcept {
    return dispatched == 0 ? 0.0 : static_cast<double>(total_wait_ns) / dispatched / 1000.0;
  }
};

class DrainTimeout : public Error {
 public:
  DrainTimeout(std::uint64_t remaining, BrokerStats stats)
      : Error(ErrorCode::drain_timeout,
              std::to_string(remaining) + " envelope(s) still queued or in flight"),
        remaining_(remaining),
        stats_(stats) {}

  std::uint64_t remaining() const noexcept { return remaining_; }
  const BrokerStats& stats() const noexcept { return stats_; }

 private:
  std::uint64_t remaining_;
  BrokerStats stats_;
};

using TimerId = std::uint64_t;

struct TimerState {
  std::chrono::nanoseconds period{0};
  std::uint64_t ticks = 0;
  std::uint64_t overruns = 0;  // fires whose body outlasted the period
  std::uint64_t skipped = 0;   // deadlines dropped to catch up after an overrun
  Nanos last_fire = 0;
  bool active = false;
};

/// Dispatch engine: one scan thread that finds queue heads and submits their
/// callbacks to an executor, plus fixed-rate timers sharing the same
/// serial-group rules.
///
/// Without start(), a broker built over a ManualExecutor can be single
/// stepped through dispatch_pending().
class Broker final : private PublishListener {
  struct Timer {
    std::chrono::nanoseconds period;
    std::chrono::steady_clock::time_point next_deadline;
    std::shared_ptr<const std::function<void()>> fn;
    std::shared_ptr<SerialGroup> group;
    std::atomic<std::uint64_t> ticks{0};
    std::atomic<std::uint64_t> overruns{0};
    std::atomic<std::uint64_t> skipped{0};
    std::atomic<Nanos> last_fire{0};
    std::atomic<bool> active{true};
  };

 public:
  Broker(TopicRegistry& registry, BrokerConfig config = {},
         std::shared_ptr<Executor> executor = nullptr)
      : registry_(registry), config_(std::move(config)), executor_(std::move(executor)) {}

  Broker(const Broker&) = delete;
  Broker& operator=(const Broker&) = delete;

  ~Broker() override {
    if (state_ == State::running) {
      try {
        stop(StopMode::immediate);
      } catch (...) {
      }
    }
    registry_.set_listener(nullptr);
  }

  void start() {
    std::lock_guard lk(lifecycle_mu_);
    if (state_ != State::idle) throw Error(ErrorCode::already_started, "broker already started");
    config_.validate();
    if (!executor_) executor_ = std::make_shared<WorkerPool>(config_.worker_count);
    registry_.set_listener(this);
    stop_scan_ = false;
    state_ = State::running;
    scan_ = std::thread([this] { scan_loop(); });
    wake();  // anything published before start
  }

  bool running() const noexcept { return state_ == State::running; }

  /// Submits the head envelope of every queue whose serial group is idle.
  std::size_t dispatch_pending() {
    std::lock_guard lk(dispatch_mu_);
    if (!executor_) throw Error(ErrorCode::not_running, "broker has no executor");
    auto ready = registry_.take_ready();
    for (auto& task : ready) {
      in_flight_.fetch_add(1);
      executor_->submit(envelope_task(std::move(task)));
    }
    return ready.size();
  }

  /// Stops the broker. drain: refuse new publishes, deliver everything
  /// queued (bounded by shutdown_drain_timeout), join workers. immediate:
  /// let in-flight callbacks finish, count queued envelopes as dropped.
  BrokerStats stop(StopMode mode) {
    std::lock_guard lk(lifecycle_mu_);
    if (state_ != State::running) throw Error(ErrorCode::not_running, "broker is not running");
    if (executor_->on_worker()) {
      throw Error(ErrorCode::invalid_state, "stop() called from a callback");
    }
    registry_.close();

    bool timed_out = false;
    if (mode == StopMode::drain) timed_out = !wait_idle(config_.shutdown_drain_timeout);

    {
      std::lock_guard tl(timers_mu_);
      for (auto& [id, t] : timers_) t->active = false;
    }
    {
      std::lock_guard wl(wake_mu_);
      stop_scan_ = true;
    }
    wake_cv_.notify_all();
    if (scan_.joinable()) scan_.join();

    const std::uint64_t remaining = registry_.discard_all() + in_flight_.load();
    executor_->shutdown();
    registry_.set_listener(nullptr);
    state_ = State::stopped;

    auto final_stats = stats();
    if (timed_out) throw DrainTimeout(remaining, final_stats);
    return final_stats;
  }

  /// Blocks until no envelope is queued or in flight and no timer task is
  /// running, or until the timeout passes. Returns whether idle was reached.
  bool wait_idle(std::chrono::nanoseconds timeout) {
    auto idle = [&] { return registry_.outstanding() == 0 && in_flight_.load() == 0; };
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    idle_waiters_.fetch_add(1);
    std::unique_lock lk(done_mu_);
    bool ok = idle();
    // Unsubscribe can empty queues without a task completing, so re-check
    // on a short slice instead of relying on notifications alone.
    while (!ok && std::chrono::steady_clock::now() < deadline) {
      const auto slice = std::min(deadline, std::chrono::steady_clock::now() +
                                                std::chrono::milliseconds(10));
      ok = done_cv_.wait_until(lk, slice, idle);
    }
    idle_waiters_.fetch_sub(1);
    return ok;
  }

  BrokerStats stats() const {
    const auto c = registry_.counters();
    BrokerStats s;
    s.published = c.published;
    s.dispatched = dispatched_.load();
    s.dropped = c.evicted + c.rejected + c.discarded;
    s.in_flight = in_flight_.load();
    s.pending = registry_.pending();
    s.failed = failed_.load();
    s.timer_fires = timer_fires_.load();
    s.total_wait_ns = total_wait_ns_.load();
    s.max_wait_ns = max_wait_ns_.load();
    return s;
  }

  /// Fixed-rate timer: deadlines advance by `period` from the first one, not
  /// from when the previous body finished. Fires skip while `group` is busy.
  TimerId add_timer(std::chrono::nanoseconds period, std::function<void()> fn,
                    std::shared_ptr<SerialGroup> group = nullptr) {
    if (period.count() <= 0) throw Error(ErrorCode::invalid_period, "timer period must be > 0");
    auto timer = std::make_shared<Timer>();
    timer->period = period;
    timer->next_deadline = std::chrono::steady_clock::now() + period;
    timer->fn = std::make_shared<const std::function<void()>>(std::move(fn));
    timer->group = group ? std::move(group) : std::make_shared<SerialGroup>();
    TimerId id;
    {
      std::lock_guard lk(timers_mu_);
      id = next_timer_id_++;
      timers_.emplace(id, std::move(timer));
    }
    wake();
    return id;
  }

  bool cancel_timer(TimerId id) {
    std::lock_guard lk(timers_mu_);
    auto it = timers_.find(id);
    if (it == timers_.end() || !it->second->active) return false;
    it->second->active = false;
    return true;
  }

  std::optional<TimerState> timer(TimerId id) const {
    std::lock_guard lk(timers_mu_);
    auto it = timers_.find(id);
    if (it == timers_.end()) return std::nullopt;
    const Timer& t = *it->second;
    return TimerState{t.period,   t.ticks.load(),     t.overruns.load(),
                      t.skipped.load(), t.last_fire.load(), t.active.load()};
  }

  std::thread::id scan_thread_id() const noexcept { return scan_id_.load(); }
  const BrokerConfig& config() const noexcept { return config_; }
  TopicRegistry& registry() noexcept { return registry_; }
  Executor* executor() noexcept { return executor_.get(); }

 private:
  enum class State { idle, running, stopped };

  void on_publish() noexcept override { wake(); }

  void wake() noexcept {
    {
      std::lock_guard lk(wake_mu_);
      signaled_ = true;
    }
    wake_cv_.notify_one();
  }

  void task_done() noexcept {
    in_flight_.fetch_sub(1);
    if (std::holds_alternative<NotifyWakeup>(config_.wakeup)) wake();
    if (idle_waiters_.load() > 0) {
      { std::lock_guard lk(done_mu_); }
      done_cv_.notify_all();
    }
  }

  Task envelope_task(ReadyTask task) {
    return [this, t = std::move(task)]() mutable {
      const Nanos wait = std::max<Nanos>(0, registry_.clock().now() - t.envelope.publish_ts);
      total_wait_ns_.fetch_add(static_cast<std::uint64_t>(wait));
      auto prev = max_wait_ns_.load();
      while (static_cast<std::uint64_t>(wait) > prev &&
             !max_wait_ns_.compare_exchange_weak(prev, static_cast<std::uint64_t>(wait))) {
      }
      try {
        (*t.callback)(t.envelope);
      } catch (...) {
        failed_.fetch_add(1);
      }
      t.envelope.payload.reset();
      dispatched_.fetch_add(1);
      t.group->release();
      registry_.task_finished();
      task_done();
    };
  }

  Task timer_task(std::shared_ptr<Timer> timer) {
    return [this, timer = std::move(timer)] {
      timer->ticks.fetch_add(1);
      timer->last_fire.store(registry_.clock().now());
      timer_fires_.fetch_add(1);
      const auto begin = std::chrono::steady_clock::now();
      try {
        (*timer->fn)();
      } catch (...) {
        failed_.fetch_add(1);
      }
      if (std::chrono::steady_clock::now() - begin > timer->period) timer->overruns.fetch_add(1);
      timer->group->release();
      task_done();
    };
  }

  std::optional<std::chrono::steady_clock::time_point> next_deadline() const {
    const auto now = std::chrono::steady_clock::now();
    std::lock_guard lk(timers_mu_);
    std::optional<std::chrono::steady_clock::time_point> next;
    for (auto& [id, t] : timers_) {
      if (!t->active) continue;
      // Overdue but blocked by its group: the task that frees the group wakes us.
      if (t->next_deadline <= now && t->group->busy()) continue;
      if (!next || t->next_deadline < *next) next = t->next_deadline;
    }
    return next;
  }

  void fire_due_timers() {
    const auto now = std::chrono::steady_clock::now();
    std::vector<std::shared_ptr<Timer>> due;
    {
      std::lock_guard lk(timers_mu_);
      for (auto& [id, t] : timers_) {
        if (!t->active || now < t->next_deadline) continue;
        if (!t->group->try_acquire()) continue;  // retried when the group frees up
        t->next_deadline += t->period;
        while (t->next_deadline <= now) {
          t->next_deadline += t->period;
          t->skipped.fetch_add(1);
        }
        due.push_back(t);
      }
    }
    for (auto& t : due) {
      in_flight_.fetch_add(1);
      executor_->submit(timer_task(std::move(t)));
    }
  }

  void scan_loop() {
    scan_id_ = std::this_thread::get_id();
    const auto* poll = std::get_if<PollWakeup>(&config_.wakeup);
    for (;;) {
      {
        std::unique_lock lk(wake_mu_);
        auto deadline = next_deadline();
        if (poll) {
          auto tick = std::chrono::steady_clock::now() + poll->interval;
          if (!deadline || tick < *deadline) deadline = tick;
          wake_cv_.wait_until(lk, *deadline, [&] { return stop_scan_; });
        } else if (deadline) {
          wake_cv_.wait_until(lk, *deadline, [&] { return signaled_ || stop_scan_; });
        } else {
          wake_cv_.wait(lk, [&] { return signaled_ || stop_scan_; });
        }
        if (stop_scan_) return;
        signaled_ = false;
      }
      fire_due_timers();
      dispatch_pending();
    }
  }

  TopicRegistry& registry_;
  BrokerConfig config_;
  std::shared_ptr<Executor> executor_;

  std::mutex lifecycle_mu_;
  std::atomic<State> state_{State::idle};
  std::thread scan_;
  std::atomic<std::thread::id> scan_id_{};

  std::mutex dispatch_mu_;

  std::mutex wake_mu_;
  std::condition_variable wake_cv_;
  bool signaled_ = false;
  bool stop_scan_ = false;

  std::mutex done_mu_;
  std::condition_variable done_cv_;
  std::atomic<int> idle_waiters_{0};

  mutable std::mutex timers_mu_;
  std::map<TimerId, std::shared_ptr<Timer>> timers_;
  TimerId next_timer_id_ = 1;

  std::atomic<std::uint64_t> in_flight_{0};
  std::atomic<std::uint64_t> dispatched_{0};
  std::atomic<std::uint64_t> failed_{0};
  std::atomic<std::uint64_t> timer_fires_{0};
  std::atomic<std::uint64_t> total_wait_ns_{0};
  std::atomic<std::uint64_t> max_wait_ns_{0};
};

}  // namespace fastcycle
