#include <gtest/gtest.h>

#include <random>
#include <set>
#include <thread>

#include "oracles.hpp"

using namespace fastcycle;
using namespace std::chrono_literals;

namespace {

PayloadHandle text(std::string_view s) { return Payload::from_string(s); }

BrokerConfig workers(std::size_t n) {
  BrokerConfig c;
  c.worker_count = n;
  return c;
}

// A callback that parks until released.
class Gate {
 public:
  void wait() {
    std::unique_lock lk(mu_);
    ++waiting_;
    cv_.notify_all();
    cv_.wait(lk, [&] { return open_; });
  }
  void open() {
    std::lock_guard lk(mu_);
    open_ = true;
    cv_.notify_all();
  }
  void await_waiter() {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] { return waiting_ > 0; });
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  bool open_ = false;
  int waiting_ = 0;
};

}  // namespace

TEST(Broker, ZeroWorkersIsInvalidConfig) {
  TopicRegistry r;
  Broker b(r, workers(0));
  try {
    b.start();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_config);
  }
}

TEST(Broker, SecondStartIsAlreadyStarted) {
  TopicRegistry r;
  Broker b(r, workers(1));
  b.start();
  try {
    b.start();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::already_started);
  }
  b.stop(StopMode::drain);
}

TEST(Broker, SingleWorkerRunsEveryCallbackOnOneThread) {
  TopicRegistry r;
  std::mutex mu;
  std::set<std::thread::id> threads;
  std::vector<int> order;
  for (int s = 0; s < 3; ++s) {
    r.subscribe(TopicName("x"), [&, s](const MessageEnvelope&) {
      std::lock_guard lk(mu);
      threads.insert(std::this_thread::get_id());
      order.push_back(s);
    });
  }
  Broker b(r, workers(1));
  b.start();
  for (int k = 0; k < 20; ++k) r.publish(TopicName("x"), text("m"));
  b.stop(StopMode::drain);
  EXPECT_EQ(threads.size(), 1u);
  EXPECT_EQ(order.size(), 60u);
}

TEST(Broker, PublishesBeforeStartAreDispatched) {
  TopicRegistry r;
  std::atomic<int> calls{0};
  for (int s = 0; s < 3; ++s) r.subscribe(TopicName("x"), [&](const MessageEnvelope&) { ++calls; });
  for (int k = 0; k < 10; ++k) r.publish(TopicName("x"), text("m"));
  Broker b(r, workers(2));
  b.start();
  auto stats = b.stop(StopMode::drain);
  EXPECT_EQ(calls.load(), 30);
  EXPECT_EQ(stats.dispatched, 30u);
}

TEST(Broker, DispatchPendingOnEmptyQueues) {
  TopicRegistry r;
  r.subscribe(TopicName("x"), [](const MessageEnvelope&) {});
  auto exec = std::make_shared<ManualExecutor>();
  Broker b(r, workers(1), exec);
  EXPECT_EQ(b.dispatch_pending(), 0u);
}

TEST(Broker, SingleSteppedDispatchIsFifo) {
  TopicRegistry r;
  std::vector<std::uint64_t> seqs;
  r.subscribe(TopicName("x"), [&](const MessageEnvelope& e) { seqs.push_back(e.seq); });
  for (int k = 0; k < 5; ++k) r.publish(TopicName("x"), text("m"));
  auto exec = std::make_shared<ManualExecutor>();
  Broker b(r, workers(1), exec);
  for (int step = 0; step < 5; ++step) {
    EXPECT_EQ(b.dispatch_pending(), 1u);
    EXPECT_EQ(b.dispatch_pending(), 0u);  // one task per subscriber in flight
    EXPECT_TRUE(exec->run_one());
  }
  EXPECT_EQ(seqs, (std::vector<std::uint64_t>{0, 1, 2, 3, 4}));
}

TEST(Broker, TwoSubscribersGetTwoTasks) {
  TopicRegistry r;
  r.subscribe(TopicName("x"), [](const MessageEnvelope&) {});
  r.subscribe(TopicName("x"), [](const MessageEnvelope&) {});
  r.publish(TopicName("x"), text("m"));
  auto exec = std::make_shared<ManualExecutor>();
  Broker b(r, workers(1), exec);
  EXPECT_EQ(b.dispatch_pending(), 2u);
  EXPECT_EQ(exec->pending(), 2u);
  exec->run_all();
}

TEST(Broker, DrainStopIsLossless) {
  TopicRegistry r;
  for (int s = 0; s < 4; ++s) r.subscribe(TopicName("x"), [](const MessageEnvelope&) {});
  Broker b(r, workers(3));
  b.start();
  for (int k = 0; k < 250; ++k) r.publish(TopicName("x"), text("m"));
  auto stats = b.stop(StopMode::drain);
  EXPECT_EQ(stats.dispatched, 1000u);
  EXPECT_EQ(stats.dropped, 0u);
  EXPECT_EQ(stats.pending, 0u);
  EXPECT_EQ(stats.in_flight, 0u);
}

TEST(Broker, ImmediateStopCountsQueuedAsDropped) {
  TopicRegistry r;
  Gate gate;
  r.subscribe(TopicName("x"), [&](const MessageEnvelope&) { gate.wait(); });
  Broker b(r, workers(2));
  b.start();
  r.publish(TopicName("x"), text("m"));
  gate.await_waiter();
  for (int k = 0; k < 7; ++k) r.publish(TopicName("x"), text("m"));
  std::thread opener([&] {
    std::this_thread::sleep_for(50ms);
    gate.open();
  });
  auto stats = b.stop(StopMode::immediate);
  opener.join();
  EXPECT_EQ(stats.dropped, 7u);
  EXPECT_EQ(stats.dispatched, 1u);
}

TEST(Broker, StopOnIdleBroker) {
  TopicRegistry r;
  Broker b(r, workers(2));
  b.start();
  auto stats = b.stop(StopMode::drain);
  EXPECT_EQ(stats.dispatched, 0u);
  EXPECT_EQ(stats.in_flight, 0u);
}

TEST(Broker, StopTwiceIsNotRunning) {
  TopicRegistry r;
  Broker b(r, workers(1));
  try {
    b.stop(StopMode::drain);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_running);
  }
  b.start();
  b.stop(StopMode::drain);
  EXPECT_THROW(b.stop(StopMode::drain), Error);
}

TEST(Broker, DrainStopRejectsNewPublishes) {
  TopicRegistry r;
  r.subscribe(TopicName("x"), [](const MessageEnvelope&) {});
  Broker b(r, workers(1));
  b.start();
  b.stop(StopMode::drain);
  EXPECT_FALSE(r.publish(TopicName("x"), text("m")).accepted);
}

TEST(Broker, DrainTimeoutReportsRemaining) {
  TopicRegistry r;
  Gate gate;
  r.subscribe(TopicName("x"), [&](const MessageEnvelope&) { gate.wait(); });
  BrokerConfig cfg = workers(1);
  cfg.shutdown_drain_timeout = 50ms;
  Broker b(r, cfg);
  b.start();
  for (int k = 0; k < 3; ++k) r.publish(TopicName("x"), text("m"));
  gate.await_waiter();
  std::thread opener([&] {
    std::this_thread::sleep_for(200ms);
    gate.open();
  });
  try {
    b.stop(StopMode::drain);
    FAIL() << "expected DrainTimeout";
  } catch (const DrainTimeout& e) {
    EXPECT_EQ(e.remaining(), 3u);  // 2 queued + 1 in flight
    EXPECT_EQ(e.code(), ErrorCode::drain_timeout);
  }
  opener.join();
}

TEST(Broker, CallbackExceptionsAreCountedAndWorkersSurvive) {
  TopicRegistry r;
  std::atomic<int> ok{0};
  r.subscribe(TopicName("x"), [](const MessageEnvelope&) { throw std::runtime_error("boom"); });
  r.subscribe(TopicName("x"), [&](const MessageEnvelope&) { ++ok; });
  Broker b(r, workers(1));
  b.start();
  for (int k = 0; k < 10; ++k) r.publish(TopicName("x"), text("m"));
  auto stats = b.stop(StopMode::drain);
  EXPECT_EQ(stats.failed, 10u);
  EXPECT_EQ(ok.load(), 10);
  EXPECT_EQ(stats.dispatched, 20u);
}

TEST(Broker, ReentrantPublishFromCallback) {
  TopicRegistry r;
  std::atomic<int> tail{0};
  r.subscribe(TopicName("a"), [&](const MessageEnvelope& e) { r.publish(TopicName("b"), e.payload); });
  r.subscribe(TopicName("b"), [&](const MessageEnvelope&) { ++tail; });
  Broker b(r, workers(1));
  b.start();
  for (int k = 0; k < 50; ++k) r.publish(TopicName("a"), text("m"));
  ASSERT_TRUE(b.wait_idle(5s));
  b.stop(StopMode::drain);
  EXPECT_EQ(tail.load(), 50);
}

TEST(Broker, StopFromCallbackIsRejected) {
  TopicRegistry r;
  Broker b(r, workers(1));
  std::atomic<int> code{-1};
  r.subscribe(TopicName("x"), [&](const MessageEnvelope&) {
    try {
      b.stop(StopMode::drain);
    } catch (const Error& e) {
      code = static_cast<int>(e.code());
    }
  });
  b.start();
  r.publish(TopicName("x"), text("m"));
  ASSERT_TRUE(b.wait_idle(5s));
  b.stop(StopMode::drain);
  EXPECT_EQ(code.load(), static_cast<int>(ErrorCode::invalid_state));
}

TEST(Broker, RetainedPayloadOutlivesCallback) {
  TopicRegistry r;
  PayloadHandle kept;
  r.subscribe(TopicName("x"), [&](const MessageEnvelope& e) { kept = e.payload; });
  Broker b(r, workers(1));
  b.start();
  r.publish(TopicName("x"), text("still here"));
  b.stop(StopMode::drain);
  ASSERT_TRUE(kept);
  EXPECT_EQ(kept->as_string_view(), "still here");
}

TEST(Broker, PollWakeupDelivers) {
  TopicRegistry r;
  std::atomic<int> calls{0};
  r.subscribe(TopicName("x"), [&](const MessageEnvelope&) { ++calls; });
  BrokerConfig cfg = workers(2);
  cfg.wakeup = PollWakeup{200us};
  Broker b(r, cfg);
  b.start();
  for (int k = 0; k < 100; ++k) r.publish(TopicName("x"), text("m"));
  b.stop(StopMode::drain);
  EXPECT_EQ(calls.load(), 100);
}

TEST(Broker, NonPositivePollIntervalIsInvalid) {
  TopicRegistry r;
  BrokerConfig cfg = workers(1);
  cfg.wakeup = PollWakeup{0ns};
  Broker b(r, cfg);
  EXPECT_THROW(b.start(), Error);
}

TEST(Broker, WaitTimesAreRecorded) {
  auto clock = std::make_shared<ManualClock>(1'000);
  TopicRegistry r(clock);
  r.subscribe(TopicName("x"), [](const MessageEnvelope&) {});
  auto exec = std::make_shared<ManualExecutor>();
  Broker b(r, workers(1), exec);
  r.publish(TopicName("x"), text("m"));
  clock->set(1'250);
  b.dispatch_pending();
  exec->run_all();
  EXPECT_EQ(b.stats().total_wait_ns, 250u);
  EXPECT_EQ(b.stats().max_wait_ns, 250u);
}

TEST(BrokerProperty, CallbacksNeverRunOnTheScanThread) {
  for (std::size_t n : {1u, 2u, 4u}) {
    TopicRegistry r;
    Broker b(r, workers(n));
    std::atomic<int> on_scan{0};
    std::atomic<int> calls{0};
    for (int s = 0; s < 3; ++s) {
      r.subscribe(TopicName("x"), [&](const MessageEnvelope&) {
        if (std::this_thread::get_id() == b.scan_thread_id()) ++on_scan;
        ++calls;
      });
    }
    b.start();
    for (int k = 0; k < 200; ++k) r.publish(TopicName("x"), text("m"));
    b.stop(StopMode::drain);
    EXPECT_EQ(calls.load(), 600);
    EXPECT_EQ(on_scan.load(), 0);
  }
}

TEST(BrokerProperty, SubscriberCallbacksNeverOverlap) {
  TopicRegistry r;
  std::vector<std::unique_ptr<oracle::ReentrancyProbe>> probes;
  for (int s = 0; s < 4; ++s) {
    probes.push_back(std::make_unique<oracle::ReentrancyProbe>());
    auto* probe = probes.back().get();
    r.subscribe(TopicName("x"), [probe](const MessageEnvelope&) {
      oracle::ReentrancyProbe::Scope scope(*probe);
      std::this_thread::yield();
    });
  }
  Broker b(r, workers(8));
  b.start();
  for (int k = 0; k < 2000; ++k) r.publish(TopicName("x"), text("m"));
  b.stop(StopMode::drain);
  for (auto& p : probes) EXPECT_EQ(p->peak(), 1);
}

TEST(BrokerProperty, SlowSubscriberDoesNotStallOthers) {
  TopicRegistry r;
  Gate gate;
  std::atomic<bool> fast_done{false};
  r.subscribe(TopicName("x"), [&](const MessageEnvelope&) { gate.wait(); });
  r.subscribe(TopicName("x"), [&](const MessageEnvelope&) { fast_done = true; });
  Broker b(r, workers(2));
  b.start();
  r.publish(TopicName("x"), text("m"));
  const auto deadline = std::chrono::steady_clock::now() + 2s;
  while (!fast_done && std::chrono::steady_clock::now() < deadline) std::this_thread::sleep_for(1ms);
  EXPECT_TRUE(fast_done.load());
  gate.open();
  b.stop(StopMode::drain);
}

TEST(BrokerProperty, ConservationUnderBoundedQueues) {
  std::mt19937_64 rng(21);
  for (int round = 0; round < 10; ++round) {
    TopicRegistry r;
    std::uint64_t offered = 0;
    const int subs = std::uniform_int_distribution<int>(1, 5)(rng);
    for (int s = 0; s < subs; ++s) {
      const auto policy = std::uniform_int_distribution<int>(0, 1)(rng) ? DropPolicy::drop_oldest
                                                                         : DropPolicy::reject_new;
      r.subscribe(TopicName("x"), [](const MessageEnvelope&) { std::this_thread::yield(); },
                  {QueueLimit::bounded(std::uniform_int_distribution<std::size_t>(1, 8)(rng), policy),
                   nullptr});
    }
    Broker b(r, workers(2));
    b.start();
    const int n = std::uniform_int_distribution<int>(1, 2000)(rng);
    for (int k = 0; k < n; ++k) {
      auto receipt = r.publish(TopicName("x"), text("m"));
      offered += receipt.delivered_to + receipt.rejected.size();
    }
    auto stats = b.stop(StopMode::drain);
    EXPECT_EQ(stats.dispatched + stats.dropped + stats.pending, offered);
    EXPECT_EQ(stats.pending, 0u);
  }
}

TEST(BrokerProperty, RandomFanOutIsLosslessAndOrdered) {
  std::mt19937_64 rng(22);
  for (int round = 0; round < 10; ++round) {
    const auto c = oracle::random_fanout_case(rng, 2000);
    const auto out = oracle::run_fanout(c);
    EXPECT_TRUE(out.drained);
    EXPECT_EQ(out.callbacks, out.expected);
    EXPECT_EQ(out.expected, out.predicted);
    EXPECT_TRUE(out.ordered);
  }
}

TEST(BrokerTimer, RejectsNonPositivePeriod) {
  TopicRegistry r;
  Broker b(r, workers(1));
  try {
    b.add_timer(0ns, [] {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_period);
  }
}

TEST(BrokerTimer, FiresAtFixedRate) {
  TopicRegistry r;
  Broker b(r, workers(2));
  b.start();
  auto id = b.add_timer(20ms, [] {});
  std::this_thread::sleep_for(210ms);
  auto state = b.timer(id);
  b.stop(StopMode::drain);
  ASSERT_TRUE(state);
  EXPECT_GE(state->ticks, 8u);
  EXPECT_LE(state->ticks, 11u);
}

TEST(BrokerTimer, OverrunsAreCountedAndDeadlinesSkipped) {
  TopicRegistry r;
  Broker b(r, workers(2));
  b.start();
  auto id = b.add_timer(10ms, [] { std::this_thread::sleep_for(25ms); });
  std::this_thread::sleep_for(150ms);
  b.stop(StopMode::drain);  // lets the running body finish
  auto state = b.timer(id);
  ASSERT_TRUE(state);
  EXPECT_GE(state->overruns, 1u);
  EXPECT_GE(state->skipped, 1u);
}

TEST(BrokerTimer, CancelStopsFiring) {
  TopicRegistry r;
  Broker b(r, workers(1));
  b.start();
  std::atomic<int> ticks{0};
  auto id = b.add_timer(5ms, [&] { ++ticks; });
  std::this_thread::sleep_for(30ms);
  EXPECT_TRUE(b.cancel_timer(id));
  b.wait_idle(1s);
  const int frozen = ticks.load();
  std::this_thread::sleep_for(30ms);
  EXPECT_EQ(ticks.load(), frozen);
  EXPECT_FALSE(b.cancel_timer(id));
  b.stop(StopMode::drain);
}
