#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fastcycle/clock.hpp"
#include "fastcycle/core/envelope.hpp"
#include "fastcycle/core/payload.hpp"
#include "fastcycle/core/topic_name.hpp"
#include "fastcycle/error.hpp"

namespace fastcycle {

using SubscriberId = std::uint64_t;
using Callback = std::function<void(const MessageEnvelope&)>;

/// What a bounded subscriber queue does when a publish finds it full.
enum class DropPolicy {
  block,        // publisher waits for space
  drop_oldest,  // evict the queue head, append the new envelope
  reject_new,   // leave the queue alone; the subscriber misses this message
};

struct QueueLimit {
  std::optional<std::size_t> capacity;  // nullopt: unbounded
  DropPolicy policy = DropPolicy::block;

  static QueueLimit unbounded() { return {}; }
  static QueueLimit bounded(std::size_t capacity, DropPolicy policy) {
    return {capacity, policy};
  }
};

/// Execution lane. At most one task holding a given group runs at a time;
/// the dispatcher acquires it before submitting and the task releases it.
class SerialGroup {
 public:
  bool try_acquire() noexcept {
    bool expected = false;
    return busy_.compare_exchange_strong(expected, true, std::memory_order_acq_rel);
  }
  void release() noexcept { busy_.store(false, std::memory_order_release); }
  bool busy() const noexcept { return busy_.load(std::memory_order_acquire); }

 private:
  std::atomic<bool> busy_{false};
};

struct SubscribeOptions {
  QueueLimit limit{};
  /// Subscriptions sharing a group never run callbacks concurrently.
  /// Null gives the subscription a group of its own.
  std::shared_ptr<SerialGroup> group;
};

struct PublishReceipt {
  bool accepted = false;  // false only after the registry has been closed
  std::uint64_t seq = 0;
  Nanos publish_ts = 0;
  std::size_t delivered_to = 0;
  std::vector<SubscriberId> rejected;  // QueueFull under reject_new
  std::size_t evicted = 0;             // heads dropped under drop_oldest
};

struct TopicInfo {
  TopicName name;
  std::uint64_t next_seq = 0;
  std::size_t subscriber_count = 0;
};

struct SubscriptionInfo {
  SubscriberId id = 0;
  TopicName topic;
  QueueLimit limit;
  std::size_t queued = 0;
  std::uint64_t evicted = 0;
  std::uint64_t rejected = 0;
};

/// Monotone totals since construction.
struct RegistryCounters {
  std::uint64_t published = 0;  // accepted publish calls
  std::uint64_t offered = 0;    // sum over publishes of subscriber count at publish time
  std::uint64_t enqueued = 0;   // offered minus rejected
  std::uint64_t evicted = 0;
  std::uint64_t rejected = 0;
  std::uint64_t discarded = 0;  // queued envelopes thrown away by unsubscribe or discard_all
};

/// A queue head popped for dispatch. The holder owns `group` and must
/// release it, then call TopicRegistry::task_finished(), once the callback
/// has run.
struct ReadyTask {
  SubscriberId id = 0;
  std::shared_ptr<const Callback> callback;
  std::shared_ptr<SerialGroup> group;
  MessageEnvelope envelope;
};

/// Implemented by whoever must react to new envelopes (the broker's scan loop).
class PublishListener {
 public:
  virtual ~PublishListener() = default;
  virtual void on_publish() noexcept = 0;
};

/// Topic name -> {next sequence number, subscriber queues}.
///
/// Lookup goes through a shared_mutex-guarded hash map; everything touching
/// one topic's sequence counter or queues happens under that topic's own
/// mutex, so publishers on different topics do not contend.
class TopicRegistry {
  struct Subscription {
    SubscriberId id;
    TopicName topic;
    std::shared_ptr<const Callback> callback;
    std::shared_ptr<SerialGroup> group;
    QueueLimit limit;
    std::deque<MessageEnvelope> queue;
    std::uint64_t evicted = 0;
    std::uint64_t rejected = 0;

    bool full() const noexcept { return limit.capacity && queue.size() >= *limit.capacity; }
  };

  struct TopicRecord {
    explicit TopicRecord(TopicName n) : name(std::move(n)) {}

    const TopicName name;
    mutable std::mutex mu;
    std::condition_variable space;
    std::uint64_t next_seq = 0;
    std::vector<std::unique_ptr<Subscription>> subscribers;

    bool blocking_full() const noexcept {
      return std::any_of(subscribers.begin(), subscribers.end(), [](const auto& s) {
        return s->limit.policy == DropPolicy::block && s->full();
      });
    }
  };

  struct Wildcard {
    std::shared_ptr<const Callback> callback;
    SubscribeOptions options;
    std::vector<SubscriberId> ids;
  };

 public:
  using WildcardId = std::uint64_t;

  explicit TopicRegistry(std::shared_ptr<const Clock> clock = steady_clock())
      : clock_(std::move(clock)) {}

  TopicRegistry(const TopicRegistry&) = delete;
  TopicRegistry& operator=(const TopicRegistry&) = delete;

  const Clock& clock() const noexcept { return *clock_; }
  std::shared_ptr<const Clock> clock_handle() const noexcept { return clock_; }

  /// Idempotent: an existing topic is returned unchanged.
  TopicInfo create_topic(const TopicName& name) {
    auto rec = find_or_create(name);
    std::lock_guard lk(rec->mu);
    return {rec->name, rec->next_seq, rec->subscribers.size()};
  }

  /// Auto-creates the topic. Throws InvalidCapacity for a zero capacity.
  SubscriberId subscribe(const TopicName& topic, Callback callback, SubscribeOptions options = {}) {
    validate(options.limit);
    auto shared = std::make_shared<const Callback>(std::move(callback));
    std::unique_lock lk(mu_);
    auto rec = find_or_create_locked(topic);
    return attach_locked(*rec, shared, options);
  }

  /// Subscribes `callback` to every current topic and to every topic created
  /// afterwards. All generated subscriptions share one serial group.
  WildcardId subscribe_all(Callback callback, SubscribeOptions options = {}) {
    validate(options.limit);
    if (!options.group) options.group = std::make_shared<SerialGroup>();
    std::unique_lock lk(mu_);
    const WildcardId wid = next_wildcard_id_++;
    Wildcard wc{std::make_shared<const Callback>(std::move(callback)), options, {}};
    for (auto& rec : topic_list_) wc.ids.push_back(attach_locked(*rec, wc.callback, options));
    wildcards_.emplace(wid, std::move(wc));
    return wid;
  }

  /// Subscription ids generated so far for a wildcard subscription.
  std::vector<SubscriberId> wildcard_members(WildcardId wid) const {
    std::shared_lock lk(mu_);
    auto it = wildcards_.find(wid);
    return it == wildcards_.end() ? std::vector<SubscriberId>{} : it->second.ids;
  }

  bool unsubscribe_all(WildcardId wid) {
    std::unique_lock lk(mu_);
    auto it = wildcards_.find(wid);
    if (it == wildcards_.end()) return false;
    auto ids = std::move(it->second.ids);
    wildcards_.erase(it);
    for (auto id : ids) detach_locked(id);
    return true;
  }

  /// Removes the subscription and discards its undispatched envelopes.
  bool unsubscribe(SubscriberId id) {
    std::unique_lock lk(mu_);
    for (auto& [wid, wc] : wildcards_) std::erase(wc.ids, id);
    return detach_locked(id);
  }

  PublishReceipt publish(const TopicName& topic, PayloadHandle payload) {
    return publish_impl(topic, std::move(payload), std::nullopt);
  }

  /// Same as above with a caller-supplied publish timestamp.
  PublishReceipt publish(const TopicName& topic, PayloadHandle payload, Nanos now) {
    return publish_impl(topic, std::move(payload), now);
  }

  std::optional<TopicInfo> topic_info(const TopicName& name) const {
    std::shared_ptr<TopicRecord> rec;
    {
      std::shared_lock lk(mu_);
      auto it = topics_.find(name.str());
      if (it == topics_.end()) return std::nullopt;
      rec = it->second;
    }
    std::lock_guard lk(rec->mu);
    return TopicInfo{rec->name, rec->next_seq, rec->subscribers.size()};
  }

  std::vector<TopicInfo> topics() const {
    std::vector<TopicInfo> out;
    for (auto& rec : snapshot()) {
      std::lock_guard lk(rec->mu);
      out.push_back({rec->name, rec->next_seq, rec->subscribers.size()});
    }
    return out;
  }

  std::size_t topic_count() const {
    std::shared_lock lk(mu_);
    return topic_list_.size();
  }

  std::optional<SubscriptionInfo> subscription(SubscriberId id) const {
    std::shared_ptr<TopicRecord> rec;
    {
      std::shared_lock lk(mu_);
      auto it = by_id_.find(id);
      if (it == by_id_.end()) return std::nullopt;
      rec = it->second;
    }
    std::lock_guard lk(rec->mu);
    for (auto& sub : rec->subscribers) {
      if (sub->id == id) {
        return SubscriptionInfo{sub->id, sub->topic, sub->limit, sub->queue.size(), sub->evicted,
                                sub->rejected};
      }
    }
    return std::nullopt;
  }

  /// Pops the head of every non-empty queue whose serial group is free,
  /// acquiring that group for the returned task.
  std::vector<ReadyTask> take_ready() {
    std::vector<ReadyTask> ready;
    for (auto& rec : snapshot()) {
      bool popped = false;
      {
        std::lock_guard lk(rec->mu);
        for (auto& sub : rec->subscribers) {
          if (sub->queue.empty() || !sub->group->try_acquire()) continue;
          ready.push_back({sub->id, sub->callback, sub->group, std::move(sub->queue.front())});
          sub->queue.pop_front();
          popped = true;
        }
      }
      if (popped) rec->space.notify_all();
    }
    return ready;
  }

  /// Balances one ReadyTask handed out by take_ready().
  void task_finished() noexcept { outstanding_.fetch_sub(1, std::memory_order_acq_rel); }

  /// Envelopes still sitting in queues.
  std::size_t pending() const {
    std::size_t n = 0;
    for (auto& rec : snapshot()) {
      std::lock_guard lk(rec->mu);
      for (auto& sub : rec->subscribers) n += sub->queue.size();
    }
    return n;
  }

  /// Queued plus handed-out-but-unfinished envelopes.
  std::uint64_t outstanding() const noexcept {
    return outstanding_.load(std::memory_order_acquire);
  }

  /// Drops every queued envelope; returns how many.
  std::size_t discard_all() {
    std::size_t n = 0;
    for (auto& rec : snapshot()) {
      {
        std::lock_guard lk(rec->mu);
        for (auto& sub : rec->subscribers) {
          n += sub->queue.size();
          sub->queue.clear();
        }
      }
      rec->space.notify_all();
    }
    discarded_.fetch_add(n, std::memory_order_relaxed);
    outstanding_.fetch_sub(n, std::memory_order_acq_rel);
    return n;
  }

  /// After close(), publish returns accepted=false and blocked publishers wake up.
  void close() {
    closed_.store(true, std::memory_order_release);
    for (auto& rec : snapshot()) {
      { std::lock_guard lk(rec->mu); }
      rec->space.notify_all();
    }
  }
  void reopen() noexcept { closed_.store(false, std::memory_order_release); }
  bool closed() const noexcept { return closed_.load(std::memory_order_acquire); }

  void set_listener(PublishListener* listener) noexcept {
    listener_.store(listener, std::memory_order_release);
  }

  RegistryCounters counters() const noexcept {
    return {published_.load(), offered_.load(), enqueued_.load(),
            evicted_.load(),   rejected_.load(), discarded_.load()};
  }

 private:
  static void validate(const QueueLimit& limit) {
    if (limit.capacity && *limit.capacity == 0) {
      throw Error(ErrorCode::invalid_capacity, "queue capacity must be positive");
    }
  }

  std::vector<std::shared_ptr<TopicRecord>> snapshot() const {
    std::shared_lock lk(mu_);
    return topic_list_;
  }

  std::shared_ptr<TopicRecord> find_or_create(const TopicName& name) {
    {
      std::shared_lock lk(mu_);
      auto it = topics_.find(name.str());
      if (it != topics_.end()) return it->second;
    }
    std::unique_lock lk(mu_);
    return find_or_create_locked(name);
  }

  std::shared_ptr<TopicRecord> find_or_create_locked(const TopicName& name) {
    auto it = topics_.find(name.str());
    if (it != topics_.end()) return it->second;
    auto rec = std::make_shared<TopicRecord>(name);
    topics_.emplace(name.str(), rec);
    topic_list_.push_back(rec);
    for (auto& [wid, wc] : wildcards_) wc.ids.push_back(attach_locked(*rec, wc.callback, wc.options));
    return rec;
  }

  SubscriberId attach_locked(TopicRecord& rec, const std::shared_ptr<const Callback>& callback,
                             const SubscribeOptions& options) {
    auto sub = std::make_unique<Subscription>(Subscription{
        next_subscriber_id_++, rec.name, callback,
        options.group ? options.group : std::make_shared<SerialGroup>(), options.limit, {}, 0, 0});
    const SubscriberId id = sub->id;
    {
      std::lock_guard tlk(rec.mu);
      rec.subscribers.push_back(std::move(sub));
    }
    by_id_.emplace(id, topics_.at(rec.name.str()));
    return id;
  }

  bool detach_locked(SubscriberId id) {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) return false;
    auto rec = it->second;
    by_id_.erase(it);
    std::size_t dropped = 0;
    {
      std::lock_guard tlk(rec->mu);
      auto& subs = rec->subscribers;
      auto pos = std::find_if(subs.begin(), subs.end(), [&](const auto& s) { return s->id == id; });
      if (pos != subs.end()) {
        dropped = (*pos)->queue.size();
        subs.erase(pos);
      }
    }
    rec->space.notify_all();
    discarded_.fetch_add(dropped, std::memory_order_relaxed);
    outstanding_.fetch_sub(dropped, std::memory_order_acq_rel);
    return true;
  }

  PublishReceipt publish_impl(const TopicName& topic, PayloadHandle payload,
                              std::optional<Nanos> now) {
    PublishReceipt receipt;
    if (closed()) return receipt;
    auto rec = find_or_create(topic);
    {
      std::unique_lock lk(rec->mu);
      // Under block policy every blocking queue must have room before the
      // sequence number is taken, so concurrent blocked publishers cannot
      // reorder envelopes.
      rec->space.wait(lk, [&] { return closed() || !rec->blocking_full(); });
      if (closed()) return receipt;

      receipt.accepted = true;
      receipt.seq = rec->next_seq++;
      receipt.publish_ts = now ? *now : clock_->now();
      published_.fetch_add(1, std::memory_order_relaxed);

      for (auto& sub : rec->subscribers) {
        offered_.fetch_add(1, std::memory_order_relaxed);
        if (sub->full()) {
          if (sub->limit.policy == DropPolicy::reject_new) {
            ++sub->rejected;
            rejected_.fetch_add(1, std::memory_order_relaxed);
            receipt.rejected.push_back(sub->id);
            continue;
          }
          sub->queue.pop_front();
          ++sub->evicted;
          ++receipt.evicted;
          evicted_.fetch_add(1, std::memory_order_relaxed);
          outstanding_.fetch_sub(1, std::memory_order_acq_rel);
        }
        sub->queue.push_back(MessageEnvelope{rec->name, receipt.seq, receipt.publish_ts, payload});
        enqueued_.fetch_add(1, std::memory_order_relaxed);
        outstanding_.fetch_add(1, std::memory_order_acq_rel);
        ++receipt.delivered_to;
      }
    }
    if (receipt.delivered_to > 0) {
      if (auto* l = listener_.load(std::memory_order_acquire)) l->on_publish();
    }
    return receipt;
  }

  std::shared_ptr<const Clock> clock_;

  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, std::shared_ptr<TopicRecord>> topics_;
  std::vector<std::shared_ptr<TopicRecord>> topic_list_;
  std::unordered_map<SubscriberId, std::shared_ptr<TopicRecord>> by_id_;
  std::unordered_map<WildcardId, Wildcard> wildcards_;
  SubscriberId next_subscriber_id_ = 1;
  WildcardId next_wildcard_id_ = 1;

  std::atomic<bool> closed_{false};
  std::atomic<PublishListener*> listener_{nullptr};

  std::atomic<std::uint64_t> published_{0};
  std::atomic<std::uint64_t> offered_{0};
  std::atomic<std::uint64_t> enqueued_{0};
  std::atomic<std::uint64_t> evicted_{0};
  std::atomic<std::uint64_t> rejected_{0};
  std::atomic<std::uint64_t> discarded_{0};
  std::atomic<std::uint64_t> outstanding_{0};
};

}  // namespace fastcycle
