#pragma once

#include <atomic>
#include <chrono>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fastcycle/broker/broker.hpp"
#include "fastcycle/component/manifest.hpp"
#include "fastcycle/component/param_store.hpp"
#include "fastcycle/core/topic_registry.hpp"
#include "fastcycle/error.hpp"

namespace fastcycle {

enum class ComponentState { created, initialized, running, stopped, failed };

constexpr std::string_view to_string(ComponentState s) noexcept {
  switch (s) {
    case ComponentState::created: return "created";
    case ComponentState::initialized: return "initialized";
    case ComponentState::running: return "running";
    case ComponentState::stopped: return "stopped";
    case ComponentState::failed: return "failed";
  }
  return "unknown";
}

class ComponentContext;

/// Base class for everything the runtime hosts. init() declares publishers
/// and subscriptions through the context; serve() is the periodic body;
/// shutdown() runs once when the runtime stops.
class Component {
 public:
  virtual ~Component() = default;
  virtual void init(const ParamStore& params, ComponentContext& ctx) = 0;
  virtual void serve() {}
  virtual void shutdown() {}
};

using ComponentFactory = std::function<std::unique_ptr<Component>()>;

/// In-process replacement for loading components by name from shared libraries.
class ComponentFactories {
 public:
  void add(std::string name, ComponentFactory factory) {
    factories_[std::move(name)] = std::move(factory);
  }

  template <class T>
  void add(std::string name) {
    add(std::move(name), [] { return std::make_unique<T>(); });
  }

  const ComponentFactory* find(std::string_view name) const {
    auto it = factories_.find(std::string(name));
    return it == factories_.end() ? nullptr : &it->second;
  }

 private:
  std::map<std::string, ComponentFactory> factories_;
};

class Publisher {
 public:
  Publisher(TopicRegistry& registry, TopicName topic) : registry_(&registry), topic_(std::move(topic)) {}

  PublishReceipt publish(PayloadHandle payload) const {
    return registry_->publish(topic_, std::move(payload));
  }
  const TopicName& topic() const noexcept { return topic_; }

 private:
  TopicRegistry* registry_;
  TopicName topic_;
};

namespace detail {

struct ComponentSlot {
  explicit ComponentSlot(ComponentDescriptor d) : descriptor(std::move(d)) {}

  const ComponentDescriptor descriptor;
  std::unique_ptr<Component> component;
  std::shared_ptr<SerialGroup> group = std::make_shared<SerialGroup>();
  std::atomic<ComponentState> state{ComponentState::created};
  std::atomic<bool> shut_down{false};
  bool initialized = false;

  mutable std::mutex mu;
  std::vector<TopicName> publishers;
  std::vector<SubscriberId> subscriptions;
  std::optional<TimerId> timer;
  std::string failure;
};

}  // namespace detail

/// Cheap shared view of a registered component.
class ComponentHandle {
 public:
  explicit ComponentHandle(std::shared_ptr<detail::ComponentSlot> slot) : slot_(std::move(slot)) {}

  const std::string& name() const noexcept { return slot_->descriptor.name; }
  const ComponentDescriptor& descriptor() const noexcept { return slot_->descriptor; }
  ComponentState state() const noexcept { return slot_->state.load(); }

  std::vector<TopicName> publishers() const {
    std::lock_guard lk(slot_->mu);
    return slot_->publishers;
  }
  std::vector<SubscriberId> subscriptions() const {
    std::lock_guard lk(slot_->mu);
    return slot_->subscriptions;
  }
  std::optional<TimerId> serve_timer() const {
    std::lock_guard lk(slot_->mu);
    return slot_->timer;
  }
  std::string failure() const {
    std::lock_guard lk(slot_->mu);
    return slot_->failure;
  }

  /// The hosted instance, for tests and harnesses that need to inspect it.
  Component* component() const noexcept { return slot_->component.get(); }

 private:
  friend class Runtime;
  std::shared_ptr<detail::ComponentSlot> slot_;
};

struct ServeTimer {
  TimerId id = 0;
  std::chrono::nanoseconds period{0};
};

class Runtime;

/// API surface handed to Component::init.
class ComponentContext {
 public:
  Publisher advertise(std::string_view topic);
  SubscriberId subscribe(std::string_view topic, Callback callback, QueueLimit limit = {});

  const std::string& name() const noexcept { return slot_->descriptor.name; }
  const Clock& clock() const noexcept;
  TopicRegistry& registry() noexcept;

 private:
  friend class Runtime;
  ComponentContext(Runtime& runtime, std::shared_ptr<detail::ComponentSlot> slot)
      : runtime_(runtime), slot_(std::move(slot)) {}

  Runtime& runtime_;
  std::shared_ptr<detail::ComponentSlot> slot_;
};

struct RuntimeConfig {
  BrokerConfig broker{};
  std::shared_ptr<const Clock> clock = steady_clock();
  /// Optional executor override (ManualExecutor for stepped tests).
  std::shared_ptr<Executor> executor;
};

/// Owns a registry, a broker, and the component set built from a manifest.
///
/// Failure isolation: a component whose init, callback, or serve throws is
/// moved to `failed`; its subscriptions and serve timer are removed and the
/// rest of the system keeps running.
class Runtime {
 public:
  explicit Runtime(RuntimeConfig config = {})
      : registry_(config.clock), broker_(registry_, config.broker, config.executor) {}

  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  ~Runtime() {
    if (started_ && !stopped_) {
      try {
        stop(StopMode::immediate);
      } catch (...) {
      }
    }
  }

  TopicRegistry& registry() noexcept { return registry_; }
  Broker& broker() noexcept { return broker_; }
  ComponentFactories& factories() noexcept { return factories_; }
  bool running() const noexcept { return started_ && !stopped_; }

  /// Runs `factory`, calls init with the descriptor's parameters and returns
  /// the handle. An init failure yields a handle in state `failed` (see
  /// failure()) rather than an exception.
  ComponentHandle register_component(const ComponentDescriptor& descriptor,
                                     const ComponentFactory& factory) {
    {
      std::lock_guard lk(mu_);
      for (auto& s : slots_) {
        if (s->descriptor.name == descriptor.name) {
          throw Error(ErrorCode::duplicate_component_name,
                      "component '" + descriptor.name + "' is already registered");
        }
      }
    }
    auto slot = std::make_shared<detail::ComponentSlot>(descriptor);
    {
      std::lock_guard lk(mu_);
      slots_.push_back(slot);
    }

    // Holding the group keeps every callback and serve call of this component
    // parked until init has returned.
    slot->group->try_acquire();
    try {
      slot->component = factory();
      if (!slot->component) throw Error(ErrorCode::init_failed, "factory returned no component");
      ComponentContext ctx(*this, slot);
      slot->component->init(slot->descriptor.params, ctx);
      slot->initialized = true;
      slot->state = running() ? ComponentState::running : ComponentState::initialized;
    } catch (const std::exception& e) {
      fail(*slot, std::string("init failed: ") + e.what());
    } catch (...) {
      fail(*slot, "init failed");
    }
    slot->group->release();
    if (running()) broker_.dispatch_pending();
    return ComponentHandle(slot);
  }

  /// Looks the factory up by component name. Throws UnknownComponent.
  ComponentHandle register_component(const ComponentDescriptor& descriptor) {
    const ComponentFactory* factory = factories_.find(descriptor.name);
    if (!factory) {
      throw Error(ErrorCode::unknown_component, "no factory registered for '" + descriptor.name + "'");
    }
    return register_component(descriptor, *factory);
  }

  /// Registers every active component of the manifest, in order.
  std::vector<ComponentHandle> load(const Manifest& manifest) {
    std::vector<ComponentHandle> handles;
    for (const auto& desc : manifest.active) handles.push_back(register_component(desc));
    return handles;
  }

  /// Starts dispatch and the serve timers declared through serve_period_ms.
  void start() {
    if (started_) throw Error(ErrorCode::already_started, "runtime already started");
    for (auto& slot : snapshot()) {
      auto expected = ComponentState::initialized;
      slot->state.compare_exchange_strong(expected, ComponentState::running);
    }
    broker_.start();
    started_ = true;
    for (auto& slot : snapshot()) {
      if (slot->state == ComponentState::running) {
        if (auto period = slot->descriptor.serve_period()) schedule_serve(ComponentHandle(slot), *period);
      }
    }
  }

  /// Fixed-rate serve() calls on a worker, serialized with the component's
  /// callbacks. Replaces any previous timer of the component.
  ServeTimer schedule_serve(const ComponentHandle& handle, std::chrono::nanoseconds period) {
    if (period.count() <= 0) throw Error(ErrorCode::invalid_period, "serve period must be > 0");
    auto slot = handle.slot_;
    if (slot->state != ComponentState::running) {
      throw Error(ErrorCode::invalid_state, "component '" + slot->descriptor.name + "' is " +
                                                std::string(to_string(slot->state.load())));
    }
    auto body = [this, slot] {
      if (slot->state != ComponentState::running) return;
      try {
        slot->component->serve();
      } catch (const std::exception& e) {
        quarantine(*slot, std::string("serve failed: ") + e.what());
        throw;
      } catch (...) {
        quarantine(*slot, "serve failed");
        throw;
      }
    };
    const TimerId id = broker_.add_timer(period, std::move(body), slot->group);
    std::optional<TimerId> previous;
    {
      std::lock_guard lk(slot->mu);
      previous = std::exchange(slot->timer, id);
    }
    if (previous) broker_.cancel_timer(*previous);
    return {id, period};
  }

  std::optional<TimerState> serve_timer_state(const ComponentHandle& handle) const {
    auto id = handle.serve_timer();
    return id ? broker_.timer(*id) : std::nullopt;
  }

  /// Stops the broker, then calls shutdown() once on every component that
  /// completed init.
  BrokerStats stop(StopMode mode = StopMode::drain) {
    if (!started_ || stopped_) throw Error(ErrorCode::not_running, "runtime is not running");
    stopped_ = true;
    std::exception_ptr pending;
    BrokerStats stats;
    try {
      stats = broker_.stop(mode);
    } catch (...) {
      pending = std::current_exception();
    }
    for (auto& slot : snapshot()) {
      if (!slot->initialized || slot->shut_down.exchange(true)) continue;
      try {
        slot->component->shutdown();
        auto s = slot->state.load();
        if (s == ComponentState::running || s == ComponentState::initialized) {
          slot->state = ComponentState::stopped;
        }
      } catch (const std::exception& e) {
        fail(*slot, std::string("shutdown failed: ") + e.what());
      }
    }
    if (pending) std::rethrow_exception(pending);
    return stats;
  }

  std::vector<ComponentHandle> components() const {
    std::vector<ComponentHandle> out;
    for (auto& s : snapshot()) out.emplace_back(s);
    return out;
  }

  std::optional<ComponentHandle> find(std::string_view name) const {
    for (auto& s : snapshot()) {
      if (s->descriptor.name == name) return ComponentHandle(s);
    }
    return std::nullopt;
  }

  std::size_t count(ComponentState state) const {
    std::size_t n = 0;
    for (auto& s : snapshot()) n += s->state == state;
    return n;
  }

 private:
  friend class ComponentContext;

  std::vector<std::shared_ptr<detail::ComponentSlot>> snapshot() const {
    std::lock_guard lk(mu_);
    return slots_;
  }

  void fail(detail::ComponentSlot& slot, std::string reason) {
    std::vector<SubscriberId> subs;
    std::optional<TimerId> timer;
    {
      std::lock_guard lk(slot.mu);
      if (slot.failure.empty()) slot.failure = std::move(reason);
      subs = std::exchange(slot.subscriptions, {});
      timer = slot.timer;
    }
    slot.state = ComponentState::failed;
    for (auto id : subs) registry_.unsubscribe(id);
    if (timer) broker_.cancel_timer(*timer);
  }

  void quarantine(detail::ComponentSlot& slot, std::string reason) { fail(slot, std::move(reason)); }

  Callback guard(const std::shared_ptr<detail::ComponentSlot>& slot, Callback callback) {
    return [this, slot, cb = std::move(callback)](const MessageEnvelope& env) {
      if (slot->state != ComponentState::running) return;
      try {
        cb(env);
      } catch (const std::exception& e) {
        quarantine(*slot, std::string("callback failed: ") + e.what());
        throw;
      } catch (...) {
        quarantine(*slot, "callback failed");
        throw;
      }
    };
  }

  mutable std::mutex mu_;
  std::vector<std::shared_ptr<detail::ComponentSlot>> slots_;
  ComponentFactories factories_;
  TopicRegistry registry_;
  Broker broker_;
  std::atomic<bool> started_{false};
  std::atomic<bool> stopped_{false};
};

inline Publisher ComponentContext::advertise(std::string_view topic) {
  TopicName name(topic);
  runtime_.registry_.create_topic(name);
  {
    std::lock_guard lk(slot_->mu);
    slot_->publishers.push_back(name);
  }
  return Publisher(runtime_.registry_, std::move(name));
}

inline SubscriberId ComponentContext::subscribe(std::string_view topic, Callback callback,
                                                QueueLimit limit) {
  SubscribeOptions options{limit, slot_->group};
  const SubscriberId id =
      runtime_.registry_.subscribe(TopicName(topic), runtime_.guard(slot_, std::move(callback)), options);
  std::lock_guard lk(slot_->mu);
  slot_->subscriptions.push_back(id);
  return id;
}

inline const Clock& ComponentContext::clock() const noexcept { return runtime_.registry_.clock(); }
inline TopicRegistry& ComponentContext::registry() noexcept { return runtime_.registry_; }

}  // namespace fastcycle
