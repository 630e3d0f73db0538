#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "fastcycle/bench/scenarios.hpp"
#include "fastcycle/component/manifest.hpp"
#include "fastcycle/component/runtime.hpp"

namespace fastcycle::bench {

/// driver -> perception -> planning -> control, each forwarding to the next topic.
inline constexpr std::string_view kDefaultDemoManifest = R"({
  "components": [
    {"name": "driver",     "params": {"input": "demo/source",     "output": "demo/driver",     "delay_ms": 0}},
    {"name": "perception", "params": {"input": "demo/driver",     "output": "demo/perception", "delay_ms": 0}},
    {"name": "planning",   "params": {"input": "demo/perception", "output": "demo/planning",   "delay_ms": 0}},
    {"name": "control",    "params": {"input": "demo/planning",                                "delay_ms": 0}}
  ]
})";

struct HopRecord {
  std::string stage;
  Nanos received = 0;
  Nanos emitted = 0;
};

struct MessageTrace {
  std::uint64_t message = 0;
  std::vector<HopRecord> hops;       // in pipeline order
  std::vector<std::string> missing;  // stages the message never reached

  bool complete() const noexcept { return missing.empty(); }

  /// First reception to last emission.
  Nanos end_to_end() const noexcept {
    return hops.empty() ? 0 : hops.back().emitted - hops.front().received;
  }
};

struct DemoTrace {
  std::vector<std::string> stages;  // manifest order, disabled ones included
  std::vector<MessageTrace> messages;

  std::size_t completed() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(messages.begin(), messages.end(), [](const auto& m) { return m.complete(); }));
  }
};

struct DemoConfig {
  std::size_t messages = 1;
  std::chrono::nanoseconds interval = std::chrono::milliseconds(1);
  std::size_t payload_size = 1024;
  std::uint64_t seed = 1;
  std::chrono::nanoseconds timeout = std::chrono::seconds(5);
};

class HopCollector {
 public:
  void record(std::uint64_t message, HopRecord hop) {
    std::lock_guard lk(mu_);
    hops_[message].push_back(std::move(hop));
  }

  std::vector<HopRecord> hops(std::uint64_t message) const {
    std::lock_guard lk(mu_);
    auto it = hops_.find(message);
    return it == hops_.end() ? std::vector<HopRecord>{} : it->second;
  }

 private:
  mutable std::mutex mu_;
  std::map<std::uint64_t, std::vector<HopRecord>> hops_;
};

/// Stand-in for a processing module. Params: input (topic), output (topic,
/// optional), delay_ms (synthetic processing time, default 0).
class StubStage final : public Component {
 public:
  explicit StubStage(std::shared_ptr<HopCollector> collector) : collector_(std::move(collector)) {}

  void init(const ParamStore& params, ComponentContext& ctx) override {
    name_ = ctx.name();
    clock_ = &ctx.clock();
    delay_ = std::chrono::nanoseconds(
        static_cast<std::int64_t>(params.get<double>("delay_ms", 0.0) * 1e6));
    const auto output = params.get<std::string>("output", "");
    if (!output.empty()) out_.emplace(ctx.advertise(output));
    ctx.subscribe(params.get<std::string>("input"), [this](const MessageEnvelope& env) { on_message(env); });
  }

 private:
  void on_message(const MessageEnvelope& env) {
    const Nanos received = clock_->now();
    if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
    const Nanos emitted = clock_->now();
    collector_->record(PayloadGenerator::index_of(*env.payload, env.seq), {name_, received, emitted});
    if (out_) out_->publish(env.payload);
  }

  std::shared_ptr<HopCollector> collector_;
  std::string name_;
  const Clock* clock_ = nullptr;
  std::chrono::nanoseconds delay_{0};
  std::optional<Publisher> out_;
};

/// Runs `config.messages` messages through a chain of stub stages declared
/// by `manifest` and reports where each one got to. Starts the runtime if
/// needed and waits until the pipeline is quiet or the timeout passes.
inline DemoTrace demo_pipeline(Runtime& runtime, const Manifest& manifest, const DemoConfig& config) {
  if (manifest.names.empty()) throw Error(ErrorCode::invalid_config, "demo manifest has no stages");
  auto collector = std::make_shared<HopCollector>();
  for (const auto& name : manifest.names) {
    runtime.factories().add(name, [collector] { return std::make_unique<StubStage>(collector); });
  }
  for (const auto& handle : runtime.load(manifest)) {
    if (handle.state() == ComponentState::failed) {
      throw Error(ErrorCode::init_failed, "stage '" + handle.name() + "': " + handle.failure());
    }
  }

  const ComponentDescriptor* first = nullptr;
  for (const auto* list : {&manifest.active, &manifest.disabled}) {
    for (const auto& d : *list) {
      if (d.name == manifest.names.front()) first = &d;
    }
  }
  const TopicName source(first->params.get<std::string>("input"));

  if (!runtime.running()) runtime.start();
  PayloadGenerator generator(config.seed);
  const auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t k = 0; k < config.messages; ++k) {
    std::this_thread::sleep_until(t0 + k * config.interval);
    runtime.registry().publish(source, generator.make(k, std::max<std::size_t>(config.payload_size, 8)));
  }
  runtime.broker().wait_idle(config.timeout);

  DemoTrace trace;
  trace.stages = manifest.names;
  for (std::uint64_t k = 0; k < config.messages; ++k) {
    MessageTrace m;
    m.message = k;
    const auto hops = collector->hops(k);
    for (const auto& stage : trace.stages) {
      auto it = std::find_if(hops.begin(), hops.end(), [&](const auto& h) { return h.stage == stage; });
      if (it == hops.end()) {
        m.missing.push_back(stage);
      } else {
        m.hops.push_back(*it);
      }
    }
    trace.messages.push_back(std::move(m));
  }
  return trace;
}

}  // namespace fastcycle::bench
