#pragma once

#include <cstdint>

#include "fastcycle/clock.hpp"
#include "fastcycle/core/payload.hpp"
#include "fastcycle/core/topic_name.hpp"

namespace fastcycle {

/// One published message as seen by a subscriber.
struct MessageEnvelope {
  TopicName topic;
  std::uint64_t seq = 0;   // per-topic, assigned in registry acceptance order
  Nanos publish_ts = 0;    // clock reading taken by publish
  PayloadHandle payload;
};

}  // namespace fastcycle
