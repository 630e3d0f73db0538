#pragma once

#include "fastcycle/clock.hpp"
#include "fastcycle/error.hpp"

#include "fastcycle/core/envelope.hpp"
#include "fastcycle/core/payload.hpp"
#include "fastcycle/core/topic_name.hpp"
#include "fastcycle/core/topic_registry.hpp"

#include "fastcycle/broker/broker.hpp"
#include "fastcycle/broker/executor.hpp"

#include "fastcycle/component/manifest.hpp"
#include "fastcycle/component/param_store.hpp"
#include "fastcycle/component/runtime.hpp"

#include "fastcycle/logging/log_record.hpp"
#include "fastcycle/logging/logger.hpp"

#include "fastcycle/bench/demo.hpp"
#include "fastcycle/bench/scenarios.hpp"
#include "fastcycle/bench/stats.hpp"
