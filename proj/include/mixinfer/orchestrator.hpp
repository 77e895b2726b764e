#pragma once

#include "mixinfer/orchestrator/agent.hpp"
#include "mixinfer/orchestrator/allocator.hpp"
#include "mixinfer/orchestrator/analysis.hpp"
#include "mixinfer/orchestrator/config.hpp"
#include "mixinfer/orchestrator/plot.hpp"
#include "mixinfer/orchestrator/rollout.hpp"
#include "mixinfer/orchestrator/trainer.hpp"
