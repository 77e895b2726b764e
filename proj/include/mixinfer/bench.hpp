#pragma once

#include "mixinfer/bench/benchmark.hpp"
#include "mixinfer/bench/environment.hpp"
#include "mixinfer/bench/task.hpp"
