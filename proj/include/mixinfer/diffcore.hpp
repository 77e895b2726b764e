#pragma once

#include "mixinfer/diffcore/adam.hpp"
#include "mixinfer/diffcore/checkpoint.hpp"
#include "mixinfer/diffcore/evaluate.hpp"
#include "mixinfer/diffcore/layers.hpp"
#include "mixinfer/diffcore/parameters.hpp"
#include "mixinfer/diffcore/tape.hpp"
