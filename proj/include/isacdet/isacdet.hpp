// SPDX-License-Identifier: Apache-2.0
// ------------------------------------------------------------------------
// Umbrella header. The numeric core (everything but config/experiments)
// needs only Eigen; config and experiments also need yaml-cpp and
// nlohmann/json.

#pragma once

#include "common.hpp"
#include "rng.hpp"
#include "parallel.hpp"
#include "scene.hpp"
#include "channel.hpp"
#include "waveform.hpp"
#include "detector.hpp"
#include "optimizer.hpp"
#include "config.hpp"
#include "experiments.hpp"
