#pragma once

// Everything: geometry, demand model, plant, predictor, world, planner,
// missions, metrics and the benchmark harness.

#include "aeps/benchmark.hpp"
#include "aeps/common.hpp"
#include "aeps/csv.hpp"
#include "aeps/dataset.hpp"
#include "aeps/metrics.hpp"
#include "aeps/mission.hpp"
#include "aeps/mlp.hpp"
#include "aeps/planner.hpp"
#include "aeps/plant.hpp"
#include "aeps/powermodel.hpp"
#include "aeps/predictor.hpp"
#include "aeps/trajectory.hpp"
#include "aeps/world.hpp"
