#pragma once

// Labelled planning results for the power predictor: plan a random mission at
// a random aggressiveness, take the planned trajectory's features as input and
// its mean demand as the label.

#include "aeps/planner.hpp"
#include "aeps/powermodel.hpp"
#include "aeps/predictor.hpp"
#include "aeps/world.hpp"

#include <functional>
#include <random>

namespace aeps {

using ScenarioSampler = std::function<ScenarioConfig(std::uint64_t seed, std::size_t index)>;

/// Random low/high complexity layouts, alternating.
inline ScenarioConfig default_sampler(std::uint64_t seed, std::size_t index) {
  const auto c = index % 2 == 0 ? Complexity::low_dynamic : Complexity::high_dynamic;
  return make_random_scenario(c, seed);
}

/// Start and goal only, no obstacles: every plan is a straight line.
inline ScenarioConfig straight_line_sampler(std::uint64_t seed, std::size_t index) {
  auto cfg = make_random_scenario(Complexity::low_dynamic, seed);
  cfg.random_layout = false;
  cfg.obstacles.clear();
  (void)index;
  return cfg;
}

struct DatasetOptions {
  std::size_t count = 1100;
  std::uint64_t seed = 0;
  ScenarioSampler sampler = default_sampler;
  BaselineParams baseline;
  DemandParams demand = DemandParams::scaled();
  Envelope envelope;
  double dt = 0.1;
};

struct DatasetStats {
  std::size_t attempted = 0;
  std::size_t failed = 0;
};

inline LabeledDataset generate_dataset(const DatasetOptions& opt, DatasetStats* stats = nullptr) {
  if (opt.count == 0) throw DomainError("dataset count must be positive");
  opt.baseline.validate();
  opt.demand.validate();
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  LabeledDataset ds;
  DatasetStats st;
  // At most twice as many attempts as rows; fail if fewer than half succeed.
  const std::size_t max_attempts = 2 * opt.count;
  while (ds.size() < opt.count && st.attempted < max_attempts) {
    const std::uint64_t scenario_seed = rng();
    const double lambda = unit(rng);
    const std::size_t index = st.attempted++;
    try {
      const World world = spawn_scenario(opt.sampler(scenario_seed, index));
      const auto params = PlanParams::from_lambda(Mode::agility_enhanced, lambda, opt.envelope);
      const auto plan = plan_initial(world, world.config().start, world.config().goal, params, opt.envelope, opt.dt);
      const auto f = features(plan.trajectory);
      const auto profile = demand_profile(plan.trajectory, opt.baseline, opt.demand);
      ds.features.push_back({f.mean_speed(), f.length_D, f.mean_abs_curvature});
      ds.labels.push_back(profile.mean());
    } catch (const PlanningInfeasible&) {
      ++st.failed;
    } catch (const InvalidScenario&) {
      ++st.failed;
    }
  }
  if (stats != nullptr) *stats = st;
  if (ds.size() < opt.count) {
    throw PlanningInfeasible("only " + std::to_string(ds.size()) + " of " + std::to_string(opt.count) +
                             " planning samples succeeded");
  }
  ds.validate();
  return ds;
}

}  // namespace aeps
