#pragma once

// Mission main loop: plan, (optionally) predict and pre-charge, then fly the
// plan with a point-mass tracker while the plant feeds the demand of the
// motion actually flown. Power shortfall throttles acceleration.

#include "aeps/planner.hpp"
#include "aeps/plant.hpp"
#include "aeps/powermodel.hpp"
#include "aeps/predictor.hpp"
#include "aeps/world.hpp"

#include <deque>
#include <optional>
#include <string>
#include <vector>

namespace aeps {

enum class Outcome { success, collision, power_exhausted, timeout };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::success: return "success";
    case Outcome::collision: return "collision";
    case Outcome::power_exhausted: return "power_exhausted";
    case Outcome::timeout: return "timeout";
  }
  return "?";
}

struct MissionOptions {
  Mode mode = Mode::normal;
  PlantSpec plant;
  double initial_soc_uc = 0.05;
  BaselineParams baseline;
  DemandParams demand = DemandParams::scaled();
  Envelope envelope;
  double sensing_range = 20.0;  // m
  double timeout = 300.0;       // s
  double goal_tolerance = 0.5;  // m
  double hover_speed = 0.5;     // m/s, below this flown curvature counts as 0
  double payload = 0.0;         // kg
  bool full_replan = false;     // replan the whole route after each amendment
  const PredictorModel* model = nullptr;

  void validate() const {
    plant.validate();
    baseline.validate();
    demand.validate();
    if (!(initial_soc_uc >= 0.0 && initial_soc_uc <= 1.0)) throw DomainError("initial_soc_uc must be in [0, 1]");
    if (!(sensing_range > 0.0)) throw DomainError("sensing range must be positive");
    if (!(timeout > 0.0)) throw DomainError("timeout must be positive");
    if (mode == Mode::agility_enhanced && model == nullptr) {
      throw ConfigError("agility-enhanced mode needs a trained predictor");
    }
    if (model != nullptr) model->validate();
  }
};

struct TraceStep {
  double t = 0.0;  // end of the step
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  double demand = 0.0;  // W requested
  AllocationDecision decision;
  double soc_fc = 0.0;
  double soc_batt = 0.0;
  double soc_uc = 0.0;
  double min_distance = 0.0;  // m, capped at the sensing range
  double accel_scale = 1.0;   // supplied / requested under brownout
  double curvature = 0.0;     // flown, 1/m
  double predicted = 0.0;     // W, predictor on the trailing window (0 without a model)
  bool amended = false;
  std::vector<std::string> events;

  bool has(const std::string& tag) const { return std::find(events.begin(), events.end(), tag) != events.end(); }
};

struct SimulationTrace {
  Mode mode = Mode::normal;
  Outcome outcome = Outcome::timeout;
  double dt = 0.1;
  std::vector<TraceStep> steps;
  std::optional<Trajectory> planned;
  double plan_lambda = 0.0;
  double predicted_power = 0.0;     // W, mission-level prediction
  double precharge_duration = 0.0;  // s before take-off
  double precharge_energy = 0.0;    // J predicted surge
  EnergyAccount energy;
  double initial_stored = 0.0;  // J in all sources at take-off
  double final_stored = 0.0;
  std::size_t amendments = 0;

  double duration() const { return steps.empty() ? 0.0 : steps.back().t; }
  double requested_energy() const {
    double e = 0.0;
    for (const auto& s : steps) e += s.demand * dt;
    return e;
  }
  double supplied_energy() const {
    double e = 0.0;
    for (const auto& s : steps) e += s.decision.supplied() * dt;
    return e;
  }
  double shortfall_energy() const {
    double e = 0.0;
    for (const auto& s : steps) e += (s.demand - s.decision.supplied()) * dt;
    return e;
  }
  std::size_t count(const std::string& tag) const {
    return static_cast<std::size_t>(
        std::count_if(steps.begin(), steps.end(), [&](const TraceStep& s) { return s.has(tag); }));
  }
  Trajectory flown() const {
    std::vector<Vec3> pts;
    pts.reserve(steps.size());
    for (const auto& s : steps) pts.push_back(s.position);
    if (pts.size() == 1) pts.push_back(pts.front());
    return Trajectory::uniform(pts, dt, steps.empty() ? 0.0 : steps.front().t);
  }
};

namespace detail {

struct FlownSample {
  Vec3 position;
  Vec3 velocity;
  double curvature;
};

/// Demand features over the trailing window of flown samples.
inline FeatureVector window_features(const std::deque<FlownSample>& w) {
  FeatureVector f{0.0, 0.0, 0.0};
  if (w.empty()) return f;
  for (std::size_t i = 0; i < w.size(); ++i) {
    f.velocity += w[i].velocity.norm();
    f.mean_abs_curvature += w[i].curvature;
    if (i > 0) f.length_D += (w[i].position - w[i - 1].position).norm();
  }
  f.velocity /= static_cast<double>(w.size());
  f.mean_abs_curvature /= static_cast<double>(w.size());
  return f;
}

}  // namespace detail

/// Flies one mission. Deterministic for a fixed config, options and model.
inline SimulationTrace run_mission(const ScenarioConfig& config, const MissionOptions& opt) {
  opt.validate();
  World world = spawn_scenario(config);
  const double dt = config.dt;
  const Envelope& env = opt.envelope;

  SimulationTrace trace;
  trace.mode = opt.mode;
  trace.dt = dt;

  PlantState plant = PlantState::from_soc(opt.plant, 1.0, 1.0, opt.initial_soc_uc);

  // Plan. The enhanced planner sizes its aggressiveness for a charged capacitor.
  double lambda_plan = 0.0;
  if (opt.mode == Mode::agility_enhanced) {
    lambda_plan = aggressiveness(PlantState::from_soc(opt.plant, 1.0, 1.0, 1.0), opt.mode);
  }
  trace.plan_lambda = lambda_plan;
  const auto plan_params = PlanParams::from_lambda(opt.mode, lambda_plan, env);
  auto plan = plan_initial(world, config.start, config.goal, plan_params, env, dt);
  trace.planned = plan.trajectory;
  GeometricPath global = plan.path;

  if (opt.model != nullptr) {
    const auto f = features(plan.trajectory);
    trace.predicted_power = opt.model->forward({f.mean_speed(), f.length_D, f.mean_abs_curvature}).mean;
  }
  if (opt.mode == Mode::agility_enhanced) {
    const auto profile = constant_profile(std::max(0.0, trace.predicted_power), plan.trajectory.duration(), dt);
    const auto pre = precharge(plant, profile);
    plant = pre.state;
    trace.precharge_duration = pre.duration;
    trace.precharge_energy = pre.required_energy;
  }
  trace.initial_stored = plant.e_fc + plant.e_batt + plant.e_uc;

  UAVState uav;
  uav.position = config.start;
  uav.payload = opt.payload;
  uav.validate();
  Tracker tracker;
  tracker.accel_limit = uav.accel_limit;
  double last_scale = 1.0;  // supply ratio of the previous step

  Trajectory ref = plan.trajectory;
  double tau = ref.start_time();
  bool amended = false;
  AmendmentKind amend_kind = AmendmentKind::none;
  double evasive_until = 0.0;
  double last_replan = -1e9;
  bool was_brownout = false;
  std::deque<detail::FlownSample> window;
  const std::size_t window_len = static_cast<std::size_t>(std::lround(1.0 / dt)) + 1;
  window.push_back({uav.position, uav.velocity, 0.0});
  double progress = 0.0;

  auto resume_global = [&](double now) {
    AvoidanceContext ctx;
    ctx.global = &global;
    ctx.progress = progress;
    ctx.time = now;
    ctx.dt = dt;
    ctx.envelope = env;
    ctx.accel_scale = last_scale;
    const double lam = aggressiveness(plant, opt.mode);
    const auto p = PlanParams::from_lambda(opt.mode, lam, env);
    if (opt.full_replan) {
      try {
        auto re = plan_initial(world, uav.position, config.goal, p, env, dt);
        global = re.path;
        progress = 0.0;
      } catch (const PlanningInfeasible&) {
        // keep the previous route
      }
    }
    const double s0 = global.project(uav.position, std::max(0.0, progress - 2.0), 30.0);
    progress = s0;
    auto tail = global.tail(s0);
    if (tail.empty()) tail = GeometricPath::from_points({uav.position, global.points.back()});
    if (tail.empty()) {
      ref = Trajectory::uniform(std::vector<Vec3>{global.points.back(), global.points.back()}, dt, now);
      amended = false;
      amend_kind = AmendmentKind::none;
      tau = now;
      return;
    }
    Trajectory back = time_parameterize(tail, std::max(uav.velocity.norm(), 0.5), p.cruise_speed,
                                        speed_limits(p, env, p.cruise_speed), dt, now);
    if ((uav.position - tail.points.front()).norm() > 0.3) {
      ctx.progress = s0;
      ctx.statics = world.statics();
      const auto r = rejoin(uav, p, ctx);
      // Judge the blend on what the UAV can fly under the present supply.
      double flown_clearance = r.predicted_clearance;
      if (r.trajectory) {
        const auto path = rollout(uav.position, uav.velocity, *r.trajectory, now, 3.0, dt, last_scale);
        flown_clearance = std::min(flown_clearance, detail::trajectory_clearance(path, now, {}, ctx.statics));
      }
      if (r.trajectory && flown_clearance < kCollisionRadius + 0.25) {
        try {
          auto re = plan_initial(world, uav.position, config.goal, p, env, dt);
          global = re.path;
          progress = 0.0;
          ref = time_parameterize(global, std::max(uav.velocity.norm(), 0.5), p.cruise_speed,
                                  speed_limits(p, env, p.cruise_speed), dt, now);
          amended = false;
          amend_kind = AmendmentKind::none;
          tau = now;
          return;
        } catch (const PlanningInfeasible&) {
          // fall through to the blend
        }
      }
      if (r.trajectory) {
        ref = *r.trajectory;
        amend_kind = AmendmentKind::rejoin;
        amended = true;
        tau = now;
        return;
      }
    }
    ref = back;
    amended = false;
    amend_kind = AmendmentKind::none;
    tau = now;
  };

  const auto max_steps = static_cast<std::size_t>(std::ceil(opt.timeout / dt));
  trace.outcome = Outcome::timeout;
  for (std::size_t k = 0; k < max_steps; ++k) {
    const double now = static_cast<double>(k) * dt;
    TraceStep rec;
    rec.t = now + dt;

    // Reference bookkeeping.
    if (amended && (tau >= ref.end_time() || (amend_kind == AmendmentKind::escape && tau >= evasive_until))) {
      progress = std::max(progress, global.project(uav.position, std::max(0.0, progress - 2.0), 40.0));
      resume_global(now);
    }
    progress = global.project(uav.position, std::max(0.0, progress - 1.0), 10.0);

    // Conflict detection against sensed dynamic obstacles.
    const auto sensed = sense(world, uav.position, opt.sensing_range);
    std::vector<ObstacleSnapshot> dynamic;
    for (const auto& o : sensed) {
      if (o.kind != ObstacleKind::static_box) dynamic.push_back(o);
    }
    if (!dynamic.empty() && now - last_replan >= 0.5 - 1e-9) {
      const double lam = aggressiveness(plant, opt.mode);
      const auto params = PlanParams::from_lambda(opt.mode, lam, env);
      const auto c = predict_conflict(ref, tau, dynamic, 3.0, dt);
      if (c.clearance < params.target_clearance) {
        AvoidanceContext ctx;
        ctx.global = &global;
        ctx.progress = progress;
        ctx.time = now;
        ctx.dt = dt;
        ctx.obstacles = dynamic;
        ctx.statics = world.statics();
        ctx.envelope = env;
        ctx.accel_scale = last_scale;
        ctx.reference = &ref;
        ctx.reference_time = tau;
        const auto threat = std::find_if(dynamic.begin(), dynamic.end(),
                                         [&](const ObstacleSnapshot& o) { return o.id == c.obstacle; });
        const auto a = replan_avoid(uav, *threat, params, ctx);
        last_replan = now;
        if (a.kind != AmendmentKind::none && a.trajectory) {
          ref = *a.trajectory;
          tau = now;
          amended = true;
          amend_kind = a.kind;
          evasive_until = a.evasive_until;
          ++trace.amendments;
          rec.events.push_back("avoidance-start");
          if (a.kind == AmendmentKind::escape) rec.events.push_back("evasion");
          if (a.kind == AmendmentKind::hover) rec.events.push_back("hover");
        }
      }
    }

    // Demand of the motion flown over the last second.
    const auto wf = detail::window_features(window);
    rec.demand = instant_demand(baseline_power(wf.velocity, opt.baseline), wf.mean_abs_curvature, wf.length_D,
                                wf.mean_abs_curvature, opt.demand);
    if (opt.model != nullptr) rec.predicted = opt.model->forward(wf).mean;
    const auto decision = allocate(rec.demand, plant, dt);
    rec.decision = decision;
    rec.accel_scale = decision.brownout && rec.demand > 0.0 ? decision.supplied() / rec.demand : 1.0;
    if (decision.brownout && !was_brownout) rec.events.push_back("brownout");
    was_brownout = decision.brownout;

    // Tracking controller, saturated then throttled by the supply ratio.
    const Vec3 a = tracker.command(ref, tau, uav.position, uav.velocity, dt) * rec.accel_scale;
    last_scale = rec.accel_scale;
    tau += tracker.clock_rate(Tracker::lag(ref, tau, uav.position, dt)) * dt;

    const Vec3 v_old = uav.velocity;
    Vec3 v_new = v_old + a * dt;
    Vec3 p_new = uav.position + 0.5 * (v_old + v_new) * dt;
    const Vec3 lo(0.0, 0.0, 0.2);
    const Vec3 hi(config.area_x, config.area_y, config.ceiling);
    for (int i = 0; i < 3; ++i) {
      if (p_new[i] < lo[i] || p_new[i] > hi[i]) {
        p_new[i] = std::clamp(p_new[i], lo[i], hi[i]);
        v_new[i] = 0.0;
      }
    }
    uav.position = p_new;
    uav.velocity = v_new;
    const double speed = v_new.norm();
    rec.curvature = speed >= opt.hover_speed ? v_new.cross(a).norm() / (speed * speed * speed) : 0.0;

    plant = step(plant, decision, dt, &trace.energy);

    std::vector<bool> before;
    for (std::size_t i = 0; i < config.obstacles.size(); ++i) before.push_back(world.released(i));
    world.step(dt, &uav);
    for (std::size_t i = 0; i < world.config().obstacles.size(); ++i) {
      if (i < before.size() && !before[i] && world.released(i)) rec.events.push_back("spawn");
    }

    window.push_back({uav.position, uav.velocity, rec.curvature});
    while (window.size() > window_len) window.pop_front();

    rec.position = uav.position;
    rec.velocity = uav.velocity;
    rec.soc_fc = plant.soc_fc();
    rec.soc_batt = plant.soc_batt();
    rec.soc_uc = plant.soc_uc();
    rec.amended = amended;
    const double d = min_distance(uav.position, world);
    rec.min_distance = std::min(d, opt.sensing_range);

    bool done = false;
    if (d <= kCollisionRadius) {
      rec.events.push_back("collision");
      trace.outcome = Outcome::collision;
      done = true;
    } else if ((uav.position - config.goal).norm() <= opt.goal_tolerance) {
      rec.events.push_back("goal");
      trace.outcome = Outcome::success;
      done = true;
    } else if (plant.cell_energy() <= 0.0 && plant.e_uc <= 0.0) {
      trace.outcome = Outcome::power_exhausted;
      done = true;
    }
    trace.steps.push_back(std::move(rec));
    if (done) break;
  }
  trace.final_stored = plant.e_fc + plant.e_batt + plant.e_uc;
  return trace;
}

inline void write_trace_csv(std::ostream& out, const SimulationTrace& trace) {
  csv::Writer w(out);
  w.header({"t", "x", "y", "z", "vx", "vy", "vz", "demand_w", "supplied_w", "p_fc_batt", "p_uc", "p_charge",
            "soc_fc", "soc_batt", "soc_uc", "min_distance", "brownout", "accel_scale", "curvature", "predicted_w",
            "amended", "events"});
  for (const auto& s : trace.steps) {
    std::string tags;
    for (const auto& e : s.events) tags += (tags.empty() ? "" : ";") + e;
    w.row(s.t, s.position.x(), s.position.y(), s.position.z(), s.velocity.x(), s.velocity.y(), s.velocity.z(),
          s.demand, s.decision.supplied(), s.decision.p_fc_batt, s.decision.p_uc, s.decision.p_charge, s.soc_fc,
          s.soc_batt, s.soc_uc, s.min_distance, s.decision.brownout, s.accel_scale, s.curvature, s.predicted,
          s.amended, tags);
  }
}

inline void write_plant_csv(std::ostream& out, const SimulationTrace& trace) {
  csv::Writer w(out);
  write_plant_header(w);
  for (const auto& s : trace.steps) {
    w.row(s.t, s.demand, s.decision.p_fc_batt, s.decision.p_uc, s.decision.p_charge, s.soc_fc, s.soc_batt, s.soc_uc,
          s.decision.brownout);
  }
}

}  // namespace aeps
