#include "aeps/planner.hpp"

#include "helpers.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace aeps;
using Catch::Matchers::WithinAbs;

namespace {

ObstacleSpec box(Vec3 c, Vec3 half) {
  ObstacleSpec o;
  o.kind = ObstacleKind::static_box;
  o.position = c;
  o.half_extents = half;
  return o;
}

ScenarioConfig corridor(Vec3 start = Vec3(10, 30, 2), Vec3 goal = Vec3(48, 30, 2)) {
  ScenarioConfig c;
  c.start = start;
  c.goal = goal;
  return c;
}

double min_static_clearance(const Trajectory& t, const World& w) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& p : t.waypoints()) d = std::min(d, static_clearance(p.position, w.statics()));
  return d;
}

double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

/// Distance from a point to the polyline of a geometric path.
double path_distance(const GeometricPath& g, const Vec3& p) {
  return (g.point_at(g.project(p)) - p).norm();
}

}  // namespace

TEST_CASE("aggressiveness maps linearly onto the envelope") {
  for (double lam : {0.0, 0.25, 0.5, 1.0}) {
    const auto p = PlanParams::from_lambda(Mode::agility_enhanced, lam);
    CHECK_THAT(p.target_clearance, WithinAbs(1.0 + 2.0 * lam, 1e-12));
    CHECK_THAT(p.cruise_speed, WithinAbs(3.0 + 5.0 * lam, 1e-12));
    CHECK_THAT(p.escape_accel(), WithinAbs(6.0 * (0.5 + 0.5 * lam), 1e-12));
    CHECK(p.boosted_speed(Envelope{}) <= 8.0);
  }
  CHECK_THROWS_AS(PlanParams::from_lambda(Mode::normal, 1.5), DomainError);
}

TEST_CASE("aggressiveness from the capacitor state") {
  const PlantSpec spec;
  CHECK(aggressiveness(PlantState::from_soc(spec, 1, 1, 1.0), Mode::agility_enhanced) == 1.0);
  CHECK(aggressiveness(PlantState::from_soc(spec, 1, 1, 0.0), Mode::agility_enhanced) == 0.0);
  CHECK_THAT(aggressiveness(PlantState::from_soc(spec, 1, 1, 12.0 / 4500.0), Mode::agility_enhanced),
             WithinAbs(0.4, 1e-12));
  CHECK(aggressiveness(PlantState::from_soc(spec, 1, 1, 1.0), Mode::normal) == 0.0);
}

TEST_CASE("aggressiveness is non-decreasing in capacitor SOC") {
  const PlantSpec spec;
  double prev = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double lam = aggressiveness(PlantState::from_soc(spec, 1, 1, i / 1000.0), Mode::agility_enhanced);
    CHECK(lam >= prev);
    prev = lam;
  }
}

TEST_CASE("empty world plans a straight line at cruise speed") {
  const auto cfg = corridor();
  const World w(cfg);
  for (double lam : {0.0, 1.0}) {
    const auto p = PlanParams::from_lambda(Mode::agility_enhanced, lam);
    const auto r = plan_initial(w, cfg.start, cfg.goal, p);
    CHECK_THAT(arc_length(r.trajectory), WithinAbs(38.0, 1e-6));
    for (const auto& wp : r.trajectory.waypoints()) CHECK(std::abs(wp.position.y() - 30.0) < 1e-9);
    for (double k : curvature_series(r.trajectory)) CHECK(k <= 1e-9);
    const auto s = speed_series(r.trajectory);
    // The schedule is stretched so the last sample lands on the goal.
    CHECK_THAT(s[s.size() / 2], WithinAbs(p.cruise_speed, 0.02 * p.cruise_speed));
    CHECK(s[s.size() / 2] <= p.cruise_speed + 1e-9);
    CHECK(r.within_distance_envelope);
    CHECK((r.trajectory.back().position - cfg.goal).norm() < 1e-9);
  }
}

TEST_CASE("a wall with a gap is crossed through the gap at the target clearance") {
  auto cfg = corridor();
  // Wall at x = 30 from y = 0 to 26 and from 34 to 80: an 8 m gap centred on y = 30.
  cfg.obstacles.push_back(box(Vec3(30, 13, 10), Vec3(1, 13, 10)));
  cfg.obstacles.push_back(box(Vec3(30, 57, 10), Vec3(1, 23, 10)));
  const World w(cfg);
  for (double lam : {0.0, 0.5, 1.0}) {
    const auto p = PlanParams::from_lambda(Mode::agility_enhanced, lam);
    const auto r = plan_initial(w, cfg.start, cfg.goal, p);
    INFO("lambda " << lam);
    CHECK(min_static_clearance(r.trajectory, w) >= p.target_clearance - 0.1);
    // It passes x = 30 inside the gap.
    for (const auto& wp : r.trajectory.waypoints()) {
      if (std::abs(wp.position.x() - 30.0) < 0.5) CHECK(std::abs(wp.position.y() - 30.0) < 4.0);
    }
  }
}

TEST_CASE("more aggressive plans keep more distance from the same obstacle") {
  auto cfg = corridor();
  cfg.obstacles.push_back(box(Vec3(30, 30, 5), Vec3(2, 2, 5)));
  const World w(cfg);
  const auto lo = plan_initial(w, cfg.start, cfg.goal, PlanParams::from_lambda(Mode::normal, 0.0));
  const auto hi = plan_initial(w, cfg.start, cfg.goal, PlanParams::from_lambda(Mode::agility_enhanced, 1.0));
  CHECK(min_static_clearance(hi.trajectory, w) > min_static_clearance(lo.trajectory, w));
  CHECK(max_of(curvature_series(hi.trajectory)) <= 1.0 + 1e-6);
}

TEST_CASE("planning fails cleanly when the goal is walled in") {
  auto cfg = corridor();
  cfg.obstacles.push_back(box(Vec3(48, 30, 10), Vec3(3, 3, 10)));
  cfg.goal = Vec3(48, 34.5, 2);  // 1.5 m from a box that is then surrounded
  cfg.obstacles.push_back(box(Vec3(48, 38.5, 10), Vec3(3, 3, 10)));
  cfg.obstacles.push_back(box(Vec3(43.5, 34.5, 10), Vec3(1.5, 1.5, 10)));
  cfg.obstacles.push_back(box(Vec3(52.5, 34.5, 10), Vec3(1.5, 1.5, 10)));
  const World w(cfg);
  CHECK_THROWS_AS(plan_initial(w, cfg.start, cfg.goal, PlanParams::from_lambda(Mode::normal, 0.0)),
                  PlanningInfeasible);
}

TEST_CASE("envelope clamps 10 m/s to 8 m/s on the same geometry") {
  const auto t = testing::straight(Vec3(0, 0, 2), Vec3(50, 20, 2), 10.0);
  const auto r = enforce_envelope(t);
  CHECK(r.report.speed_violations > 0);
  for (double v : speed_series(r.trajectory)) CHECK(v <= 8.0 + 1e-6);
  const Vec3 dir = Vec3(50, 20, 0).normalized();
  for (const auto& wp : r.trajectory.waypoints()) {
    CHECK((wp.position - Vec3(0, 0, 2)).cross(dir).norm() < 1e-9);
  }
  CHECK((r.trajectory.back().position - Vec3(50, 20, 2)).norm() < 1e-9);
  CHECK_THAT(arc_length(r.trajectory), WithinAbs(arc_length(t), 1e-9));
}

TEST_CASE("envelope leaves a compliant trajectory unchanged") {
  const auto c = testing::circle(2.0, 4.0, 5.0, 0.1);  // curvature 0.5, speed 4
  const auto r = enforce_envelope(c);
  CHECK(r.report.speed_violations == 0);
  CHECK(r.report.curvature_violations == 0);
  REQUIRE(r.trajectory.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(r.trajectory[i].position == c[i].position);
}

TEST_CASE("envelope smooths a hairpin down to the curvature cap") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 30; ++i) pts.emplace_back(i * 0.3, 0, 2);
  for (int i = 1; i <= 10; ++i) {
    const double a = M_PI * i / 10;
    pts.emplace_back(8.7 + 0.5 * std::sin(a), 0.5 - 0.5 * std::cos(a), 2);  // radius 0.5: kappa 2
  }
  for (int i = 1; i < 30; ++i) pts.emplace_back(8.7 - i * 0.3, 1, 2);
  const auto in = Trajectory::uniform(pts, 0.1);
  const auto r = enforce_envelope(in);
  CHECK(r.report.curvature_violations > 0);
  CHECK(r.report.residual_violations == 0);
  CHECK(max_of(curvature_series(r.trajectory)) <= 1.0 + 1e-6);
}

TEST_CASE("envelope output satisfies the caps on random trajectories") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> speed(3.0, 11.0), turn(-1.2, 1.2);
  for (int trial = 0; trial < 40; ++trial) {
    // Piecewise-constant speed and turn rate: curvature = turn / speed.
    std::vector<Vec3> pts{Vec3(50, 50, 2)};
    double heading = 0.0;
    double v = speed(rng), w = turn(rng) * 4.0;
    for (int i = 0; i < 120; ++i) {
      if (i % 30 == 0) {
        v = speed(rng);
        w = turn(rng) * 4.0;
      }
      heading += w * 0.1;
      pts.push_back(pts.back() + v * 0.1 * Vec3(std::cos(heading), std::sin(heading), 0));
    }
    const auto r = enforce_envelope(Trajectory::uniform(pts, 0.1));
    INFO("trial " << trial);
    CHECK(r.report.residual_violations == 0);
    CHECK(max_of(curvature_series(r.trajectory)) <= 1.0 + 1e-6);
    const auto s = speed_series(r.trajectory);
    for (std::size_t i = 1; i + 1 < s.size(); ++i) CHECK(s[i] <= 8.0 + 1e-6);
  }
}

TEST_CASE("conflict prediction extrapolates obstacles") {
  const auto ref = testing::straight(Vec3(0, 0, 2), Vec3(40, 0, 2), 4.0);
  ObstacleSnapshot v;
  v.kind = ObstacleKind::moving_vehicle;
  v.shape = Shape::box;
  v.center = Vec3(20, -10, 1.25);
  v.half_extents = Vec3(1, 1, 1.25);
  v.velocity = Vec3(0, 5, 0);
  // Vehicle reaches y = 0 at 2 s, the UAV reaches x = 20 at 5 s.
  CHECK(predict_conflict(ref, 0.0, {v}, 3.0).clearance > 1.0);
  const auto c = predict_conflict(ref, 3.0, {v}, 3.0);
  CHECK(c.clearance < 1.0);
  CHECK(c.obstacle == 0);
}

namespace {

struct AvoidSetup {
  World world;
  PlanResult plan;
  UAVState uav;
  AvoidanceContext ctx;
};

/// UAV flying the straight plan, `t` seconds after take-off.
AvoidSetup flying(const ScenarioConfig& cfg, double lambda, double t) {
  World w(cfg);
  const auto p = PlanParams::from_lambda(Mode::agility_enhanced, lambda);
  auto plan = plan_initial(w, cfg.start, cfg.goal, p);
  AvoidSetup s{w, plan, {}, {}};
  s.uav.position = s.plan.trajectory.position_at(t);
  s.uav.velocity = Tracker::ref_velocity(s.plan.trajectory, t, 0.1);
  s.ctx.global = &s.plan.path;
  s.ctx.progress = s.plan.path.project(s.uav.position);
  s.ctx.time = t;
  s.ctx.statics = w.statics();
  return s;
}

}  // namespace

TEST_CASE("avoidance returns no amendment when the course is already clear") {
  const auto cfg = corridor();
  auto s = flying(cfg, 1.0, 1.0);
  s.ctx.reference = &s.plan.trajectory;
  s.ctx.reference_time = 1.0;
  ObstacleSnapshot far;
  far.kind = ObstacleKind::moving_vehicle;
  far.shape = Shape::box;
  far.center = Vec3(30, 50, 1.25);
  far.half_extents = Vec3(1, 2.25, 1.25);
  far.velocity = Vec3(5, 0, 0);
  s.ctx.obstacles = {far};
  const auto a = replan_avoid(s.uav, far, PlanParams::from_lambda(Mode::agility_enhanced, 1.0), s.ctx);
  CHECK(a.kind == AmendmentKind::none);
  CHECK_FALSE(a.trajectory.has_value());
  CHECK(a.predicted_clearance >= 3.0);
}

TEST_CASE("a vehicle crossing ahead at full aggressiveness is passed with the full clearance") {
  const auto cfg = corridor(Vec3(10, 30, 2), Vec3(50, 30, 2));
  auto s = flying(cfg, 1.0, 0.5);
  s.ctx.reference = &s.plan.trajectory;
  s.ctx.reference_time = 0.5;
  // Crosses the path at x = 26 when the UAV would be there.
  ObstacleSnapshot v;
  v.kind = ObstacleKind::moving_vehicle;
  v.shape = Shape::box;
  v.half_extents = Vec3(1.0, 2.25, 1.25);
  v.velocity = Vec3(0, 6, 0);
  const double t_uav = (26.0 - s.uav.position.x()) / 8.0;
  v.center = Vec3(26, 30 - 6 * t_uav, 1.25);
  s.ctx.obstacles = {v};
  const auto params = PlanParams::from_lambda(Mode::agility_enhanced, 1.0);
  REQUIRE(predict_conflict(s.plan.trajectory, 0.5, {v}, 3.0).clearance < 3.0);
  const auto a = replan_avoid(s.uav, v, params, s.ctx);
  REQUIRE(a.kind != AmendmentKind::none);
  REQUIRE(a.trajectory);
  CHECK(a.predicted_clearance >= 3.0);
  // Independent check of the produced reference against the extrapolated vehicle.
  double clr = std::numeric_limits<double>::infinity();
  for (double tau = 0.0; tau <= 3.0 + 1e-9; tau += 0.1) {
    clr = std::min(clr, v.predict(tau).distance(a.trajectory->position_at(s.ctx.time + tau)));
  }
  CHECK(clr >= 3.0 - 0.1);
  // The envelope holds on arcs and blends; an escape phase is an
  // acceleration-limited manoeuvre and only its blend back is checked.
  const auto k = curvature_series(*a.trajectory);
  const double from = a.kind == AmendmentKind::escape ? a.evasive_until + 0.25 : -1e9;
  for (std::size_t i = 0; i < k.size(); ++i) {
    if ((*a.trajectory)[i].time > from) CHECK(k[i] <= 1.0 + 1e-6);
  }
}

TEST_CASE("a falling object is escaped further at full aggressiveness") {
  const auto cfg = corridor();
  double displacement[2] = {0.0, 0.0};
  int i = 0;
  for (double lam : {0.0, 1.0}) {
    auto s = flying(cfg, lam, 1.0);
    s.ctx.reference = &s.plan.trajectory;
    s.ctx.reference_time = 1.0;
    ObstacleSnapshot f;
    f.kind = ObstacleKind::falling_object;
    f.shape = Shape::sphere;
    f.radius = 0.5;
    f.gravity = kGravity;
    // Directly above where the UAV will be in a second.
    f.center = s.plan.trajectory.position_at(2.0) + Vec3(0, 0, 5.0);
    s.ctx.obstacles = {f};
    const auto a = replan_avoid(s.uav, f, PlanParams::from_lambda(Mode::agility_enhanced, lam), s.ctx);
    INFO("lambda " << lam);
    REQUIRE(a.kind != AmendmentKind::none);
    REQUIRE(a.trajectory);
    // Lateral miss distance from the unamended course when the object
    // reaches flight altitude, whatever kind of manoeuvre was chosen.
    const double t_impact = std::sqrt(2.0 * 5.0 / kGravity);
    const double t = s.ctx.time + t_impact;
    displacement[i++] = (a.trajectory->position_at(t) - s.plan.trajectory.position_at(t)).norm();
    if (a.kind == AmendmentKind::escape) {
      CHECK_THAT(a.escape_displacement, WithinAbs(displacement[i - 1], 0.5));
    }
  }
  CHECK(displacement[1] > displacement[0]);
}

TEST_CASE("amendments rejoin the global path within 15 s") {
  const auto cfg = corridor(Vec3(10, 30, 2), Vec3(50, 30, 2));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> lam_d(0.0, 1.0), when(0.3, 2.0), vspeed(5.0, 10.0);
  int amended = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const double lam = lam_d(rng);
    auto s = flying(cfg, lam, when(rng));
    s.ctx.reference = &s.plan.trajectory;
    s.ctx.reference_time = s.ctx.time;
    const auto params = PlanParams::from_lambda(Mode::agility_enhanced, lam);
    const double x_cross = s.uav.position.x() + 8.0 + 6.0 * lam_d(rng);
    const double speed = vspeed(rng);
    const double t_uav = (x_cross - s.uav.position.x()) / params.cruise_speed;
    ObstacleSnapshot v;
    v.kind = ObstacleKind::moving_vehicle;
    v.shape = Shape::box;
    v.half_extents = Vec3(1.0, 2.25, 1.25);
    v.velocity = Vec3(0, speed, 0);
    v.center = Vec3(x_cross, 30 - speed * t_uav, 1.25);
    s.ctx.obstacles = {v};
    const auto a = replan_avoid(s.uav, v, params, s.ctx);
    if (a.kind == AmendmentKind::none || !a.trajectory) continue;
    ++amended;
    INFO("trial " << trial << " kind " << to_string(a.kind));
    // Escapes hand back to the global path when the escape phase ends.
    const double end = a.kind == AmendmentKind::escape ? a.evasive_until : a.trajectory->end_time();
    CHECK(end - s.ctx.time <= 15.0);
    if (a.kind == AmendmentKind::lateral_arc) {
      CHECK(path_distance(s.plan.path, a.trajectory->back().position) < 0.3);
    }
    if (a.kind == AmendmentKind::hover) {
      CHECK(a.trajectory->end_time() - s.ctx.time <= 15.0);
    }
  }
  CHECK(amended > 10);
}

TEST_CASE("rejoin blends back onto the path") {
  const auto cfg = corridor(Vec3(10, 30, 2), Vec3(50, 30, 2));
  auto s = flying(cfg, 0.5, 1.0);
  s.uav.position += Vec3(0, 3, 0);
  const auto a = rejoin(s.uav, PlanParams::from_lambda(Mode::agility_enhanced, 0.5), s.ctx);
  REQUIRE(a.trajectory);
  CHECK((a.trajectory->front().position - s.uav.position).norm() < 1e-6);
  CHECK(path_distance(s.plan.path, a.trajectory->back().position) < 0.3);
  CHECK(a.trajectory->end_time() - s.ctx.time <= 15.0);
}

TEST_CASE("rollout at zero scale coasts") {
  const auto ref = testing::straight(Vec3(0, 0, 2), Vec3(40, 0, 2), 4.0);
  const auto r = rollout(Vec3(0, 2, 2), Vec3(1, 0, 0), ref, 0.0, 2.0, 0.1, 0.0);
  CHECK_THAT(r.back().position.x(), WithinAbs(2.0, 1e-9));
  CHECK_THAT(r.back().position.y(), WithinAbs(2.0, 1e-12));
  const auto full = rollout(Vec3(0, 2, 2), Vec3(1, 0, 0), ref, 0.0, 3.0, 0.1, 1.0);
  CHECK(std::abs(full.back().position.y()) < 1.0);
}
