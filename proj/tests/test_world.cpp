#include "aeps/world.hpp"

#include <catch_amalgamated.hpp>

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

ObstacleSpec sphere_drop(Vec3 p, double r, double spawn_time) {
  ObstacleSpec o;
  o.kind = ObstacleKind::falling_object;
  o.position = p;
  o.radius = r;
  o.spawn_time = spawn_time;
  return o;
}

ScenarioConfig empty_config() {
  ScenarioConfig c;
  c.start = Vec3(10, 10, 2);
  c.goal = Vec3(50, 10, 2);
  return c;
}

bool same_layout(const World& a, const World& b) {
  const auto& x = a.config().obstacles;
  const auto& y = b.config().obstacles;
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].kind != y[i].kind || x[i].position != y[i].position || x[i].half_extents != y[i].half_extents ||
        x[i].velocity != y[i].velocity || x[i].radius != y[i].radius || x[i].waypoints != y[i].waypoints) {
      return false;
    }
  }
  return a.config().start == b.config().start && a.config().goal == b.config().goal;
}

}  // namespace

TEST_CASE("vehicle advances linearly") {
  auto cfg = empty_config();
  ObstacleSpec v;
  v.kind = ObstacleKind::moving_vehicle;
  v.position = Vec3(0, 0, 1);
  v.half_extents = Vec3(1, 1, 1);
  v.velocity = Vec3(5, 0, 0);
  cfg.obstacles.push_back(v);
  const World w = step_world(World(cfg), 0.1);
  const auto s = w.active().at(0);
  CHECK_THAT(s.center.x(), WithinAbs(0.5, 1e-12));
  CHECK(s.center.y() == 0.0);
  CHECK(s.velocity == Vec3(5, 0, 0));
}

TEST_CASE("falling object after one second has dropped 4.905 m at 9.81 m/s") {
  auto cfg = empty_config();
  cfg.obstacles.push_back(sphere_drop(Vec3(30, 10, 30), 0.5, 0.0));
  World w(cfg);
  for (int i = 0; i < 10; ++i) w.step(0.1);
  const auto s = w.active().at(0);
  CHECK_THAT(30.0 - s.center.z(), WithinAbs(4.905, 1e-9));
  CHECK_THAT(-s.velocity.z(), WithinAbs(9.81, 1e-9));
}

TEST_CASE("falling object is absent before its spawn time and after touchdown") {
  auto cfg = empty_config();
  cfg.obstacles.push_back(sphere_drop(Vec3(30, 10, 5), 0.5, 1.0));
  World w(cfg);
  CHECK(w.active().empty());
  CHECK(sense(w, Vec3(30, 10, 4), 20.0).empty());
  CHECK(min_distance(Vec3(30, 10, 4), w) == std::numeric_limits<double>::infinity());
  for (int i = 0; i < 10; ++i) w.step(0.1);
  CHECK(w.active().size() == 1);
  for (int i = 0; i < 20; ++i) w.step(0.1);
  CHECK(w.active().empty());
}

TEST_CASE("aimed falling object drops onto the UAV's predicted position") {
  auto cfg = empty_config();
  auto o = sphere_drop(Vec3(30, 10, 12), 0.5, 0.0);
  o.aimed = true;
  o.aim_radius = 6.0;
  cfg.obstacles.push_back(o);
  World w(cfg);
  UAVState uav;
  uav.position = Vec3(10, 10, 2);
  uav.velocity = Vec3(5, 0, 0);
  bool released = false;
  for (int i = 0; i < 100 && !released; ++i) {
    w.step(0.1, &uav);
    uav.position += uav.velocity * 0.1;
    released = w.released(0);
  }
  REQUIRE(released);
  const auto s = w.active().at(0);
  CHECK(std::abs(s.center.y() - 10.0) < 1e-9);
  CHECK(std::abs(s.center.x() - 30.0) <= 6.0);
}

TEST_CASE("sensing is range limited and exact") {
  auto cfg = empty_config();
  cfg.obstacles.push_back(box(Vec3(40, 10, 5), Vec3(1, 1, 5)));  // surface 25 m from (14,10,2)
  cfg.obstacles.push_back(box(Vec3(25, 25, 5), Vec3(1, 1, 5)));  // about 17 m
  const World w(cfg);
  const Vec3 uav(14, 10, 2);
  const auto seen = sense(w, uav, 20.0);
  REQUIRE(seen.size() == 1);
  CHECK(seen[0].id == 1);
  CHECK(seen[0].center == Vec3(25, 25, 5));
  CHECK(sense(w, uav, 30.0).size() == 2);
  CHECK_THROWS_AS(sense(w, uav, 0.0), DomainError);
}

TEST_CASE("surface distance examples") {
  ObstacleSnapshot s;
  s.shape = Shape::sphere;
  s.center = Vec3(0, 0, 13);
  s.radius = 1.0;
  CHECK(s.distance(Vec3(0, 0, 10)) == 2.0);

  ObstacleSnapshot b;
  b.shape = Shape::box;
  b.center = Vec3(0, 0, 0);
  b.half_extents = Vec3(1, 2, 3);
  CHECK(b.distance(Vec3(0.5, 0.5, 0.5)) == 0.0);
  CHECK(b.distance(Vec3(4, 0, 0)) == 3.0);
  CHECK_THAT(b.distance(Vec3(4, 6, 0)), WithinAbs(5.0, 1e-12));
}

TEST_CASE("min distance is the nearest obstacle and collision uses the radius") {
  auto cfg = empty_config();
  cfg.obstacles.push_back(box(Vec3(30, 14, 2), Vec3(1, 1, 2)));   // 3 m away
  cfg.obstacles.push_back(box(Vec3(30, 4, 2), Vec3(1, 1, 2)));    // 5 m away
  const World w(cfg);
  CHECK_THAT(min_distance(Vec3(30, 10, 2), w), WithinAbs(3.0, 1e-12));
  CHECK_FALSE(check_collision(Vec3(30, 10, 2), w));
  CHECK(check_collision(Vec3(30, 12.8, 2), w));
  CHECK(check_collision(Vec3(30, 14, 2), w));
}

TEST_CASE("start inside an obstacle is rejected") {
  auto cfg = empty_config();
  cfg.obstacles.push_back(box(cfg.start, Vec3(1, 1, 1)));
  CHECK_THROWS_AS(spawn_scenario(cfg), InvalidScenario);
  auto out = empty_config();
  out.goal = Vec3(400, 10, 2);
  CHECK_THROWS_AS(spawn_scenario(out), InvalidScenario);
}

TEST_CASE("an empty obstacle list is free space") {
  const World w = spawn_scenario(empty_config());
  CHECK(w.active().empty());
  CHECK(min_distance(Vec3(1, 1, 1), w) == std::numeric_limits<double>::infinity());
}

TEST_CASE("random scenarios are deterministic per seed") {
  for (auto c : {Complexity::low_dynamic, Complexity::high_dynamic}) {
    for (std::uint64_t seed : {1u, 2u, 99u}) {
      const auto a = spawn_scenario(make_random_scenario(c, seed));
      const auto b = spawn_scenario(make_random_scenario(c, seed));
      CHECK(same_layout(a, b));
    }
    CHECK_FALSE(same_layout(spawn_scenario(make_random_scenario(c, 1)), spawn_scenario(make_random_scenario(c, 2))));
  }
}

TEST_CASE("layouts contain the obstacle mix for their complexity") {
  auto count = [](const World& w, ObstacleKind k) {
    std::size_t n = 0;
    for (const auto& o : w.config().obstacles) n += o.kind == k;
    return n;
  };
  const auto low = spawn_scenario(make_random_scenario(Complexity::low_dynamic, 5));
  CHECK(count(low, ObstacleKind::moving_vehicle) == 1);
  CHECK(count(low, ObstacleKind::falling_object) == 1);
  CHECK(count(low, ObstacleKind::other_uav) == 0);
  const auto high = spawn_scenario(make_random_scenario(Complexity::high_dynamic, 5));
  CHECK(count(high, ObstacleKind::moving_vehicle) > 1);
  CHECK(count(high, ObstacleKind::falling_object) > 1);
  CHECK(count(high, ObstacleKind::other_uav) == 2);
}

TEST_CASE("every high-dynamic layout keeps a 2 m corridor") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto w = spawn_scenario(make_random_scenario(Complexity::high_dynamic, seed));
    INFO("seed " << seed);
    CHECK(corridor_exists(w.config(), w.statics(), 2.0));
    const double d = (w.config().goal - w.config().start).norm();
    CHECK(d >= 30.0);
    CHECK(d <= 45.0);
  }
}

TEST_CASE("scenario JSON round trip") {
  auto cfg = empty_config();
  cfg.obstacles.push_back(box(Vec3(30, 14, 2), Vec3(1, 1, 2)));
  auto drop = sphere_drop(Vec3(30, 10, 12), 0.5, 2.0);
  drop.aimed = true;
  cfg.obstacles.push_back(drop);
  ObstacleSpec u;
  u.kind = ObstacleKind::other_uav;
  u.waypoints = {Vec3(20, 0, 2), Vec3(20, 20, 2)};
  u.radius = 0.3;
  u.speed = 4.0;
  cfg.obstacles.push_back(u);
  const auto j = to_json(cfg);
  CHECK(j.at("schema") == 1);
  const auto back = scenario_from_json(nlohmann::json::parse(j.dump()));
  CHECK(same_layout(World(cfg), World(back)));
  CHECK(back.obstacles[1].aimed);
  CHECK(back.obstacles[1].spawn_time == 2.0);

  auto bad = j;
  bad["wind"] = 3;
  CHECK_THROWS_AS(scenario_from_json(bad), InvalidScenario);
  bad = j;
  bad["obstacles"][0]["kind"] = "tree";
  CHECK_THROWS_AS(scenario_from_json(bad), InvalidScenario);
  bad = j;
  bad.erase("start");
  CHECK_THROWS_AS(scenario_from_json(bad), InvalidScenario);
}

TEST_CASE("other UAVs loop their waypoints at constant speed") {
  auto cfg = empty_config();
  ObstacleSpec u;
  u.kind = ObstacleKind::other_uav;
  u.waypoints = {Vec3(20, 0, 2), Vec3(20, 20, 2)};
  u.radius = 0.3;
  u.speed = 4.0;
  cfg.obstacles.push_back(u);
  World w(cfg);
  for (int i = 0; i < 25; ++i) w.step(0.1);  // 10 m along the first leg
  CHECK_THAT(w.active()[0].center.y(), WithinAbs(10.0, 1e-9));
  CHECK_THAT(w.active()[0].velocity.y(), WithinAbs(4.0, 1e-12));
  for (int i = 0; i < 50; ++i) w.step(0.1);  // 20 m further: 10 m back down
  CHECK_THAT(w.active()[0].center.y(), WithinAbs(10.0, 1e-9));
  CHECK_THAT(w.active()[0].velocity.y(), WithinAbs(-4.0, 1e-12));
}

TEST_CASE("UAV state validation") {
  UAVState u;
  u.payload = 0.7;
  CHECK_THROWS_AS(u.validate(), DomainError);
}
