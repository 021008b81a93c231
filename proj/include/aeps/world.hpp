#pragma once

// Scenario world: obstacle kinematics, range-limited sensing, clearance and
// collision queries, JSON scenario files.

#include "aeps/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

namespace aeps {

inline constexpr double kGravity = 9.81;

enum class Complexity { low_dynamic, high_dynamic };
enum class ObstacleKind { static_box, moving_vehicle, falling_object, other_uav };
enum class Shape { box, sphere };

inline const char* to_string(Complexity c) {
  return c == Complexity::low_dynamic ? "low_dynamic" : "high_dynamic";
}

inline const char* to_string(ObstacleKind k) {
  switch (k) {
    case ObstacleKind::static_box: return "static_box";
    case ObstacleKind::moving_vehicle: return "moving_vehicle";
    case ObstacleKind::falling_object: return "falling_object";
    case ObstacleKind::other_uav: return "other_uav";
  }
  return "?";
}

/// Static boxes and vehicles are axis-aligned boxes; falling objects and
/// other UAVs are spheres.
struct ObstacleSpec {
  ObstacleKind kind = ObstacleKind::static_box;
  Vec3 position = Vec3::Zero();      // box centre, or spawn position for falling objects
  Vec3 half_extents = Vec3::Zero();  // boxes
  double radius = 0.0;               // spheres
  Vec3 velocity = Vec3::Zero();      // vehicles, ground plane only
  double spawn_time = 0.0;           // falling objects
  double gravity = kGravity;
  // Falling objects: released when the UAV is about to pass beneath, and
  // dropped onto its predicted position if that lies within aim_radius of the
  // nominal spawn point.
  bool aimed = false;
  double aim_radius = 4.0;
  std::vector<Vec3> waypoints;  // other UAVs: closed loop
  double speed = 0.0;           // other UAVs

  Shape shape() const {
    return kind == ObstacleKind::static_box || kind == ObstacleKind::moving_vehicle ? Shape::box
                                                                                    : Shape::sphere;
  }

  void validate() const {
    if (shape() == Shape::box) {
      if (!(half_extents.minCoeff() > 0.0)) throw InvalidScenario("box half extents must be positive");
    } else if (!(radius > 0.0)) {
      throw InvalidScenario("sphere radius must be positive");
    }
    if (kind == ObstacleKind::moving_vehicle && velocity.z() != 0.0) {
      throw InvalidScenario("vehicles move in the ground plane");
    }
    if (kind == ObstacleKind::falling_object && !(gravity > 0.0)) throw InvalidScenario("gravity must be positive");
    if (kind == ObstacleKind::other_uav) {
      if (waypoints.empty()) throw InvalidScenario("other UAV needs waypoints");
      if (!(speed >= 0.0)) throw InvalidScenario("other UAV speed must be non-negative");
    }
  }
};

struct ScenarioConfig {
  double area_x = 300.0;
  double area_y = 300.0;
  double ceiling = 50.0;
  Complexity complexity = Complexity::low_dynamic;
  bool random_layout = false;  // populate obstacles from the seed
  std::vector<ObstacleSpec> obstacles;
  Vec3 start{20.0, 20.0, 2.0};
  Vec3 goal{50.0, 20.0, 2.0};
  std::uint64_t seed = 0;
  double dt = 0.1;

  bool inside(const Vec3& p) const {
    return p.x() >= 0.0 && p.x() <= area_x && p.y() >= 0.0 && p.y() <= area_y && p.z() >= 0.0 &&
           p.z() <= ceiling;
  }

  void validate() const {
    if (!(area_x > 0.0 && area_y > 0.0 && ceiling > 0.0)) throw InvalidScenario("area must be positive");
    if (!(dt > 0.0)) throw InvalidScenario("dt must be positive");
    if (!finite(start) || !finite(goal)) throw InvalidScenario("start/goal must be finite");
    if (!inside(start) || !inside(goal)) throw InvalidScenario("start and goal must lie inside the area");
    for (const auto& o : obstacles) o.validate();
  }
};

struct UAVState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  double mass = 0.9;     // kg
  double payload = 0.0;  // kg, at most 0.6
  double accel_limit = 25.0;  // m/s^2 before power gating

  void validate() const {
    if (!(mass > 0.0)) throw DomainError("UAV mass must be positive");
    if (!(payload >= 0.0 && payload <= 0.6)) throw DomainError("payload must be within [0, 0.6] kg");
    if (!(accel_limit > 0.0)) throw DomainError("acceleration limit must be positive");
  }
};

/// Instantaneous obstacle state as seen by sensing and clearance queries.
struct ObstacleSnapshot {
  std::size_t id = 0;
  ObstacleKind kind = ObstacleKind::static_box;
  Shape shape = Shape::box;
  Vec3 center = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 half_extents = Vec3::Zero();
  double radius = 0.0;
  double gravity = 0.0;  // downward acceleration, falling objects only

  /// Distance from a point to the surface; 0 inside.
  double distance(const Vec3& p) const {
    if (shape == Shape::sphere) return std::max(0.0, (p - center).norm() - radius);
    const Vec3 d = ((p - center).cwiseAbs() - half_extents).cwiseMax(0.0);
    return d.norm();
  }

  /// Constant-velocity (or ballistic, for falling objects) extrapolation.
  ObstacleSnapshot predict(double dt) const {
    ObstacleSnapshot s = *this;
    s.center = center + velocity * dt + Vec3(0.0, 0.0, -0.5 * gravity * dt * dt);
    s.velocity = velocity + Vec3(0.0, 0.0, -gravity * dt);
    return s;
  }

  /// Lowest point above ground: object leaves the world when it touches down.
  double bottom() const { return shape == Shape::sphere ? center.z() - radius : center.z() - half_extents.z(); }
};

class World {
 public:
  World() = default;
  explicit World(ScenarioConfig config) : config_(std::move(config)) {
    config_.validate();
    for (const auto& o : config_.obstacles) {
      Runtime r;
      r.released = o.kind != ObstacleKind::falling_object;
      r.release_time = o.kind == ObstacleKind::falling_object && !o.aimed ? o.spawn_time : 0.0;
      r.drop_position = o.position;
      runtime_.push_back(r);
    }
  }

  const ScenarioConfig& config() const { return config_; }
  double time() const { return time_; }

  /// Obstacles currently present (falling objects only between release and touchdown).
  std::vector<ObstacleSnapshot> active() const {
    std::vector<ObstacleSnapshot> out;
    for (std::size_t i = 0; i < config_.obstacles.size(); ++i) {
      if (auto s = snapshot(i)) out.push_back(*s);
    }
    return out;
  }

  std::vector<ObstacleSnapshot> statics() const {
    std::vector<ObstacleSnapshot> out;
    for (std::size_t i = 0; i < config_.obstacles.size(); ++i) {
      if (config_.obstacles[i].kind == ObstacleKind::static_box) out.push_back(*snapshot(i));
    }
    return out;
  }

  std::optional<ObstacleSnapshot> snapshot(std::size_t i) const {
    const auto& o = config_.obstacles.at(i);
    const auto& r = runtime_.at(i);
    ObstacleSnapshot s;
    s.id = i;
    s.kind = o.kind;
    s.shape = o.shape();
    s.half_extents = o.half_extents;
    s.radius = o.radius;
    switch (o.kind) {
      case ObstacleKind::static_box:
        s.center = o.position;
        return s;
      case ObstacleKind::moving_vehicle:
        s.center = o.position + o.velocity * time_;
        s.velocity = o.velocity;
        return s;
      case ObstacleKind::other_uav:
        s.center = loop_position(o, time_);
        s.velocity = loop_velocity(o, time_);
        return s;
      case ObstacleKind::falling_object: {
        const bool released = o.aimed ? r.released : time_ + 1e-9 >= o.spawn_time;
        if (!released || r.landed) return std::nullopt;
        const double tau = time_ - r.release_time;
        s.center = r.drop_position - Vec3(0.0, 0.0, 0.5 * o.gravity * tau * tau);
        s.velocity = Vec3(0.0, 0.0, -o.gravity * tau);
        s.gravity = o.gravity;
        return s;
      }
    }
    return std::nullopt;
  }

  /// Advances obstacle kinematics by dt. `uav` drives aimed releases.
  void step(double dt, const UAVState* uav = nullptr) {
    if (!(dt > 0.0)) throw DomainError("dt must be positive");
    time_ += dt;
    for (std::size_t i = 0; i < config_.obstacles.size(); ++i) {
      const auto& o = config_.obstacles[i];
      auto& r = runtime_[i];
      if (o.kind != ObstacleKind::falling_object) continue;
      if (o.aimed && !r.released && uav != nullptr) try_release(o, r, *uav);
      if (auto s = snapshot(i); s && s->bottom() <= 0.0) r.landed = true;
    }
  }

  /// Released and landed flags, for trace event tags.
  bool released(std::size_t i) const {
    const auto& o = config_.obstacles.at(i);
    if (o.kind != ObstacleKind::falling_object) return true;
    return o.aimed ? runtime_.at(i).released : time_ + 1e-9 >= o.spawn_time;
  }

 private:
  struct Runtime {
    bool released = false;
    bool landed = false;
    double release_time = 0.0;
    Vec3 drop_position = Vec3::Zero();
  };

  void try_release(const ObstacleSpec& o, Runtime& r, const UAVState& uav) {
    const double drop = o.position.z() - uav.position.z();
    if (drop <= 0.0) return;
    const double fall = std::sqrt(2.0 * drop / o.gravity);
    const Vec3 predicted = uav.position + uav.velocity * fall;
    const Vec3 offset = horizontal(predicted - o.position);
    const Vec3 to_spawn = horizontal(o.position - uav.position);
    if (offset.norm() > o.aim_radius || to_spawn.dot(horizontal(uav.velocity)) <= 0.0) return;
    r.released = true;
    r.release_time = time_;
    r.drop_position = Vec3(predicted.x(), predicted.y(), o.position.z());
  }

  static double loop_length(const ObstacleSpec& o) {
    double len = 0.0;
    for (std::size_t i = 0; i < o.waypoints.size(); ++i) {
      len += (o.waypoints[(i + 1) % o.waypoints.size()] - o.waypoints[i]).norm();
    }
    return len;
  }

  static std::pair<std::size_t, double> loop_locate(const ObstacleSpec& o, double t) {
    const double len = loop_length(o);
    if (len <= 0.0 || o.speed <= 0.0) return {0, 0.0};
    double s = std::fmod(o.speed * t, len);
    for (std::size_t i = 0; i < o.waypoints.size(); ++i) {
      const double seg = (o.waypoints[(i + 1) % o.waypoints.size()] - o.waypoints[i]).norm();
      if (s <= seg && seg > 0.0) return {i, s / seg};
      s -= seg;
    }
    return {0, 0.0};
  }

  static Vec3 loop_position(const ObstacleSpec& o, double t) {
    auto [i, u] = loop_locate(o, t);
    const Vec3& a = o.waypoints[i];
    const Vec3& b = o.waypoints[(i + 1) % o.waypoints.size()];
    return a + u * (b - a);
  }

  static Vec3 loop_velocity(const ObstacleSpec& o, double t) {
    if (o.waypoints.size() < 2 || o.speed <= 0.0) return Vec3::Zero();
    auto [i, u] = loop_locate(o, t);
    const Vec3 d = o.waypoints[(i + 1) % o.waypoints.size()] - o.waypoints[i];
    return d.norm() > 0.0 ? Vec3(d.normalized() * o.speed) : Vec3(Vec3::Zero());
  }

  ScenarioConfig config_;
  std::vector<Runtime> runtime_;
  double time_ = 0.0;
};

inline World step_world(World world, double dt, const UAVState* uav = nullptr) {
  world.step(dt, uav);
  return world;
}

/// Active obstacles whose surface lies within `range` of the UAV.
inline std::vector<ObstacleSnapshot> sense(const World& world, const Vec3& uav, double range) {
  if (!(range > 0.0)) throw DomainError("sensing range must be positive");
  std::vector<ObstacleSnapshot> out;
  for (const auto& s : world.active()) {
    if (s.distance(uav) <= range) out.push_back(s);
  }
  return out;
}

inline double min_distance(const Vec3& uav, const World& world) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& s : world.active()) d = std::min(d, s.distance(uav));
  return d;
}

inline constexpr double kCollisionRadius = 0.25;  // about half the airframe diagonal

inline bool check_collision(const Vec3& uav, const World& world, double collision_radius = kCollisionRadius) {
  return min_distance(uav, world) <= collision_radius;
}

// --- static-layout feasibility -------------------------------------------------

/// 4-connected flood fill on a horizontal grid at the start altitude: is
/// there a route from start to goal keeping `clearance` from every static box?
inline bool corridor_exists(const ScenarioConfig& cfg, const std::vector<ObstacleSnapshot>& statics,
                            double clearance, double resolution = 0.5) {
  const double margin = 15.0;
  const double x0 = std::max(0.0, std::min(cfg.start.x(), cfg.goal.x()) - margin);
  const double y0 = std::max(0.0, std::min(cfg.start.y(), cfg.goal.y()) - margin);
  const double x1 = std::min(cfg.area_x, std::max(cfg.start.x(), cfg.goal.x()) + margin);
  const double y1 = std::min(cfg.area_y, std::max(cfg.start.y(), cfg.goal.y()) + margin);
  const int nx = static_cast<int>(std::floor((x1 - x0) / resolution)) + 1;
  const int ny = static_cast<int>(std::floor((y1 - y0) / resolution)) + 1;
  const double z = cfg.start.z();
  auto cell_of = [&](const Vec3& p) {
    return std::pair<int, int>{std::clamp(static_cast<int>(std::lround((p.x() - x0) / resolution)), 0, nx - 1),
                               std::clamp(static_cast<int>(std::lround((p.y() - y0) / resolution)), 0, ny - 1)};
  };
  auto free = [&](int i, int j) {
    const Vec3 p(x0 + i * resolution, y0 + j * resolution, z);
    for (const auto& s : statics) {
      if (s.distance(p) < clearance) return false;
    }
    return true;
  };
  auto [si, sj] = cell_of(cfg.start);
  auto [gi, gj] = cell_of(cfg.goal);
  if (!free(si, sj) || !free(gi, gj)) return false;
  std::vector<char> seen(static_cast<std::size_t>(nx * ny), 0);
  std::queue<std::pair<int, int>> q;
  q.push({si, sj});
  seen[static_cast<std::size_t>(sj * nx + si)] = 1;
  const int di[4] = {1, -1, 0, 0};
  const int dj[4] = {0, 0, 1, -1};
  while (!q.empty()) {
    auto [i, j] = q.front();
    q.pop();
    if (i == gi && j == gj) return true;
    for (int k = 0; k < 4; ++k) {
      const int a = i + di[k];
      const int b = j + dj[k];
      if (a < 0 || b < 0 || a >= nx || b >= ny) continue;
      auto& flag = seen[static_cast<std::size_t>(b * nx + a)];
      if (flag || !free(a, b)) continue;
      flag = 1;
      q.push({a, b});
    }
  }
  return false;
}

// --- scenario generation -------------------------------------------------------

namespace detail {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::vector<ObstacleSpec> random_layout(const ScenarioConfig& cfg, std::mt19937_64& rng) {
  const Vec3 start = cfg.start;
  const Vec3 goal = cfg.goal;
  const Vec3 line = horizontal(goal - start);
  const double len = line.norm();
  const Vec3 dir = len > 0.0 ? Vec3(line / len) : Vec3(1.0, 0.0, 0.0);
  const Vec3 normal(-dir.y(), dir.x(), 0.0);
  const double z0 = start.z();
  const bool high = cfg.complexity == Complexity::high_dynamic;
  auto along = [&](double f, double lateral) { return Vec3(start + f * len * dir + lateral * normal); };

  std::vector<ObstacleSpec> boxes;
  const int n_boxes = high ? 4 : 2;
  for (int attempt = 0; attempt < 200; ++attempt) {
    boxes.clear();
    for (int b = 0; b < n_boxes; ++b) {
      ObstacleSpec o;
      o.kind = ObstacleKind::static_box;
      const double f = b == 0 ? uniform(rng, 0.35, 0.65) : uniform(rng, 0.15, 0.85);
      const double lat = b == 0 ? uniform(rng, -1.5, 1.5)
                                : (uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0) * uniform(rng, 6.0, 11.0);
      const double height = uniform(rng, 10.0, 20.0);
      Vec3 c = along(f, lat);
      c.z() = height / 2.0;
      o.position = c;
      o.half_extents = Vec3(uniform(rng, 2.0, 4.0), uniform(rng, 2.0, 4.0), height / 2.0);
      boxes.push_back(o);
    }
    bool ok = true;
    std::vector<ObstacleSnapshot> snaps;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      ObstacleSnapshot s;
      s.shape = Shape::box;
      s.center = boxes[i].position;
      s.half_extents = boxes[i].half_extents;
      if (s.distance(start) < 6.0 || s.distance(goal) < 6.0) ok = false;
      for (const auto& prev : snaps) {
        const Vec3 gap = ((s.center - prev.center).cwiseAbs() - s.half_extents - prev.half_extents).cwiseMax(0.0);
        if (horizontal(gap).norm() < 8.0) ok = false;
      }
      snaps.push_back(s);
    }
    // Rejection: keep only layouts with a 3 m corridor, which covers every
    // clearance the planner asks for.
    if (ok && corridor_exists(cfg, snaps, 3.5)) break;
    if (attempt == 199) boxes.resize(1);
  }

  auto box_clear = [&](const Vec3& p, double margin) {
    for (const auto& b : boxes) {
      const Vec3 d = (horizontal(p - b.position).cwiseAbs() - horizontal(b.half_extents)).cwiseMax(0.0);
      if (d.norm() < margin) return false;
    }
    return true;
  };
  auto free_fraction = [&](double lo, double hi, double margin) {
    double f = uniform(rng, lo, hi);
    for (int k = 0; k < 50 && !box_clear(along(f, 0.0), margin); ++k) f = uniform(rng, lo, hi);
    return f;
  };

  std::vector<ObstacleSpec> out = boxes;
  const int n_vehicles = high ? 3 : 1;
  for (int v = 0; v < n_vehicles; ++v) {
    ObstacleSpec o;
    o.kind = ObstacleKind::moving_vehicle;
    const double f = free_fraction(0.2, 0.85, 5.0);
    const double angle = uniform(rng, -0.5, 0.5);
    const double sign = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
    const Vec3 lane = sign * (std::cos(angle) * normal + std::sin(angle) * dir);
    const double speed = uniform(rng, 5.0, 10.0);
    const double t_cross = uniform(rng, 1.5, 12.0);
    Vec3 c = along(f, 0.0) - lane * speed * t_cross;
    c.z() = 1.25;
    o.position = c;
    o.velocity = lane * speed;
    o.half_extents = std::abs(lane.x()) > std::abs(lane.y()) ? Vec3(2.25, 1.0, 1.25) : Vec3(1.0, 2.25, 1.25);
    out.push_back(o);
  }
  const int n_falling = high ? 2 : 1;
  for (int k = 0; k < n_falling; ++k) {
    ObstacleSpec o;
    o.kind = ObstacleKind::falling_object;
    const double lo = high ? (k == 0 ? 0.2 : 0.55) : 0.25;
    const double hi = high ? (k == 0 ? 0.45 : 0.8) : 0.75;
    Vec3 p = along(free_fraction(lo, hi, 6.0), 0.0);
    p.z() = z0 + uniform(rng, 9.0, 13.0);
    o.position = p;
    o.radius = 0.5;
    o.aimed = true;
    o.aim_radius = 6.0;
    out.push_back(o);
  }
  if (high) {
    for (int k = 0; k < 2; ++k) {
      ObstacleSpec o;
      o.kind = ObstacleKind::other_uav;
      const double f = free_fraction(0.2, 0.8, 4.0);
      const Vec3 mid = along(f, 0.0);
      const double half = uniform(rng, 8.0, 12.0);
      o.waypoints = {Vec3(mid - half * normal), Vec3(mid + half * normal)};
      for (auto& w : o.waypoints) w.z() = z0;
      if (uniform(rng, 0.0, 1.0) < 0.5) std::swap(o.waypoints[0], o.waypoints[1]);
      o.radius = 0.3;
      o.speed = uniform(rng, 3.0, 5.0);
      out.push_back(o);
    }
  }
  return out;
}

}  // namespace detail

/// Seeded mission: start somewhere in the area, goal 34-42 m away.
inline ScenarioConfig make_random_scenario(Complexity complexity, std::uint64_t seed, double altitude = 2.0) {
  ScenarioConfig cfg;
  cfg.complexity = complexity;
  cfg.seed = seed;
  cfg.random_layout = true;
  std::mt19937_64 rng(seed ^ 0xA5A5A5A5ULL);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const Vec3 s(detail::uniform(rng, 40.0, 260.0), detail::uniform(rng, 40.0, 260.0), altitude);
    const double heading = detail::uniform(rng, -M_PI, M_PI);
    const double dist = detail::uniform(rng, 34.0, 42.0);
    const Vec3 g = s + dist * Vec3(std::cos(heading), std::sin(heading), 0.0);
    cfg.start = s;
    cfg.goal = g;
    if (g.x() > 10.0 && g.x() < cfg.area_x - 10.0 && g.y() > 10.0 && g.y() < cfg.area_y - 10.0) break;
  }
  return cfg;
}

/// Builds the world. Random layouts are drawn from the seed and appended to
/// any explicit obstacles.
inline World spawn_scenario(ScenarioConfig config) {
  config.validate();
  if (config.random_layout) {
    std::mt19937_64 rng(config.seed);
    auto extra = detail::random_layout(config, rng);
    config.obstacles.insert(config.obstacles.end(), extra.begin(), extra.end());
  }
  World world(config);
  for (const auto& s : world.active()) {
    if (s.distance(config.start) <= kCollisionRadius || s.distance(config.goal) <= kCollisionRadius) {
      throw InvalidScenario("start or goal lies inside an obstacle");
    }
  }
  return world;
}

// --- JSON ----------------------------------------------------------------------

inline nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

inline Vec3 json_vec(const nlohmann::json& j) {
  const auto a = j.get<std::vector<double>>();
  if (a.size() != 3) throw InvalidScenario("expected a 3-vector");
  return {a[0], a[1], a[2]};
}

inline nlohmann::json to_json(const ObstacleSpec& o) {
  nlohmann::json j;
  j["kind"] = to_string(o.kind);
  switch (o.kind) {
    case ObstacleKind::static_box:
      j["center"] = vec_json(o.position);
      j["half_extents"] = vec_json(o.half_extents);
      break;
    case ObstacleKind::moving_vehicle:
      j["center"] = vec_json(o.position);
      j["half_extents"] = vec_json(o.half_extents);
      j["velocity"] = vec_json(o.velocity);
      break;
    case ObstacleKind::falling_object:
      j["spawn_position"] = vec_json(o.position);
      j["radius"] = o.radius;
      j["spawn_time"] = o.spawn_time;
      j["gravity"] = o.gravity;
      j["aimed"] = o.aimed;
      j["aim_radius"] = o.aim_radius;
      break;
    case ObstacleKind::other_uav: {
      auto w = nlohmann::json::array();
      for (const auto& p : o.waypoints) w.push_back(vec_json(p));
      j["waypoints"] = w;
      j["radius"] = o.radius;
      j["speed"] = o.speed;
      break;
    }
  }
  return j;
}

inline nlohmann::json to_json(const ScenarioConfig& c) {
  nlohmann::json j;
  j["schema"] = 1;
  j["area"] = {c.area_x, c.area_y};
  j["ceiling"] = c.ceiling;
  j["complexity"] = to_string(c.complexity);
  j["layout"] = c.random_layout ? "random" : "explicit";
  j["start"] = vec_json(c.start);
  j["goal"] = vec_json(c.goal);
  j["seed"] = c.seed;
  j["dt"] = c.dt;
  auto obs = nlohmann::json::array();
  for (const auto& o : c.obstacles) obs.push_back(to_json(o));
  j["obstacles"] = obs;
  return j;
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                           const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw InvalidScenario(where + ": unknown key '" + key + "'");
  }
}

}  // namespace detail

inline ObstacleSpec obstacle_from_json(const nlohmann::json& j) {
  ObstacleSpec o;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "static_box") {
    detail::reject_unknown(j, {"kind", "center", "half_extents"}, "static_box");
    o.kind = ObstacleKind::static_box;
    o.position = json_vec(j.at("center"));
    o.half_extents = json_vec(j.at("half_extents"));
  } else if (kind == "moving_vehicle") {
    detail::reject_unknown(j, {"kind", "center", "half_extents", "velocity"}, "moving_vehicle");
    o.kind = ObstacleKind::moving_vehicle;
    o.position = json_vec(j.at("center"));
    o.half_extents = json_vec(j.at("half_extents"));
    o.velocity = json_vec(j.at("velocity"));
  } else if (kind == "falling_object") {
    detail::reject_unknown(j, {"kind", "spawn_position", "radius", "spawn_time", "gravity", "aimed", "aim_radius"},
                           "falling_object");
    o.kind = ObstacleKind::falling_object;
    o.position = json_vec(j.at("spawn_position"));
    o.radius = j.at("radius").get<double>();
    o.spawn_time = j.value("spawn_time", 0.0);
    o.gravity = j.value("gravity", kGravity);
    o.aimed = j.value("aimed", false);
    o.aim_radius = j.value("aim_radius", 4.0);
  } else if (kind == "other_uav") {
    detail::reject_unknown(j, {"kind", "waypoints", "radius", "speed"}, "other_uav");
    o.kind = ObstacleKind::other_uav;
    for (const auto& w : j.at("waypoints")) o.waypoints.push_back(json_vec(w));
    o.radius = j.at("radius").get<double>();
    o.speed = j.at("speed").get<double>();
  } else {
    throw InvalidScenario("unknown obstacle kind '" + kind + "'");
  }
  o.validate();
  return o;
}

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  try {
    detail::reject_unknown(j, {"schema", "area", "ceiling", "complexity", "layout", "start", "goal", "seed", "dt",
                               "obstacles"},
                           "scenario");
    if (j.at("schema").get<int>() != 1) throw InvalidScenario("unsupported scenario schema");
    ScenarioConfig c;
    if (j.contains("area")) {
      const auto a = j.at("area").get<std::vector<double>>();
      if (a.size() != 2) throw InvalidScenario("area must be [x, y]");
      c.area_x = a[0];
      c.area_y = a[1];
    }
    c.ceiling = j.value("ceiling", c.ceiling);
    const auto cx = j.value("complexity", std::string("low_dynamic"));
    if (cx == "low_dynamic") {
      c.complexity = Complexity::low_dynamic;
    } else if (cx == "high_dynamic") {
      c.complexity = Complexity::high_dynamic;
    } else {
      throw InvalidScenario("unknown complexity '" + cx + "'");
    }
    const auto layout = j.value("layout", std::string("explicit"));
    if (layout != "random" && layout != "explicit") throw InvalidScenario("layout must be random|explicit");
    c.random_layout = layout == "random";
    c.start = json_vec(j.at("start"));
    c.goal = json_vec(j.at("goal"));
    c.seed = j.value("seed", std::uint64_t{0});
    c.dt = j.value("dt", 0.1);
    if (j.contains("obstacles")) {
      for (const auto& o : j.at("obstacles")) c.obstacles.push_back(obstacle_from_json(o));
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidScenario(std::string("malformed scenario JSON: ") + e.what());
  }
}

}  // namespace aeps
