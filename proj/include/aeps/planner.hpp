#pragma once

// Global planning (grid A* + shortcutting + fillet rounding), time
// parameterisation, action-envelope enforcement and reactive avoidance
// amendments, all scaled by an aggressiveness gain derived from surge power.

#include "aeps/common.hpp"
#include "aeps/plant.hpp"
#include "aeps/trajectory.hpp"
#include "aeps/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

namespace aeps {

/// Action-mode envelope: clearance, curvature, speed and mission distance.
struct Envelope {
  double clearance_min = 1.0;  // m
  double clearance_max = 3.0;  // m
  double curvature_cap = 1.0;  // 1/m
  double speed_min = 3.0;      // m/s
  double speed_max = 8.0;      // m/s
  double distance_min = 30.0;  // m
  double distance_max = 45.0;  // m
};

enum class Mode { normal, agility_enhanced };

inline const char* to_string(Mode m) { return m == Mode::normal ? "normal" : "agility_enhanced"; }

/// Planner gains for one aggressiveness level. Every field is a linear
/// function of lambda spanning the envelope.
struct PlanParams {
  Mode mode = Mode::normal;
  double lambda = 0.0;
  double target_clearance = 1.0;  // 1 + 2 lambda
  double cruise_speed = 3.0;      // 3 + 5 lambda
  double evade_accel = 6.0;       // full-aggressiveness escape acceleration
  double lateral_accel = 4.5;     // turn budget, 4.5 (1 + lambda)

  static PlanParams from_lambda(Mode mode, double lambda, const Envelope& env = {}) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("aggressiveness must be in [0, 1]");
    PlanParams p;
    p.mode = mode;
    p.lambda = lambda;
    p.target_clearance = env.clearance_min + (env.clearance_max - env.clearance_min) * lambda;
    p.cruise_speed = env.speed_min + (env.speed_max - env.speed_min) * lambda;
    p.lateral_accel = 4.5 * (1.0 + lambda);
    return p;
  }

  /// Curvature allowed for turns and evasive arcs.
  double curvature_limit(const Envelope& env) const { return env.curvature_cap * (0.5 + 0.5 * lambda); }
  double escape_accel() const { return evade_accel * (0.5 + 0.5 * lambda); }
  double boosted_speed(const Envelope& env) const {
    return std::min(env.speed_max, cruise_speed * (1.0 + 0.25 * lambda));
  }
};

/// Aggressiveness from the deliverable surge power; normal mode ignores power.
inline double aggressiveness(const PlantState& plant, Mode mode) {
  if (mode == Mode::normal) return 0.0;
  const double reference = plant.spec.ultracap.max_output;
  return std::clamp(available_surge(plant) / reference, 0.0, 1.0);
}

// --- geometric paths -----------------------------------------------------------

/// Densely sampled polyline with cumulative arc length and an analytic
/// curvature value per point (0 on straights, 1/R on arcs).
struct GeometricPath {
  std::vector<Vec3> points;
  std::vector<double> s;
  std::vector<double> curvature;

  double length() const { return s.empty() ? 0.0 : s.back(); }
  bool empty() const { return points.size() < 2; }

  static GeometricPath from_points(std::vector<Vec3> pts, std::vector<double> kappa = {}) {
    GeometricPath g;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (!g.points.empty() && (pts[i] - g.points.back()).norm() < 1e-9) continue;
      g.points.push_back(pts[i]);
      g.curvature.push_back(kappa.empty() ? 0.0 : kappa[i]);
    }
    g.s.assign(g.points.size(), 0.0);
    for (std::size_t i = 1; i < g.points.size(); ++i) g.s[i] = g.s[i - 1] + (g.points[i] - g.points[i - 1]).norm();
    return g;
  }

  std::size_t segment_at(double arc) const {
    auto it = std::upper_bound(s.begin(), s.end(), arc);
    if (it == s.begin()) return 0;
    return std::min<std::size_t>(static_cast<std::size_t>(it - s.begin()) - 1, points.size() - 2);
  }

  Vec3 point_at(double arc) const {
    if (arc <= 0.0) return points.front();
    if (arc >= length()) return points.back();
    const std::size_t i = segment_at(arc);
    const double seg = s[i + 1] - s[i];
    const double u = seg > 0.0 ? (arc - s[i]) / seg : 0.0;
    return points[i] + u * (points[i + 1] - points[i]);
  }

  double curvature_at(double arc) const { return curvature[std::min(segment_at(arc) + 1, points.size() - 1)]; }

  Vec3 tangent_at(double arc) const {
    const std::size_t i = segment_at(std::clamp(arc, 0.0, length()));
    return (points[i + 1] - points[i]).normalized();
  }

  /// Closest point search on segments whose start lies in [from, from + window].
  double project(const Vec3& p, double from = 0.0, double window = std::numeric_limits<double>::infinity()) const {
    double best = from;
    double best_d = std::numeric_limits<double>::infinity();
    const std::size_t i0 = segment_at(std::max(0.0, from));
    for (std::size_t i = i0; i + 1 < points.size(); ++i) {
      if (s[i] > from + window) break;
      const Vec3 ab = points[i + 1] - points[i];
      const double len2 = ab.squaredNorm();
      const double u = len2 > 0.0 ? std::clamp((p - points[i]).dot(ab) / len2, 0.0, 1.0) : 0.0;
      const double d = (points[i] + u * ab - p).norm();
      if (d < best_d) {
        best_d = d;
        best = s[i] + u * (s[i + 1] - s[i]);
      }
    }
    return std::max(best, from);
  }

  /// Portion of the path from arc length `from` to the end.
  GeometricPath tail(double from) const {
    std::vector<Vec3> pts{point_at(from)};
    std::vector<double> k{curvature_at(from)};
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (s[i] > from + 1e-9) {
        pts.push_back(points[i]);
        k.push_back(curvature[i]);
      }
    }
    if (pts.size() < 2) {
      pts.push_back(points.back());
      k.push_back(0.0);
    }
    return from_points(std::move(pts), std::move(k));
  }
};

inline double static_clearance(const Vec3& p, const std::vector<ObstacleSnapshot>& statics) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& o : statics) d = std::min(d, o.distance(p));
  return d;
}

/// Samples the segment every `step` metres.
inline bool segment_clear(const Vec3& a, const Vec3& b, const std::vector<ObstacleSnapshot>& statics,
                          double clearance, double step = 0.25) {
  const double len = (b - a).norm();
  const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
  for (int i = 0; i <= n; ++i) {
    if (static_clearance(a + (b - a) * (static_cast<double>(i) / n), statics) < clearance) return false;
  }
  return true;
}

// --- grid search ---------------------------------------------------------------

struct GridSpec {
  double resolution = 1.0;
  double margin = 25.0;
  double z_min = 1.0;
  double z_max = 6.0;
};

/// A* over a 26-connected 3-D grid; cells nearer than `clearance` to a static
/// box are blocked (the start and goal cells are always allowed).
inline std::optional<std::vector<Vec3>> grid_search(const ScenarioConfig& cfg,
                                                    const std::vector<ObstacleSnapshot>& statics, const Vec3& start,
                                                    const Vec3& goal, double clearance, const GridSpec& grid = {}) {
  const double res = grid.resolution;
  const Vec3 lo(std::max(0.0, std::min(start.x(), goal.x()) - grid.margin),
                std::max(0.0, std::min(start.y(), goal.y()) - grid.margin),
                std::min({grid.z_min, start.z(), goal.z()}));
  const Vec3 hi(std::min(cfg.area_x, std::max(start.x(), goal.x()) + grid.margin),
                std::min(cfg.area_y, std::max(start.y(), goal.y()) + grid.margin),
                std::max({grid.z_max, start.z(), goal.z()}));
  const int nx = static_cast<int>(std::floor((hi.x() - lo.x()) / res)) + 1;
  const int ny = static_cast<int>(std::floor((hi.y() - lo.y()) / res)) + 1;
  const int nz = static_cast<int>(std::floor((hi.z() - lo.z()) / res)) + 1;
  const auto total = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  auto index = [&](int i, int j, int k) {
    return (static_cast<std::size_t>(k) * static_cast<std::size_t>(ny) + static_cast<std::size_t>(j)) *
               static_cast<std::size_t>(nx) +
           static_cast<std::size_t>(i);
  };
  auto center = [&](int i, int j, int k) { return Vec3(lo.x() + i * res, lo.y() + j * res, lo.z() + k * res); };
  auto cell_of = [&](const Vec3& p) {
    return std::array<int, 3>{std::clamp(static_cast<int>(std::lround((p.x() - lo.x()) / res)), 0, nx - 1),
                              std::clamp(static_cast<int>(std::lround((p.y() - lo.y()) / res)), 0, ny - 1),
                              std::clamp(static_cast<int>(std::lround((p.z() - lo.z()) / res)), 0, nz - 1)};
  };
  const auto s = cell_of(start);
  const auto g = cell_of(goal);
  const std::size_t si = index(s[0], s[1], s[2]);
  const std::size_t gi = index(g[0], g[1], g[2]);

  // Occupancy: only boxes near the search volume matter.
  std::vector<ObstacleSnapshot> near;
  for (const auto& o : statics) {
    const Vec3 d = ((0.5 * (lo + hi) - o.center).cwiseAbs() - 0.5 * (hi - lo) - o.half_extents).cwiseMax(0.0);
    if (d.norm() <= clearance + res) near.push_back(o);
  }
  std::vector<char> blocked(total, 0);
  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        blocked[index(i, j, k)] = static_clearance(center(i, j, k), near) < clearance ? 1 : 0;
      }
    }
  }
  blocked[si] = 0;
  blocked[gi] = 0;

  std::vector<double> cost(total, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> parent(total, std::numeric_limits<std::size_t>::max());
  std::vector<char> closed(total, 0);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  const Vec3 goal_c = center(g[0], g[1], g[2]);
  cost[si] = 0.0;
  open.push({(center(s[0], s[1], s[2]) - goal_c).norm(), si});
  while (!open.empty()) {
    const auto [f, cur] = open.top();
    open.pop();
    if (closed[cur]) continue;
    closed[cur] = 1;
    if (cur == gi) break;
    const int ci = static_cast<int>(cur % static_cast<std::size_t>(nx));
    const int cj = static_cast<int>((cur / static_cast<std::size_t>(nx)) % static_cast<std::size_t>(ny));
    const int ck = static_cast<int>(cur / (static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny)));
    for (int dk = -1; dk <= 1; ++dk) {
      for (int dj = -1; dj <= 1; ++dj) {
        for (int di = -1; di <= 1; ++di) {
          if (di == 0 && dj == 0 && dk == 0) continue;
          const int a = ci + di, b = cj + dj, c = ck + dk;
          if (a < 0 || b < 0 || c < 0 || a >= nx || b >= ny || c >= nz) continue;
          const std::size_t nb = index(a, b, c);
          if (blocked[nb] || closed[nb]) continue;
          // Climbing costs more than level flight.
          const double step = res * std::sqrt(static_cast<double>(di * di + dj * dj) + 2.25 * dk * dk);
          const double nc = cost[cur] + step;
          if (nc < cost[nb]) {
            cost[nb] = nc;
            parent[nb] = cur;
            open.push({nc + (center(a, b, c) - goal_c).norm(), nb});
          }
        }
      }
    }
  }
  if (!closed[gi]) return std::nullopt;
  std::vector<Vec3> cells;
  for (std::size_t c = gi; c != std::numeric_limits<std::size_t>::max(); c = parent[c]) {
    const int i = static_cast<int>(c % static_cast<std::size_t>(nx));
    const int j = static_cast<int>((c / static_cast<std::size_t>(nx)) % static_cast<std::size_t>(ny));
    const int k = static_cast<int>(c / (static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny)));
    cells.push_back(center(i, j, k));
  }
  std::reverse(cells.begin(), cells.end());
  cells.front() = start;
  cells.back() = goal;
  return cells;
}

/// Greedy line-of-sight shortcutting. Neighbouring nodes always connect.
inline std::vector<Vec3> shortcut(const std::vector<Vec3>& nodes, const std::vector<ObstacleSnapshot>& statics,
                                  double clearance) {
  if (nodes.size() <= 2) return nodes;
  std::vector<Vec3> out{nodes.front()};
  std::size_t i = 0;
  while (i + 1 < nodes.size()) {
    std::size_t j = nodes.size() - 1;
    while (j > i + 1 && !segment_clear(nodes[i], nodes[j], statics, clearance)) --j;
    out.push_back(nodes[j]);
    i = j;
  }
  return out;
}

/// Rounds polyline corners with circular arcs of radius `radius` (shrunk
/// where segments are too short), sampled every `ds` metres.
inline GeometricPath fillet(const std::vector<Vec3>& poly, double radius, double ds = 0.05) {
  if (poly.size() < 2) throw DomainError("fillet needs at least two points");
  std::vector<Vec3> pts{poly.front()};
  std::vector<double> kappa{0.0};
  auto straight_to = [&](const Vec3& target) {
    const Vec3 from = pts.back();
    const double len = (target - from).norm();
    const int n = static_cast<int>(std::ceil(len / ds));
    for (int i = 1; i <= n; ++i) {
      pts.push_back(from + (target - from) * (static_cast<double>(i) / n));
      kappa.push_back(0.0);
    }
  };
  double used_prev = 0.0;  // tangent length consumed at the start of the current segment
  for (std::size_t v = 1; v + 1 < poly.size(); ++v) {
    const Vec3 a = (poly[v] - poly[v - 1]).normalized();
    const Vec3 b = (poly[v + 1] - poly[v]).normalized();
    const double cosphi = std::clamp(a.dot(b), -1.0, 1.0);
    const double phi = std::acos(cosphi);
    if (phi < 1e-6) {
      used_prev = 0.0;
      continue;
    }
    const double len_in = (poly[v] - poly[v - 1]).norm() - used_prev;
    const double len_out = (poly[v + 1] - poly[v]).norm() * (v + 2 == poly.size() ? 1.0 : 0.5);
    double t = radius * std::tan(phi / 2.0);
    t = std::min({t, len_in, len_out});
    const double r = t / std::tan(phi / 2.0);
    const Vec3 p1 = poly[v] - a * t;
    straight_to(p1);
    Vec3 n = (b - a) - (b - a).dot(a) * a;
    n.normalize();
    const Vec3 c = p1 + r * n;
    const int steps = std::max(2, static_cast<int>(std::ceil(r * phi / ds)));
    for (int k = 1; k <= steps; ++k) {
      const double psi = phi * k / steps;
      pts.push_back(c + r * (-n * std::cos(psi) + a * std::sin(psi)));
      kappa.push_back(1.0 / r);
    }
    used_prev = t;
  }
  straight_to(poly.back());
  return GeometricPath::from_points(std::move(pts), std::move(kappa));
}

// --- time parameterisation -------------------------------------------------------

struct SpeedLimits {
  double cruise = 3.0;
  double floor = 3.0;           // lowest speed a turn may force
  double lateral_accel = 4.5;   // v^2 kappa budget
  double longitudinal_accel = 4.5;
};

/// Speed profile along the path (cruise, slowed where curvature demands,
/// never below `floor`), integrated and sampled every `dt`. The schedule is
/// stretched so the final sample lands exactly on the path end.
inline Trajectory time_parameterize(const GeometricPath& path, double v_start, double v_end,
                                    const SpeedLimits& lim, double dt, double t0 = 0.0) {
  if (path.empty()) throw InvalidTrajectory("cannot time-parameterise an empty path");
  if (!(dt > 0.0)) throw DomainError("dt must be positive");
  const std::size_t n = path.points.size();
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double k = path.curvature[i];
    double cap = lim.cruise;
    if (k > 1e-9) cap = std::min(cap, std::max(lim.floor, std::sqrt(lim.lateral_accel / k)));
    v[i] = cap;
  }
  v.front() = std::min(v.front(), std::max(v_start, 0.1));
  v.back() = std::min(v.back(), std::max(v_end, 0.1));
  for (std::size_t i = 1; i < n; ++i) {
    const double ds = path.s[i] - path.s[i - 1];
    v[i] = std::min(v[i], std::sqrt(v[i - 1] * v[i - 1] + 2.0 * lim.longitudinal_accel * ds));
  }
  for (std::size_t i = n - 1; i-- > 0;) {
    const double ds = path.s[i + 1] - path.s[i];
    v[i] = std::min(v[i], std::sqrt(v[i + 1] * v[i + 1] + 2.0 * lim.longitudinal_accel * ds));
  }
  // A vehicle already moving cannot shed speed faster than the braking limit,
  // even if that overshoots the turn budget.
  v.front() = std::max(v.front(), std::min(v_start, lim.cruise));
  for (std::size_t i = 1; i < n; ++i) {
    const double ds = path.s[i] - path.s[i - 1];
    v[i] = std::max(v[i], std::sqrt(std::max(0.0, v[i - 1] * v[i - 1] - 2.0 * lim.longitudinal_accel * ds)));
  }
  std::vector<double> t(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) t[i] = t[i - 1] + 2.0 * (path.s[i] - path.s[i - 1]) / (v[i] + v[i - 1]);
  const double total = t.back();
  const auto steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(total / dt - 1e-9)));
  const double stretch = total / (static_cast<double>(steps) * dt);
  std::vector<Waypoint> out;
  out.reserve(steps + 1);
  std::size_t seg = 0;
  for (std::size_t k = 0; k <= steps; ++k) {
    const double tk = static_cast<double>(k) * dt * stretch;
    while (seg + 2 < n && t[seg + 1] < tk) ++seg;
    const double span = t[seg + 1] - t[seg];
    const double u = span > 0.0 ? std::clamp((tk - t[seg]) / span, 0.0, 1.0) : 0.0;
    out.push_back({path.points[seg] + u * (path.points[seg + 1] - path.points[seg]), t0 + static_cast<double>(k) * dt});
  }
  out.front().position = path.points.front();
  out.back().position = path.points.back();
  return Trajectory(std::move(out));
}

// --- envelope enforcement --------------------------------------------------------

struct EnvelopeReport {
  std::size_t speed_violations = 0;      // samples outside [speed_min, speed_max] on input
  std::size_t curvature_violations = 0;  // samples above the cap on input
  std::size_t residual_violations = 0;   // samples still above the cap on output
};

struct EnvelopeResult {
  Trajectory trajectory;
  EnvelopeReport report;
};

namespace detail {

/// Rotates unit vector h towards unit vector d by at most `max_angle`.
inline Vec3 turn_towards(const Vec3& h, const Vec3& d, double max_angle) {
  const double ang = std::acos(std::clamp(h.dot(d), -1.0, 1.0));
  if (ang <= max_angle) return d;
  Vec3 axis = h.cross(d);
  if (axis.norm() < 1e-12) {
    axis = h.cross(Vec3::UnitZ());
    if (axis.norm() < 1e-12) axis = h.cross(Vec3::UnitX());
  }
  axis.normalize();
  const Vec3 r = h * std::cos(max_angle) + axis.cross(h) * std::sin(max_angle);
  return r.normalized();
}

/// Discrete curvature at a sample whose neighbouring chords have lengths a
/// and b and meet at angle theta (central-difference formula).
inline double chord_curvature(double a, double b, double theta) {
  const double sum = std::sqrt(a * a + b * b + 2.0 * a * b * std::cos(theta));
  return 8.0 * a * b * std::sin(theta) / (sum * sum * sum);
}

inline double max_turn(double a, double b, double cap) {
  double lo = 0.0, hi = M_PI / 2.0;
  if (chord_curvature(a, b, hi) <= cap) return hi;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (chord_curvature(a, b, mid) <= cap ? lo : hi) = mid;
  }
  return lo;
}

inline std::size_t count_above(const std::vector<double>& k, double cap) {
  return static_cast<std::size_t>(std::count_if(k.begin(), k.end(), [cap](double v) { return v > cap * (1.0 + 1e-9); }));
}

/// Re-flies the input path with a turn-rate-limited pursuit so every interior
/// sample's discrete curvature stays under `cap`.
inline Trajectory curvature_limited_follow(const Trajectory& in, const std::vector<double>& speeds, double cap) {
  const double dt = in.sample_interval();
  const auto path = GeometricPath::from_points(in.positions());
  const Vec3 end = path.points.back();
  const double lookahead = 1.5 / cap;
  std::vector<Vec3> out{path.points.front()};
  double progress = 0.0;
  Vec3 heading = (path.point_at(std::min(lookahead, path.length())) - out.back()).normalized();
  double prev_chord = 0.0;
  const std::size_t max_steps = 20 * in.size() + 2000;
  for (std::size_t k = 0; k < max_steps; ++k) {
    const Vec3& p = out.back();
    progress = path.project(p, progress, 4.0 * lookahead + 5.0);
    const std::size_t idx = std::min(k, speeds.size() - 1);
    const double chord = std::max(speeds[idx], 0.5) * dt;
    if (progress >= path.length() - 1e-6 || (p - end).norm() <= chord) {
      if ((p - end).norm() > 1e-9) out.push_back(end);
      break;
    }
    const Vec3 carrot = path.point_at(std::min(progress + std::max(lookahead, 2.0 * chord), path.length()));
    const Vec3 desired = (carrot - p).normalized();
    if (prev_chord > 0.0) {
      heading = turn_towards(heading, desired, max_turn(prev_chord, chord, cap * (1.0 - 1e-6)));
    } else {
      heading = desired;
    }
    out.push_back(p + chord * heading);
    prev_chord = chord;
  }
  return Trajectory::uniform(out, dt, in.start_time());
}

}  // namespace detail

/// Clamps speeds into [speed_min, speed_max] (leading and trailing runs below
/// speed_min are take-off/landing and left alone) by re-timing along the same
/// geometry, then re-smooths any sample whose curvature exceeds the cap.
inline EnvelopeResult enforce_envelope(const Trajectory& traj, const Envelope& env = {}) {
  if (!traj.is_uniform()) throw InvalidTrajectory("envelope enforcement needs a uniformly sampled trajectory");
  const double dt = traj.sample_interval();
  EnvelopeReport report;
  auto speeds = speed_series(traj);
  const std::size_t n = speeds.size();
  std::size_t first = 0;
  while (first < n && speeds[first] < env.speed_min) ++first;
  std::size_t last = n;
  while (last > first && speeds[last - 1] < env.speed_min) --last;

  std::vector<double> target = speeds;
  for (std::size_t i = first; i < last; ++i) {
    if (speeds[i] < env.speed_min - 1e-9 || speeds[i] > env.speed_max + 1e-9) ++report.speed_violations;
    target[i] = std::clamp(speeds[i], env.speed_min, env.speed_max);
  }

  Trajectory current = traj;
  if (report.speed_violations > 0) {
    // Same geometry, new timing: walk the polyline with the clamped speeds.
    const auto path = GeometricPath::from_points(traj.positions());
    std::vector<Vec3> pts{path.points.front()};
    double s = 0.0;
    for (std::size_t k = 1; s < path.length() - 1e-9; ++k) {
      const double v = std::max(target[std::min(k, n - 1)], 1e-3);
      s = std::min(path.length(), s + v * dt);
      pts.push_back(path.point_at(s));
    }
    current = Trajectory::uniform(pts, dt, traj.start_time());
    target = speed_series(current);
    for (auto& v : target) v = std::min(v, env.speed_max);
  }

  if (current.size() >= 3) {
    auto k = curvature_series(current);
    report.curvature_violations = detail::count_above(k, env.curvature_cap);
    double cap = env.curvature_cap;
    for (int attempt = 0; attempt < 6 && detail::count_above(k, env.curvature_cap) > 0; ++attempt) {
      current = detail::curvature_limited_follow(attempt == 0 ? current : current, target, cap);
      if (current.size() < 3) break;
      k = curvature_series(current);
      cap *= 0.9;
    }
    if (current.size() >= 3) report.residual_violations = detail::count_above(curvature_series(current), env.curvature_cap);
  }
  return {std::move(current), report};
}

// --- global planning -------------------------------------------------------------

struct PlanResult {
  Trajectory trajectory;
  GeometricPath path;
  double clearance_used = 0.0;
  bool within_distance_envelope = true;
  EnvelopeReport envelope;
};

inline SpeedLimits speed_limits(const PlanParams& p, const Envelope& env, double cruise) {
  SpeedLimits lim;
  lim.cruise = cruise;
  lim.floor = std::min(env.speed_min, cruise);
  lim.lateral_accel = p.lateral_accel;
  lim.longitudinal_accel = p.lateral_accel;
  return lim;
}

/// Shortest grid path at the target clearance (retrying at the envelope
/// minimum), shortcut, corner-rounded within the mode's curvature limit and
/// flown at cruise speed.
inline PlanResult plan_initial(const World& world, const Vec3& start, const Vec3& goal, const PlanParams& params,
                               const Envelope& env = {}, double dt = 0.1) {
  const auto statics = world.statics();
  const double radius = 1.05 / params.curvature_limit(env);
  // Corner rounding cuts inside a right-angle turn by r (sqrt 2 - 1); plan
  // with that margin first so the rounded path keeps the target clearance.
  const double corner_margin = radius * (std::sqrt(2.0) - 1.0);
  std::optional<std::vector<Vec3>> cells;
  double clearance = params.target_clearance;
  for (double c : {params.target_clearance + corner_margin, params.target_clearance, env.clearance_min}) {
    clearance = c;
    cells = grid_search(world.config(), statics, start, goal, c);
    if (cells) break;
  }
  if (!cells) throw PlanningInfeasible("no path from start to goal at the minimum clearance");
  const auto nodes = shortcut(*cells, statics, clearance);
  auto path = fillet(nodes, radius);
  auto traj = time_parameterize(path, params.cruise_speed, params.cruise_speed,
                                speed_limits(params, env, params.cruise_speed), dt);
  auto enforced = enforce_envelope(traj, env);
  PlanResult r{std::move(enforced.trajectory), std::move(path), std::min(clearance, params.target_clearance), true,
               enforced.report};
  const double len = arc_length(r.trajectory);
  r.within_distance_envelope = len >= env.distance_min && len <= env.distance_max;
  return r;
}

// --- conflict prediction ---------------------------------------------------------

struct Conflict {
  double clearance = std::numeric_limits<double>::infinity();  // min predicted surface distance
  double time = 0.0;                                           // seconds ahead of `from`
  std::size_t obstacle = 0;
};

/// Minimum predicted distance between a reference trajectory (sampled from
/// time `from`) and extrapolated obstacles over `horizon` seconds.
inline Conflict predict_conflict(const Trajectory& ref, double from, const std::vector<ObstacleSnapshot>& obstacles,
                                 double horizon = 3.0, double step = 0.1) {
  Conflict c;
  for (double tau = 0.0; tau <= horizon + 1e-9; tau += step) {
    const Vec3 p = ref.position_at(from + tau);
    for (const auto& o : obstacles) {
      const auto future = o.predict(tau);
      if (o.kind == ObstacleKind::falling_object && future.bottom() < 0.0) continue;
      const double d = future.distance(p);
      if (d < c.clearance) c = {d, tau, o.id};
    }
  }
  return c;
}


// --- reactive avoidance ----------------------------------------------------------

enum class AmendmentKind { none, lateral_arc, escape, hover, rejoin };

inline const char* to_string(AmendmentKind k) {
  switch (k) {
    case AmendmentKind::none: return "none";
    case AmendmentKind::lateral_arc: return "lateral_arc";
    case AmendmentKind::escape: return "escape";
    case AmendmentKind::hover: return "hover";
    case AmendmentKind::rejoin: return "rejoin";
  }
  return "?";
}

struct Amendment {
  AmendmentKind kind = AmendmentKind::none;
  std::optional<Trajectory> trajectory;  // absolute mission time
  double rejoin_s = 0.0;                 // global-path arc length where the offset returns to zero
  double predicted_clearance = std::numeric_limits<double>::infinity();
  double escape_displacement = 0.0;      // escape only: offset from the unamended course at impact time
  double evasive_until = 0.0;            // escape only: end of the escape phase, the blend back follows
};

/// What replan_avoid needs to know about the mission at the moment of replanning.
struct AvoidanceContext {
  const GeometricPath* global = nullptr;
  double progress = 0.0;  // arc length of the UAV's projection on the global path
  double time = 0.0;
  double dt = 0.1;
  std::vector<ObstacleSnapshot> obstacles;  // sensed dynamic obstacles
  std::vector<ObstacleSnapshot> statics;
  Envelope envelope;
  const Trajectory* reference = nullptr;  // course currently flown
  double reference_time = 0.0;            // its clock, which may lag `time`
  double horizon = 4.0;                   // s of predicted clearance checked per candidate
  double accel_scale = 1.0;               // achievable fraction of commanded acceleration (brownout)
};

/// Point-mass tracking law: PD on the reference plus its feed-forward
/// acceleration, saturated. The reference clock slows while the UAV lags.
struct Tracker {
  double kp = 4.0;
  double kd = 4.0;
  double accel_limit = 25.0;  // m/s^2 before power gating
  double lag_free = 0.5;      // m of lag tolerated before the clock slows

  static Vec3 ref_velocity(const Trajectory& r, double tau, double dt) {
    return (r.position_at(tau + dt) - r.position_at(tau - dt)) / (2.0 * dt);
  }
  static Vec3 ref_accel(const Trajectory& r, double tau, double dt) {
    return (r.position_at(tau + dt) - 2.0 * r.position_at(tau) + r.position_at(tau - dt)) / (dt * dt);
  }

  Vec3 command(const Trajectory& ref, double tau, const Vec3& pos, const Vec3& vel, double dt) const {
    const Vec3 err = ref.position_at(tau) - pos;
    Vec3 a = ref_accel(ref, tau, dt) + kp * err + kd * (ref_velocity(ref, tau, dt) - vel);
    if (a.norm() > accel_limit) a *= accel_limit / a.norm();
    return a;
  }

  /// Reference-clock rate for a given tracking lag.
  double clock_rate(double lag) const { return lag <= lag_free ? 1.0 : std::max(0.2, 1.0 - (lag - lag_free) / 1.5); }

  /// How far the reference point is ahead of the UAV along its direction of
  /// travel. Lateral error and running ahead do not hold the clock back.
  static double lag(const Trajectory& ref, double tau, const Vec3& pos, double dt) {
    const Vec3 err = ref.position_at(tau) - pos;
    const Vec3 v = ref_velocity(ref, tau, dt);
    if (v.norm() < 1e-6) return err.norm();
    return std::max(0.0, err.dot(v.normalized()));
  }
};

/// Positions flown over `duration` when `ref` is tracked from its time `t0`
/// with every command scaled by `scale`.
inline Trajectory rollout(const Vec3& pos, const Vec3& vel, const Trajectory& ref, double t0, double duration,
                          double dt, double scale, const Tracker& tracker = {}) {
  std::vector<Vec3> pts{pos};
  Vec3 p = pos, v = vel;
  double tau = t0;
  const auto n = static_cast<int>(std::ceil(duration / dt - 1e-9));
  for (int k = 0; k < n; ++k) {
    const Vec3 a = tracker.command(ref, tau, p, v, dt) * scale;
    tau += tracker.clock_rate(Tracker::lag(ref, tau, p, dt)) * dt;
    const Vec3 nv = v + a * dt;
    p += 0.5 * (v + nv) * dt;
    v = nv;
    pts.push_back(p);
  }
  if (pts.size() == 1) pts.push_back(p);
  return Trajectory::uniform(pts, dt, t0);
}

namespace detail {

inline double smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return 0.5 - 0.5 * std::cos(M_PI * u);
}

/// Geometry that leaves the UAV's current position, blends its offset from
/// the global path to `offset` over a curvature-limited ramp, holds it until
/// `hold_until`, blends back and then follows the path for `extra` metres.
/// Returns the geometry and the arc length where the offset reaches zero,
/// which exceeds the path length when the blend back cannot finish.
inline std::pair<GeometricPath, double> offset_path(const GeometricPath& global, double s0, const Vec3& start,
                                                    const Vec3& offset, double hold_until, double kappa,
                                                    double extra = 0.0) {
  const Vec3 e0 = start - global.point_at(s0);
  auto ramp = [kappa](double delta) {
    return std::max(3.0, M_PI * std::sqrt(std::max(delta, 1e-6) / (2.0 * kappa)));
  };
  const double l_in = ramp((offset - e0).norm());
  const double l_out = offset.norm() > 1e-9 ? ramp(offset.norm()) : 0.0;
  // Shorten the hold so the offset is back to zero before the path ends.
  const double s_hold = std::max(s0 + l_in, std::min(hold_until, global.length() - l_out));
  const double s_back = s_hold + l_out;
  const double s_end = std::min(global.length(), s_back + extra);
  std::vector<Vec3> pts;
  std::vector<double> kap;
  const double ds = 0.1;
  for (double s = s0;; s += ds) {
    const double sc = std::min(s, s_end);
    Vec3 off;
    if (sc <= s0 + l_in) {
      const double w = smoothstep((sc - s0) / l_in);
      off = e0 * (1.0 - w) + offset * w;
    } else if (sc <= s_hold) {
      off = offset;
    } else {
      off = offset * (1.0 - smoothstep(l_out > 0.0 ? (sc - s_hold) / l_out : 1.0));
    }
    pts.push_back(global.point_at(sc) + off);
    kap.push_back(global.curvature_at(sc));
    if (sc >= s_end) break;
  }
  pts.front() = start;
  // Curvature estimate from the sampled geometry, for the speed profile.
  for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
    const Vec3 a = pts[i] - pts[i - 1];
    const Vec3 b = pts[i + 1] - pts[i];
    const double la = a.norm(), lb = b.norm();
    if (la > 1e-9 && lb > 1e-9) {
      const double ang = std::acos(std::clamp(a.dot(b) / (la * lb), -1.0, 1.0));
      kap[i] = std::max(kap[i], ang / (0.5 * (la + lb)));
    }
  }
  return {GeometricPath::from_points(std::move(pts), std::move(kap)), s_back};
}

/// Minimum predicted surface distance along a trajectory; when it ends before
/// the horizon the final position is held.
inline double trajectory_clearance(const Trajectory& traj, double t0, const std::vector<ObstacleSnapshot>& dynamic,
                                   const std::vector<ObstacleSnapshot>& statics, double horizon = 0.0) {
  double best = std::numeric_limits<double>::infinity();
  auto check = [&](const Vec3& p, double tau) {
    for (const auto& o : dynamic) {
      const auto f = o.predict(tau);
      if (o.kind == ObstacleKind::falling_object && f.bottom() < 0.0) continue;
      best = std::min(best, f.distance(p));
    }
    best = std::min(best, static_clearance(p, statics));
  };
  for (const auto& w : traj.waypoints()) check(w.position, w.time - t0);
  const double dt = traj.is_uniform() ? traj.sample_interval() : 0.1;
  for (double t = traj.end_time() + dt; t - t0 <= horizon + 1e-9; t += dt) check(traj.back().position, t - t0);
  return best;
}

/// Curvature for offset blends: the mode's limit, tightened so the turn fits
/// the lateral budget at the speed carried into it.
inline double blend_curvature(const PlanParams& params, const Envelope& env, double speed) {
  const double v = std::max(speed, env.speed_min);
  return std::min(params.curvature_limit(env), params.lateral_accel / (v * v));
}

inline Vec3 lateral_normal(const Vec3& heading) {
  Vec3 h = horizontal(heading);
  if (h.norm() < 1e-9) h = Vec3::UnitX();
  h.normalize();
  return {-h.y(), h.x(), 0.0};
}

/// Brake along the current velocity, then hold position.
inline Trajectory hover_trajectory(const UAVState& uav, double decel, double hold, double dt, double t0) {
  std::vector<Vec3> pts{uav.position};
  Vec3 p = uav.position;
  Vec3 v = uav.velocity;
  while (v.norm() > 1e-6) {
    const double sp = v.norm();
    const Vec3 nv = v * (std::max(0.0, sp - decel * dt) / sp);
    p += 0.5 * (v + nv) * dt;
    v = nv;
    pts.push_back(p);
  }
  const auto n = static_cast<int>(std::lround(hold / dt));
  for (int k = 0; k < std::max(1, n); ++k) pts.push_back(p);
  return Trajectory::uniform(pts, dt, t0);
}

}  // namespace detail

/// Blend from the UAV's current position back onto the global path.
inline Amendment rejoin(const UAVState& uav, const PlanParams& params, const AvoidanceContext& ctx) {
  const auto& global = *ctx.global;
  const double s0 = global.project(uav.position, std::max(0.0, ctx.progress - 2.0), 30.0);
  const double kappa = detail::blend_curvature(params, ctx.envelope, uav.velocity.norm());
  const auto [geom, s_back] = detail::offset_path(global, s0, uav.position, Vec3::Zero(), s0, kappa);
  Amendment a;
  a.kind = AmendmentKind::rejoin;
  if (geom.empty()) return a;
  auto traj = enforce_envelope(time_parameterize(geom, uav.velocity.norm(), params.cruise_speed,
                                                speed_limits(params, ctx.envelope, params.cruise_speed), ctx.dt,
                                                ctx.time),
                               ctx.envelope)
                  .trajectory;
  a.rejoin_s = std::min(s_back, global.length());
  a.predicted_clearance = detail::trajectory_clearance(traj, ctx.time, ctx.obstacles, ctx.statics);
  a.trajectory = std::move(traj);
  return a;
}

/// Local amendment for one threatening obstacle. Vehicles and other UAVs get
/// the smallest lateral offset arc (boosted when lambda > 0) that keeps the
/// target clearance; falling objects get a straight-line escape away from the
/// object's horizontal offset followed by a blend back. When nothing reaches
/// the target clearance at zero aggressiveness the UAV brakes and hovers.
/// Arcs and blends pass through enforce_envelope; the escape and braking
/// phases are acceleration-limited manoeuvres that may pass through zero
/// speed, so the speed floor and curvature cap do not apply to them.
inline Amendment replan_avoid(const UAVState& uav, const ObstacleSnapshot& threat, const PlanParams& params,
                              const AvoidanceContext& ctx) {
  if (ctx.global == nullptr || ctx.global->empty()) throw DomainError("avoidance needs the global path");
  const auto& global = *ctx.global;
  const auto& env = ctx.envelope;

  std::vector<ObstacleSnapshot> dynamic = ctx.obstacles;
  if (std::none_of(dynamic.begin(), dynamic.end(), [&](const ObstacleSnapshot& o) { return o.id == threat.id; })) {
    dynamic.push_back(threat);
  }

  // Identity when the current course already keeps the clearance.
  {
    std::optional<Trajectory> course;
    double t_ref = ctx.time;
    if (ctx.reference != nullptr) {
      course = *ctx.reference;
      t_ref = ctx.reference_time;
    } else {
      course = rejoin(uav, params, ctx).trajectory;
    }
    if (course) {
      const auto c = predict_conflict(*course, t_ref, {threat}, 3.0, ctx.dt);
      if (c.clearance >= params.target_clearance) {
        Amendment none;
        none.predicted_clearance = c.clearance;
        return none;
      }
    }
  }

  const double kappa = params.curvature_limit(env);
  const double s0 = global.project(uav.position, std::max(0.0, ctx.progress - 2.0), 30.0);
  const Vec3 heading = uav.velocity.norm() > 0.1 ? Vec3(uav.velocity) : global.tangent_at(s0);
  const Vec3 side = detail::lateral_normal(heading);
  // Candidates are scored on what the UAV would actually fly under the
  // present supply, not on the reference itself.
  auto flown = [&](const Trajectory& t) {
    return rollout(uav.position, uav.velocity, t, ctx.time, ctx.horizon, ctx.dt, ctx.accel_scale);
  };
  auto clearance_of = [&](const Trajectory& t) {
    return detail::trajectory_clearance(flown(t), ctx.time, dynamic, ctx.statics, ctx.horizon);
  };

  // Straight-line escapes at the evasive acceleration along each direction in
  // turn, each followed by a blend back; the first reaching the target wins.
  // Buildings are checked on the escape itself; the blend back is re-checked
  // (and replanned if needed) when the escape ends.
  const double acc = params.escape_accel();
  auto try_escapes = [&](const std::vector<Vec3>& dirs, double duration, double t_impact) {
    const auto steps = std::max(1, static_cast<int>(std::ceil(duration / ctx.dt)));
    Amendment best;
    best.predicted_clearance = -1.0;
    for (const auto& d : dirs) {
      std::vector<Vec3> pts{uav.position};
      Vec3 p = uav.position;
      Vec3 v = uav.velocity;
      double disp_at_impact = 0.0;
      for (int k = 1; k <= steps; ++k) {
        Vec3 nv = v + acc * ctx.dt * d;
        if (nv.norm() > env.speed_max) nv = nv.normalized() * std::max(v.norm(), env.speed_max);
        p += 0.5 * (v + nv) * ctx.dt;
        v = nv;
        pts.push_back(p);
        if (std::abs(k * ctx.dt - t_impact) < 0.5 * ctx.dt) {
          disp_at_impact = (p - (uav.position + uav.velocity * (k * ctx.dt))).norm();
        }
      }
      const auto escape = Trajectory::uniform(pts, ctx.dt, ctx.time);
      UAVState after = uav;
      after.position = p;
      after.velocity = v;
      AvoidanceContext back = ctx;
      back.time = escape.end_time();
      back.progress = s0;
      const auto ret = rejoin(after, params, back);
      std::vector<Waypoint> joined = escape.waypoints();
      if (ret.trajectory) {
        for (std::size_t i = 1; i < ret.trajectory->size(); ++i) joined.push_back((*ret.trajectory)[i]);
      }
      Trajectory whole(std::move(joined));
      const auto path = flown(whole);
      std::vector<Vec3> head;
      for (const auto& w : path.waypoints()) {
        if (w.time <= escape.end_time() + 1e-9) head.push_back(w.position);
      }
      if (head.size() == 1) head.push_back(head.front());
      const double clr =
          std::min(detail::trajectory_clearance(path, ctx.time, dynamic, {}, ctx.horizon),
                   detail::trajectory_clearance(Trajectory::uniform(head, ctx.dt, ctx.time), ctx.time, {}, ctx.statics));
      if (clr > best.predicted_clearance) {
        best.kind = AmendmentKind::escape;
        best.evasive_until = escape.end_time();
        best.predicted_clearance = clr;
        best.rejoin_s = ret.rejoin_s;
        best.escape_displacement = disp_at_impact;
        best.trajectory = std::move(whole);
      }
      if (best.predicted_clearance >= params.target_clearance) break;
    }
    return best;
  };
  auto make_hover = [&] {
    Amendment hover;
    hover.kind = AmendmentKind::hover;
    hover.trajectory = detail::hover_trajectory(uav, std::max(params.lateral_accel, acc), std::max(1.0, ctx.horizon),
                                                ctx.dt, ctx.time);
    hover.rejoin_s = s0;
    hover.predicted_clearance = clearance_of(*hover.trajectory);
    return hover;
  };
  auto around = [](const Vec3& a) {
    const Vec3 n(-a.y(), a.x(), 0.0);
    return std::vector<Vec3>{a, n, Vec3(-n), Vec3(-a)};
  };

  if (threat.kind == ObstacleKind::falling_object) {
    // Time until the object has dropped clear of the UAV's altitude.
    double t_pass = 0.0;
    for (double tau = 0.0; tau < 5.0; tau += ctx.dt) {
      const auto f = threat.predict(tau);
      t_pass = tau;
      if (f.bottom() < 0.0 || f.center.z() + f.radius < uav.position.z() - params.target_clearance) break;
    }
    double t_impact = t_pass;
    for (double tau = 0.0; tau < 5.0; tau += ctx.dt) {
      if (threat.predict(tau).center.z() <= uav.position.z()) {
        t_impact = tau;
        break;
      }
    }
    const Vec3 predicted = uav.position + uav.velocity * t_impact;
    const Vec3 away = horizontal(predicted - threat.predict(t_impact).center);
    // Preference: away from the object, then either side, then the reverse.
    const auto dirs = away.norm() >= 0.5 ? around(away.normalized())
                                         : std::vector<Vec3>{side, Vec3(-side), Vec3(-horizontal(heading).normalized()),
                                                             horizontal(heading).normalized()};
    auto best = try_escapes(dirs, t_pass + 0.3, t_impact);
    if (best.predicted_clearance < params.target_clearance) {
      auto hover = make_hover();
      if (hover.predicted_clearance > best.predicted_clearance) return hover;
    }
    return best;
  }

  // Lateral arcs, smallest offset first; a pure speed boost is the zero offset.
  const double boost = params.boosted_speed(env);
  std::vector<double> speeds{boost};
  if (boost > params.cruise_speed + 1e-9) speeds.push_back(params.cruise_speed);
  std::vector<double> mags{2.0, 4.0, 6.0, 8.0};
  if (params.lambda > 0.0) mags.insert(mags.begin(), 0.0);
  const Trajectory course = ctx.reference != nullptr ? *ctx.reference : *rejoin(uav, params, ctx).trajectory;
  const auto conflict = predict_conflict(course, ctx.reference != nullptr ? ctx.reference_time : ctx.time, {threat},
                                         3.0, ctx.dt);
  const double pass_s = s0 + std::max(uav.velocity.norm(), params.cruise_speed) * conflict.time +
                        threat.half_extents.norm() + threat.radius + 4.0;
  Amendment best;
  best.predicted_clearance = -1.0;
  for (double mag : mags) {
    for (double v : speeds) {
      for (double sgn : {1.0, -1.0}) {
        if (mag == 0.0 && sgn < 0.0) continue;
        const double k_arc = std::min(kappa, detail::blend_curvature(params, env, std::max(uav.velocity.norm(), v)));
        const auto [geom, s_back] =
            detail::offset_path(global, s0, uav.position, side * (sgn * mag), pass_s, k_arc, v * ctx.horizon);
        if (geom.empty()) continue;
        // An arc that cannot blend back before the path ends would strand the
        // UAV off the path near the goal.
        if (mag > 0.0 && s_back > global.length() + 1e-9) continue;
        auto traj = enforce_envelope(
                        time_parameterize(geom, uav.velocity.norm(), v, speed_limits(params, env, v), ctx.dt, ctx.time),
                        env)
                        .trajectory;
        const double clr = clearance_of(traj);
        if (clr > best.predicted_clearance) {
          best.kind = AmendmentKind::lateral_arc;
          best.predicted_clearance = clr;
          best.rejoin_s = std::min(s_back, global.length());
          best.trajectory = std::move(traj);
        }
        if (best.predicted_clearance >= params.target_clearance) return best;
      }
    }
  }

  // No arc keeps the clearance: try backing off along straight lines, away
  // from where the obstacle will be at the conflict, or across its track.
  {
    const auto f = threat.predict(conflict.time);
    const Vec3 predicted = course.position_at(conflict.time + (ctx.reference != nullptr ? ctx.reference_time
                                                                                        : ctx.time));
    Vec3 away = horizontal(predicted - f.center);
    if (away.norm() < 0.5) away = -horizontal(heading);
    auto dirs = around(away.normalized());
    const Vec3 track = horizontal(threat.velocity);
    if (track.norm() > 0.1) {
      const Vec3 n = detail::lateral_normal(track);
      dirs.push_back(n.dot(away) >= 0.0 ? n : Vec3(-n));
    }
    auto esc = try_escapes(dirs, conflict.time + 1.0, conflict.time);
    if (esc.predicted_clearance > best.predicted_clearance) best = std::move(esc);
    if (best.predicted_clearance >= params.target_clearance) return best;
  }

  auto hover = make_hover();
  if (params.lambda > 0.0 && best.predicted_clearance > hover.predicted_clearance) return best;
  return hover;
}

}  // namespace aeps
