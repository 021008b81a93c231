#pragma once

// Path geometry: resampling, finite-difference speed and curvature, arc length.

#include "aeps/common.hpp"
#include "aeps/csv.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

namespace aeps {

struct Waypoint {
  Vec3 position = Vec3::Zero();
  double time = 0.0;
};

/// Ordered, time-stamped 3-D samples. Construction validates the sequence:
/// at least two waypoints, finite coordinates, strictly increasing time.
class Trajectory {
 public:
  explicit Trajectory(std::vector<Waypoint> waypoints) : waypoints_(std::move(waypoints)) {
    if (waypoints_.size() < 2) throw InvalidTrajectory("trajectory needs at least 2 waypoints");
    for (std::size_t i = 0; i < waypoints_.size(); ++i) {
      if (!finite(waypoints_[i].position) || !std::isfinite(waypoints_[i].time)) {
        throw InvalidTrajectory("trajectory has non-finite waypoint");
      }
      if (i > 0 && !(waypoints_[i].time > waypoints_[i - 1].time)) {
        throw InvalidTrajectory("trajectory times must be strictly increasing");
      }
    }
    const double dt = waypoints_[1].time - waypoints_[0].time;
    bool uniform = true;
    for (std::size_t i = 1; i < waypoints_.size(); ++i) {
      const double step = waypoints_[i].time - waypoints_[i - 1].time;
      if (std::abs(step - dt) > 1e-9 * std::max(1.0, dt)) {
        uniform = false;
        break;
      }
    }
    interval_ = uniform ? dt : 0.0;
  }

  /// Positions sampled at t0, t0 + dt, t0 + 2dt, ...
  static Trajectory uniform(std::span<const Vec3> positions, double dt, double t0 = 0.0) {
    if (!(dt > 0.0)) throw DomainError("sample interval must be positive");
    std::vector<Waypoint> w;
    w.reserve(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
      w.push_back({positions[i], t0 + static_cast<double>(i) * dt});
    }
    return Trajectory(std::move(w));
  }

  const std::vector<Waypoint>& waypoints() const { return waypoints_; }
  std::size_t size() const { return waypoints_.size(); }
  const Waypoint& operator[](std::size_t i) const { return waypoints_[i]; }
  const Waypoint& front() const { return waypoints_.front(); }
  const Waypoint& back() const { return waypoints_.back(); }

  /// Uniform sample interval, or 0 when the samples are not evenly spaced.
  double sample_interval() const { return interval_; }
  bool is_uniform() const { return interval_ > 0.0; }

  double start_time() const { return waypoints_.front().time; }
  double end_time() const { return waypoints_.back().time; }
  double duration() const { return end_time() - start_time(); }

  std::vector<Vec3> positions() const {
    std::vector<Vec3> out;
    out.reserve(waypoints_.size());
    for (const auto& w : waypoints_) out.push_back(w.position);
    return out;
  }

  /// Linear interpolation; clamps outside [start_time, end_time]. Exact at
  /// sample times.
  Vec3 position_at(double t) const {
    if (t <= start_time()) return waypoints_.front().position;
    if (t >= end_time()) return waypoints_.back().position;
    auto it = std::lower_bound(waypoints_.begin(), waypoints_.end(), t,
                               [](const Waypoint& w, double v) { return w.time < v; });
    if (it->time == t) return it->position;
    const auto& b = *it;
    const auto& a = *(it - 1);
    const double u = (t - a.time) / (b.time - a.time);
    return a.position + u * (b.position - a.position);
  }

 private:
  std::vector<Waypoint> waypoints_;
  double interval_ = 0.0;
};

struct TrajectoryFeatures {
  double length_D = 0.0;            // m
  double mean_abs_curvature = 0.0;  // 1/m
  std::vector<double> curvature_series;
  std::vector<double> speed_series;

  double mean_speed() const {
    if (speed_series.empty()) return 0.0;
    return std::accumulate(speed_series.begin(), speed_series.end(), 0.0) /
           static_cast<double>(speed_series.size());
  }
};

/// Speeds below this are treated as hover: curvature is reported as 0.
inline constexpr double kHoverSpeedEpsilon = 1e-3;

/// Linear interpolation onto a uniform time grid starting at the first
/// waypoint. The first and last positions are kept; if the duration is not a
/// whole number of intervals the final position is held until the next grid
/// point, so the output stays uniformly sampled.
inline Trajectory resample(const Trajectory& traj, double interval) {
  if (!(interval > 0.0)) throw DomainError("resample interval must be positive");
  const double t0 = traj.start_time();
  const double span = traj.duration();
  auto steps = static_cast<std::size_t>(std::ceil(span / interval - 1e-9));
  steps = std::max<std::size_t>(steps, 1);
  std::vector<Waypoint> out;
  out.reserve(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = t0 + static_cast<double>(k) * interval;
    out.push_back({traj.position_at(t), t});
  }
  out.back().position = traj.back().position;
  return Trajectory(std::move(out));
}

/// Per-sample speed from finite differences: central in the interior,
/// one-sided at the ends.
inline std::vector<double> speed_series(const Trajectory& traj) {
  const auto& w = traj.waypoints();
  const std::size_t n = w.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 == n ? n - 1 : i + 1;
    out[i] = (w[hi].position - w[lo].position).norm() / (w[hi].time - w[lo].time);
  }
  return out;
}

/// |kappa| = |r' x r''| / |r'|^3 with central differences on a uniformly
/// sampled trajectory. Five-point stencils are used where they fit (the
/// three-point version overestimates a circle's curvature by ~h^2/4 at
/// h rad per step, 1% at 8 m/s on a 2 m circle); samples without room for
/// a stencil copy the nearest computed value. Samples slower than
/// `hover_speed` get 0.
inline std::vector<double> curvature_series(const Trajectory& traj,
                                            double hover_speed = kHoverSpeedEpsilon) {
  if (!traj.is_uniform()) throw InvalidTrajectory("curvature needs a uniformly sampled trajectory");
  if (traj.size() < 3) throw InvalidTrajectory("curvature needs at least 3 samples");
  const double dt = traj.sample_interval();
  const auto& w = traj.waypoints();
  const std::size_t n = w.size();
  const std::size_t m = n >= 5 ? 2 : 1;
  std::vector<double> k(n, 0.0);
  for (std::size_t i = m; i + m < n; ++i) {
    Vec3 d1, d2;
    if (m == 2) {
      const Vec3 &a = w[i - 2].position, &b = w[i - 1].position, &c = w[i].position,
                 &d = w[i + 1].position, &e = w[i + 2].position;
      d1 = (a - 8.0 * b + 8.0 * d - e) / (12.0 * dt);
      d2 = (-a + 16.0 * b - 30.0 * c + 16.0 * d - e) / (12.0 * dt * dt);
    } else {
      d1 = (w[i + 1].position - w[i - 1].position) / (2.0 * dt);
      d2 = (w[i + 1].position - 2.0 * w[i].position + w[i - 1].position) / (dt * dt);
    }
    const double speed = d1.norm();
    if (speed < hover_speed) continue;
    k[i] = d1.cross(d2).norm() / (speed * speed * speed);
  }
  for (std::size_t i = 0; i < m; ++i) {
    k[i] = k[m];
    k[n - 1 - i] = k[n - 1 - m];
  }
  return k;
}

inline double arc_length(const Trajectory& traj) {
  double len = 0.0;
  const auto& w = traj.waypoints();
  for (std::size_t i = 1; i < w.size(); ++i) len += (w[i].position - w[i - 1].position).norm();
  return len;
}

inline TrajectoryFeatures features(const Trajectory& traj,
                                   double hover_speed = kHoverSpeedEpsilon) {
  TrajectoryFeatures f;
  f.length_D = arc_length(traj);
  f.speed_series = speed_series(traj);
  if (traj.size() >= 3) {
    f.curvature_series = curvature_series(traj, hover_speed);
  } else {
    if (!traj.is_uniform()) throw InvalidTrajectory("features need a uniformly sampled trajectory");
    f.curvature_series.assign(traj.size(), 0.0);
  }
  f.mean_abs_curvature =
      std::accumulate(f.curvature_series.begin(), f.curvature_series.end(), 0.0) /
      static_cast<double>(f.curvature_series.size());
  return f;
}

/// Replaces each sample by the mean of the samples sharing its one-second
/// bucket (bucket = floor(t - t0)).
inline std::vector<double> per_second_mean(std::span<const double> series, const Trajectory& traj) {
  if (series.size() != traj.size()) throw DomainError("series length does not match trajectory");
  const double t0 = traj.start_time();
  std::vector<double> out(series.size(), 0.0);
  std::size_t begin = 0;
  while (begin < series.size()) {
    const auto bucket = static_cast<long>(std::floor(traj[begin].time - t0 + 1e-9));
    std::size_t end = begin;
    double sum = 0.0;
    while (end < series.size() &&
           static_cast<long>(std::floor(traj[end].time - t0 + 1e-9)) == bucket) {
      sum += series[end];
      ++end;
    }
    const double mean = sum / static_cast<double>(end - begin);
    std::fill(out.begin() + static_cast<long>(begin), out.begin() + static_cast<long>(end), mean);
    begin = end;
  }
  return out;
}

// --- CSV -------------------------------------------------------------------

inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  csv::Writer w(out);
  w.header({"t", "x", "y", "z"});
  for (const auto& p : traj.waypoints()) {
    w.row(p.time, p.position.x(), p.position.y(), p.position.z());
  }
}

/// Variant with the `amended` column used for planner exports.
inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj,
                                 std::span<const bool> amended) {
  if (amended.size() != traj.size()) throw DomainError("amended flags do not match trajectory");
  csv::Writer w(out);
  w.header({"t", "x", "y", "z", "amended"});
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& p = traj[i];
    w.row(p.time, p.position.x(), p.position.y(), p.position.z(), amended[i]);
  }
}

inline Trajectory read_trajectory_csv(std::istream& in) {
  auto rows = csv::read_numeric(in, {"t", "x", "y", "z"});
  std::vector<Waypoint> w;
  w.reserve(rows.size());
  for (const auto& r : rows) w.push_back({Vec3(r[1], r[2], r[3]), r[0]});
  return Trajectory(std::move(w));
}

}  // namespace aeps
