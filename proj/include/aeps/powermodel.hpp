#pragma once

// Power demand of a trajectory: a speed-dependent baseline plus curvature
// terms, P = P_base + k_curv * |C| + k_dist_curv * D * mean|C|.

#include "aeps/common.hpp"
#include "aeps/csv.hpp"
#include "aeps/trajectory.hpp"

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace aeps {

/// Hover-plus-drag baseline p0 + p1*v + p2*v^2. These defaults are
/// configuration values, not measured constants.
struct BaselineParams {
  double p0 = 60.0;  // W
  double p1 = 2.0;   // W per m/s
  double p2 = 0.5;   // W per (m/s)^2

  void validate() const {
    if (!(p0 > 0.0)) throw DomainError("baseline p0 must be positive");
    if (!(p1 >= 0.0) || !(p2 >= 0.0)) throw DomainError("baseline p1, p2 must be non-negative");
  }
};

struct DemandParams {
  double k_curv = 1e-4;       // W*m, coefficient of |C|
  double k_dist_curv = 2e-5;  // W*m^2, coefficient of D*mean|C|

  /// Coefficients as published.
  static DemandParams paper() { return {1e-4, 2e-5}; }
  /// Published coefficients x 1e4, so curvature measurably moves demand.
  static DemandParams scaled() { return {1.0, 0.2}; }

  static DemandParams preset(std::string_view name) {
    if (name == "paper") return paper();
    if (name == "scaled") return scaled();
    throw ConfigError("unknown demand preset '" + std::string(name) + "' (expected paper|scaled)");
  }

  void validate() const {
    if (!(k_curv >= 0.0) || !(k_dist_curv >= 0.0)) {
      throw DomainError("demand coefficients must be non-negative");
    }
  }
};

struct DemandProfile {
  std::vector<double> time;    // s
  std::vector<double> demand;  // W
  double sample_interval = 0.0;
  double total_energy = 0.0;  // J, left-rectangle rule

  double mean() const {
    if (demand.empty()) return 0.0;
    double s = 0.0;
    for (double d : demand) s += d;
    return s / static_cast<double>(demand.size());
  }

  double peak() const {
    double m = 0.0;
    for (double d : demand) m = std::max(m, d);
    return m;
  }
};

inline double baseline_power(double speed, const BaselineParams& params) {
  if (!(speed >= 0.0)) throw DomainError("speed must be non-negative");
  return params.p0 + params.p1 * speed + params.p2 * speed * speed;
}

inline double instant_demand(double baseline, double abs_curvature, double length_D,
                             double mean_abs_curvature, const DemandParams& params) {
  return baseline + params.k_curv * abs_curvature +
         params.k_dist_curv * length_D * mean_abs_curvature;
}

/// Left-rectangle energy: every sample holds for one interval.
inline double integrate_energy(std::span<const double> demand, double dt) {
  double e = 0.0;
  for (double d : demand) e += d * dt;
  return e;
}

/// Evaluates the demand model per sample. |C| is the curvature averaged over
/// the sample's one-second bucket; D and mean|C| are whole-trajectory values.
inline DemandProfile demand_profile(const Trajectory& traj, const BaselineParams& base,
                                    const DemandParams& dem) {
  base.validate();
  dem.validate();
  if (!traj.is_uniform()) throw InvalidTrajectory("demand profile needs a uniformly sampled trajectory");
  const auto f = features(traj);
  const auto per_second = per_second_mean(f.curvature_series, traj);

  DemandProfile out;
  out.sample_interval = traj.sample_interval();
  out.time.reserve(traj.size());
  out.demand.reserve(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    out.time.push_back(traj[i].time);
    out.demand.push_back(instant_demand(baseline_power(f.speed_series[i], base), per_second[i],
                                        f.length_D, f.mean_abs_curvature, dem));
  }
  out.total_energy = integrate_energy(out.demand, out.sample_interval);
  return out;
}

/// Constant-demand profile, used when only a mission-level prediction exists.
inline DemandProfile constant_profile(double watts, double duration, double dt) {
  if (!(dt > 0.0)) throw DomainError("sample interval must be positive");
  DemandProfile out;
  out.sample_interval = dt;
  const auto n = static_cast<std::size_t>(std::ceil(duration / dt - 1e-9));
  for (std::size_t i = 0; i < n; ++i) {
    out.time.push_back(static_cast<double>(i) * dt);
    out.demand.push_back(watts);
  }
  out.total_energy = integrate_energy(out.demand, dt);
  return out;
}

inline void write_demand_csv(std::ostream& out, const DemandProfile& p) {
  csv::Writer w(out);
  w.header({"t", "demand_w"});
  for (std::size_t i = 0; i < p.demand.size(); ++i) w.row(p.time[i], p.demand[i]);
}

}  // namespace aeps
