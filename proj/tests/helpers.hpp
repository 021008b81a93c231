#pragma once

#include "aeps/trajectory.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace testing {

using aeps::Trajectory;
using aeps::Vec3;

/// Planar circle of radius r flown at `speed` for `duration` seconds.
inline Trajectory circle(double r, double speed, double duration, double dt = 0.1, Vec3 c = Vec3::Zero()) {
  std::vector<Vec3> pts;
  const auto n = static_cast<int>(std::lround(duration / dt));
  for (int i = 0; i <= n; ++i) {
    const double th = speed * i * dt / r;
    pts.emplace_back(c.x() + r * std::cos(th), c.y() + r * std::sin(th), c.z());
  }
  return Trajectory::uniform(pts, dt);
}

/// Helix x = R cos t, y = R sin t, z = b t (parameter t = angular rate * time).
inline Trajectory helix(double r, double b, double omega, double duration, double dt = 0.1) {
  std::vector<Vec3> pts;
  const auto n = static_cast<int>(std::lround(duration / dt));
  for (int i = 0; i <= n; ++i) {
    const double t = omega * i * dt;
    pts.emplace_back(r * std::cos(t), r * std::sin(t), b * t);
  }
  return Trajectory::uniform(pts, dt);
}

inline Trajectory straight(Vec3 from, Vec3 to, double speed, double dt = 0.1) {
  const double len = (to - from).norm();
  const auto n = static_cast<int>(std::lround(len / speed / dt));
  std::vector<Vec3> pts;
  for (int i = 0; i <= n; ++i) pts.push_back(from + (to - from) * (static_cast<double>(i) / n));
  return Trajectory::uniform(pts, dt);
}

}  // namespace testing
