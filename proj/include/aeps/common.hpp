#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>
#include <string>

namespace aeps {

using Vec3 = Eigen::Vector3d;

// Error hierarchy. Every failure surfaced by the library derives from Error so
// callers (the CLI in particular) can map them to exit codes in one place.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : Error {
  using Error::Error;
};

struct InvalidTrajectory : Error {
  using Error::Error;
};

struct ModelError : Error {
  using Error::Error;
};

struct TrainingDiverged : Error {
  using Error::Error;
};

struct InvalidScenario : Error {
  using Error::Error;
};

struct PlanningInfeasible : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

inline bool finite(const Vec3& v) {
  return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

inline Vec3 horizontal(const Vec3& v) { return {v.x(), v.y(), 0.0}; }

}  // namespace aeps
