#include "aeps/trajectory.hpp"

#include "helpers.hpp"

#include <catch_amalgamated.hpp>

#include <random>
#include <sstream>

using namespace aeps;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("trajectory construction rejects bad waypoint sequences") {
  CHECK_THROWS_AS(Trajectory({{Vec3::Zero(), 0.0}}), InvalidTrajectory);
  CHECK_THROWS_AS(Trajectory({{Vec3::Zero(), 1.0}, {Vec3::UnitX(), 1.0}}), InvalidTrajectory);
  CHECK_THROWS_AS(Trajectory({{Vec3::Zero(), 1.0}, {Vec3::UnitX(), 0.5}}), InvalidTrajectory);
  CHECK_THROWS_AS(Trajectory({{Vec3::Zero(), 0.0}, {Vec3(NAN, 0, 0), 1.0}}), InvalidTrajectory);
}

TEST_CASE("resample keeps a two-point trajectory at its own interval") {
  Trajectory t({{Vec3(0, 0, 0), 0.0}, {Vec3(10, 0, 0), 10.0}});
  const auto r = resample(t, 10.0);
  REQUIRE(r.size() == 2);
  CHECK(r[0].position == t[0].position);
  CHECK(r[1].position == t[1].position);
  CHECK(r[1].time == 10.0);
}

TEST_CASE("resample of a straight segment at 1 s gives 11 collinear points") {
  Trajectory t({{Vec3(0, 0, 0), 0.0}, {Vec3(10, 0, 0), 10.0}});
  const auto r = resample(t, 1.0);
  REQUIRE(r.size() == 11);
  for (std::size_t i = 0; i < r.size(); ++i) {
    CHECK_THAT(r[i].position.x(), WithinAbs(static_cast<double>(i), 1e-12));
    CHECK(r[i].position.y() == 0.0);
  }
  CHECK(r.is_uniform());
}

TEST_CASE("resample preserves the arc length of a circular arc") {
  // Quarter circle R = 5 given by 7 unevenly timed waypoints.
  std::vector<Waypoint> w;
  const double times[] = {0.0, 0.4, 1.1, 1.5, 2.2, 2.9, 3.0};
  for (double t : times) {
    const double th = std::numbers::pi / 2 * t / 3.0;
    w.push_back({Vec3(5 * std::cos(th), 5 * std::sin(th), 0), t});
  }
  // Dense version of the same arc so the polyline approximates the circle.
  std::vector<Waypoint> dense;
  for (int i = 0; i <= 300; ++i) {
    const double t = 3.0 * i / 300.0;
    const double th = std::numbers::pi / 2 * t / 3.0;
    dense.push_back({Vec3(5 * std::cos(th), 5 * std::sin(th), 0), t});
  }
  const double analytic = 2 * std::numbers::pi * 5 / 4;
  const auto r = resample(Trajectory(dense), 0.1);
  CHECK_THAT(arc_length(r), WithinRel(analytic, 0.01));
  CHECK(r.front().position == dense.front().position);
  CHECK((r.back().position - dense.back().position).norm() < 1e-12);
  CHECK_THROWS_AS(resample(Trajectory(w), 0.0), DomainError);
}

TEST_CASE("resample is idempotent at the same interval") {
  const auto c = testing::circle(4.0, 5.0, 3.0, 0.1);
  const auto once = resample(c, 0.1);
  const auto twice = resample(once, 0.1);
  REQUIRE(once.size() == twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) {
    CHECK((once[i].position - twice[i].position).norm() < 1e-12);
    CHECK_THAT(once[i].time, WithinAbs(twice[i].time, 1e-12));
  }
}

TEST_CASE("straight line at constant speed has zero curvature") {
  const auto t = testing::straight(Vec3(0, 0, 2), Vec3(40, 10, 5), 5.0);
  for (double k : curvature_series(t)) CHECK(std::abs(k) <= 1e-9);
}

TEST_CASE("circle curvature equals 1/R") {
  for (double r : {2.0, 4.0, 8.0}) {
    for (double v : {3.0, 5.0, 8.0}) {
      const auto c = testing::circle(r, v, 6.0, 0.1);
      for (double k : curvature_series(c)) CHECK_THAT(k, WithinAbs(1.0 / r, 1e-3));
    }
  }
}

TEST_CASE("helix curvature equals R / (R^2 + b^2)") {
  for (auto [r, b] : {std::pair{4.0, 1.0}, std::pair{3.0, 2.0}, std::pair{6.0, 0.5}}) {
    const double omega = 1.0;  // speed sqrt(R^2 + b^2) m/s
    const auto h = testing::helix(r, b, omega, 8.0, 0.1);
    for (double k : curvature_series(h)) CHECK_THAT(k, WithinAbs(r / (r * r + b * b), 1e-3));
  }
}

TEST_CASE("curvature at a hover sample is defined as zero") {
  std::vector<Vec3> pts(10, Vec3(1, 2, 3));
  for (double k : curvature_series(Trajectory::uniform(pts, 0.1))) CHECK(k == 0.0);
}

TEST_CASE("curvature needs uniform samples and at least three of them") {
  CHECK_THROWS_AS(curvature_series(Trajectory({{Vec3::Zero(), 0}, {Vec3::UnitX(), 1}})), InvalidTrajectory);
  CHECK_THROWS_AS(curvature_series(Trajectory({{Vec3::Zero(), 0}, {Vec3::UnitX(), 1}, {Vec3(2, 0, 0), 3}})),
                  InvalidTrajectory);
}

TEST_CASE("features of a straight 40 m path") {
  const auto t = testing::straight(Vec3(0, 0, 0), Vec3(40, 0, 0), 4.0);
  const auto f = features(t);
  CHECK_THAT(f.length_D, WithinAbs(40.0, 1e-9));
  CHECK(f.mean_abs_curvature == 0.0);
  CHECK_THAT(f.mean_speed(), WithinAbs(4.0, 1e-9));
}

TEST_CASE("features of a full circle of radius 5") {
  // 2*pi*5 at 5 m/s takes 2*pi s; sample so the last point closes the loop.
  const double dt = 2 * std::numbers::pi / 600.0;
  const auto c = testing::circle(5.0, 5.0, 2 * std::numbers::pi, dt);
  const auto f = features(c);
  CHECK_THAT(f.length_D, WithinRel(2 * std::numbers::pi * 5, 1e-4));
  CHECK_THAT(f.mean_abs_curvature, WithinAbs(0.2, 1e-3));
  double sum = 0.0;
  for (double k : f.curvature_series) sum += k;
  CHECK_THAT(f.mean_abs_curvature, WithinAbs(sum / f.curvature_series.size(), 1e-15));
}

TEST_CASE("a right-angle corner smoothed by an arc lies between Euclidean and Manhattan length") {
  // (0,0) -> (10,0) -> (10,10) with a radius-3 fillet.
  std::vector<Vec3> pts;
  for (int i = 0; i <= 70; ++i) pts.emplace_back(i * 0.1, 0, 0);
  for (int i = 1; i <= 30; ++i) {
    const double th = std::numbers::pi / 2 * i / 30.0;
    pts.emplace_back(7 + 3 * std::sin(th), 3 - 3 * std::cos(th), 0);
  }
  for (int i = 1; i <= 70; ++i) pts.emplace_back(10, 3 + i * 0.1, 0);
  const auto f = features(Trajectory::uniform(pts, 0.1));
  CHECK(f.length_D > std::sqrt(200.0));
  CHECK(f.length_D < 20.0);
}

TEST_CASE("length is invariant under rigid motion") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-10, 10);
  std::vector<Vec3> pts;
  for (int i = 0; i < 50; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  const auto t = Trajectory::uniform(pts, 0.1);
  const Eigen::Matrix3d rot = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  std::vector<Vec3> moved;
  for (const auto& p : pts) moved.push_back(rot * p + Vec3(5, -3, 8));
  CHECK_THAT(arc_length(Trajectory::uniform(moved, 0.1)), WithinAbs(arc_length(t), 1e-9));
}

TEST_CASE("per-second mean averages one-second buckets") {
  std::vector<Vec3> pts(25, Vec3::Zero());
  for (int i = 0; i < 25; ++i) pts[i].x() = i;
  const auto t = Trajectory::uniform(pts, 0.1);
  std::vector<double> s(25);
  for (int i = 0; i < 25; ++i) s[i] = i;
  const auto m = per_second_mean(s, t);
  CHECK_THAT(m[0], WithinAbs(4.5, 1e-12));
  CHECK_THAT(m[9], WithinAbs(4.5, 1e-12));
  CHECK_THAT(m[10], WithinAbs(14.5, 1e-12));
  CHECK_THAT(m[24], WithinAbs(22.0, 1e-12));
}

TEST_CASE("trajectory CSV round trip is exact") {
  const auto c = testing::circle(3.0, 4.0, 2.0, 0.1);
  std::stringstream ss;
  write_trajectory_csv(ss, c);
  CHECK(ss.str().rfind("t,x,y,z\n", 0) == 0);
  const auto back = read_trajectory_csv(ss);
  REQUIRE(back.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(back[i].position == c[i].position);
    CHECK(back[i].time == c[i].time);
  }
}
