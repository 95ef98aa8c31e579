#include <doctest.h>

#include <Eigen/Dense>
#include <random>
#include <unordered_set>

#include "bevloop/ground_alignment.hpp"

using namespace bevloop;

namespace {

std::vector<Point3> MakePlane(int count, double extent, double noise,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> xy(-extent, extent);
  std::uniform_real_distribution<double> dz(-noise, noise);
  std::vector<Point3> points;
  points.reserve(count);
  for (int i = 0; i < count; ++i) {
    points.emplace_back(xy(rng), xy(rng), noise > 0.0 ? dz(rng) : 0.0);
  }
  return points;
}

std::vector<Point3> Rotated(const std::vector<Point3> &points,
                            const Eigen::Matrix3d &rotation) {
  std::vector<Point3> out;
  out.reserve(points.size());
  for (const auto &p : points) out.push_back(rotation * p);
  return out;
}

double TiltErrorDeg(const Eigen::Matrix3d &induced,
                    const GroundSolveReport &report) {
  return So3Log(induced * report.transform.rotation).norm() * 180.0 / M_PI;
}

}  // namespace

TEST_CASE("sample_ground keeps the lowest point per cell") {
  const std::vector<Point3> points = {Point3(1.0, 1.0, 0.2),
                                      Point3(2.0, 2.0, -0.1)};
  const auto samples = SampleGround(points, 5.0);
  REQUIRE(samples.size() == 1);
  CHECK(samples[0].point == Point3(2.0, 2.0, -0.1));
}

TEST_CASE("sample_ground singleton") {
  const auto samples = SampleGround({Point3(3.0, 4.0, 5.0)}, 5.0);
  REQUIRE(samples.size() == 1);
  CHECK(samples[0].point == Point3(3.0, 4.0, 5.0));
}

TEST_CASE("sample_ground ties break to the first occurrence") {
  const std::vector<Point3> points = {Point3(1.0, 1.0, 0.5),
                                      Point3(2.0, 2.0, 0.5)};
  const auto samples = SampleGround(points, 5.0);
  REQUIRE(samples.size() == 1);
  CHECK(samples[0].point == points[0]);
}

TEST_CASE("sample_ground cell count matches a hash-grid oracle") {
  const auto points = MakePlane(5000, 50.0, 0.0, 3);  // 100 m x 100 m spread
  const auto samples = SampleGround(points, 5.0);
  CHECK(samples.size() <= 441);  // 21 x 21 cells

  std::unordered_set<std::int64_t> occupied;
  for (const auto &p : points) {
    const auto cx = static_cast<std::int64_t>(std::floor(p.x() / 5.0));
    const auto cy = static_cast<std::int64_t>(std::floor(p.y() / 5.0));
    occupied.insert(cx * 100003 + cy);
  }
  CHECK(samples.size() == occupied.size());
}

TEST_CASE("sample_ground rejects an empty map") {
  CHECK_THROWS_WITH_AS(SampleGround(std::vector<Point3>{}, 5.0),
                       "empty local map", std::invalid_argument);
}

TEST_CASE("solve_ground on z=0 converges to identity in one iteration") {
  const auto samples = SampleGround(MakePlane(2000, 40.0, 0.0, 5), 5.0);
  const auto report = SolveGround(samples);
  CHECK(report.iterations == 1);
  CHECK(report.valid);
  CHECK(report.transform.IsApprox(SE3::Identity(), 1e-12));
}

TEST_CASE("solve_ground on a lifted horizontal plane is a pure z shift") {
  auto points = MakePlane(2000, 40.0, 0.0, 7);
  for (auto &p : points) p.z() = 2.0;
  const auto report = SolveGround(SampleGround(points, 5.0));
  CHECK(report.valid);
  CHECK(report.transform.translation.x() == 0.0);
  CHECK(report.transform.translation.y() == 0.0);
  CHECK(report.transform.translation.z() == doctest::Approx(-2.0).epsilon(1e-9));
  CHECK(So3Log(report.transform.rotation).norm() < 1e-9);

  // Plane-fit oracle via SVD on centered points agrees: the fitted normal is
  // +z and the centroid height is 2.
  Eigen::MatrixXd centered(points.size(), 3);
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto &p : points) mean += p;
  mean /= static_cast<double>(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    centered.row(i) = (points[i] - mean).transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::Vector3d normal = svd.matrixV().col(2);
  CHECK(std::abs(normal.z()) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(mean.z() == doctest::Approx(2.0));
}

TEST_CASE("solve_ground recovers a 10 degree tilt") {
  const auto plane = MakePlane(3000, 50.0, 0.0, 11);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> axis_angle(0.0, 2.0 * M_PI);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const double phi = axis_angle(rng);
    const Eigen::Matrix3d induced = So3Exp(
        (10.0 * M_PI / 180.0) * Eigen::Vector3d(std::cos(phi), std::sin(phi),
                                                0.0));
    const auto report = SolveGround(SampleGround(Rotated(plane, induced), 5.0));
    REQUIRE(report.valid);
    worst = std::max(worst, TiltErrorDeg(induced, report));
  }
  CHECK(worst <= 0.07);
}

TEST_CASE("solve_ground recovery curve up to 60 degrees") {
  const auto plane = MakePlane(3000, 50.0, 0.02, 17);
  const std::vector<std::pair<double, double>> cases = {
      {10.0, 0.1}, {20.0, 0.2}, {30.0, 0.5}, {40.0, 1.0}, {50.0, 2.0},
      {60.0, 5.0}};
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> axis_angle(0.0, 2.0 * M_PI);
  for (const auto &[magnitude, bound] : cases) {
    double error_sum = 0.0;
    const int trials = 4;
    for (int trial = 0; trial < trials; ++trial) {
      const double phi = axis_angle(rng);
      const Eigen::Matrix3d induced =
          So3Exp((magnitude * M_PI / 180.0) *
                 Eigen::Vector3d(std::cos(phi), std::sin(phi), 0.0));
      const auto report =
          SolveGround(SampleGround(Rotated(plane, induced), 5.0));
      REQUIRE(report.valid);
      error_sum += TiltErrorDeg(induced, report);
    }
    CHECK(error_sum / trials <= bound);
  }
}

TEST_CASE("solver structure invariant holds over randomized solves") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> axis_angle(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> magnitude(0.0, 50.0 * M_PI / 180.0);
  std::uniform_real_distribution<double> lift(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    auto plane = MakePlane(600, 30.0, 0.02, 100 + trial);
    const double z0 = lift(rng);
    for (auto &p : plane) p.z() += z0;
    const double phi = axis_angle(rng);
    const Eigen::Matrix3d induced = So3Exp(
        magnitude(rng) * Eigen::Vector3d(std::cos(phi), std::sin(phi), 0.0));
    const auto report = SolveGround(SampleGround(Rotated(plane, induced), 5.0));
    CHECK(std::abs(report.transform.translation.x()) < 1e-9);
    CHECK(std::abs(report.transform.translation.y()) < 1e-9);
    CHECK(std::abs(So3Log(report.transform.rotation).z()) < 1e-9);
  }
}

TEST_CASE("weighted cost is non-increasing on noiseless planes") {
  const auto plane = MakePlane(2000, 40.0, 0.0, 29);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> axis_angle(0.0, 2.0 * M_PI);
  for (const double magnitude : {5.0, 15.0, 30.0, 45.0, 60.0}) {
    const double phi = axis_angle(rng);
    const Eigen::Matrix3d induced =
        So3Exp((magnitude * M_PI / 180.0) *
               Eigen::Vector3d(std::cos(phi), std::sin(phi), 0.0));
    const auto report = SolveGround(SampleGround(Rotated(plane, induced), 5.0));
    REQUIRE(report.cost_trace.size() >= 1);
    for (std::size_t i = 1; i < report.cost_trace.size(); ++i) {
      CHECK(report.cost_trace[i] <= report.cost_trace[i - 1] + 1e-9);
    }
  }
}

TEST_CASE("solve_ground determinism") {
  const auto samples = SampleGround(MakePlane(1500, 30.0, 0.02, 37), 5.0);
  const auto a = SolveGround(samples);
  const auto b = SolveGround(samples);
  CHECK(a.transform.rotation == b.transform.rotation);
  CHECK(a.transform.translation == b.transform.translation);
  CHECK(a.iterations == b.iterations);
  CHECK(a.final_residual == b.final_residual);
  CHECK(a.inlier_count == b.inlier_count);
}

TEST_CASE("degenerate sample geometry is rejected") {
  CHECK_THROWS_WITH_AS(
      SolveGround({GroundSample{Point3(0.0, 0.0, 0.0)},
                   GroundSample{Point3(1.0, 0.0, 0.0)}}),
      "rank-deficient ground fit", std::invalid_argument);
  // Collinear in xy.
  std::vector<GroundSample> collinear;
  for (int i = 0; i < 10; ++i) {
    collinear.push_back(GroundSample{Point3(static_cast<double>(i),
                                            2.0 * i, 0.1 * i)});
  }
  CHECK_THROWS_WITH_AS(SolveGround(collinear), "rank-deficient ground fit",
                       std::invalid_argument);
}

TEST_CASE("fewer than three inliers yields a flagged identity") {
  // Two near-plane samples plus one far outlier: the robust gate collapses
  // to the fixed inlier distance and only two samples survive.
  const std::vector<GroundSample> samples = {
      GroundSample{Point3(0.0, 0.0, 0.0)},
      GroundSample{Point3(10.0, 0.0, 0.0)},
      GroundSample{Point3(0.0, 10.0, 1000.0)}};
  const auto report = SolveGround(samples);
  CHECK_FALSE(report.valid);
  CHECK(report.inlier_count < 3);
  CHECK(report.transform.IsApprox(SE3::Identity(), 1e-15));
}

TEST_CASE("apply_ground transforms points and records the transform") {
  LocalMap map;
  map.map_index = 4;
  map.points = MakePlane(1500, 30.0, 0.0, 41);
  const Eigen::Matrix3d induced =
      So3Exp((30.0 * M_PI / 180.0) * Eigen::Vector3d(1.0, 0.0, 0.0));
  for (auto &p : map.points) p = induced * p;

  const auto report = SolveGround(SampleGround(map, 5.0));
  const LocalMap aligned = ApplyGroundAlignment(map, report);
  CHECK(aligned.ground_aligned);
  CHECK(aligned.ground_transform.IsApprox(report.transform, 0.0));
  CHECK(aligned.scan_indices == map.scan_indices);

  double rms = 0.0;
  for (const auto &p : aligned.points) rms += p.z() * p.z();
  rms = std::sqrt(rms / aligned.points.size());
  CHECK(rms < 0.05);

  // Re-solving on the aligned map is near identity; applying the original
  // report twice is not the same as once.
  const auto second = SolveGround(SampleGround(aligned, 5.0));
  CHECK(So3Log(second.transform.rotation).norm() < 1e-6);
  CHECK(std::abs(second.transform.translation.z()) < 1e-6);

  const LocalMap twice = ApplyGroundAlignment(aligned, report);
  CHECK((twice.points[0] - aligned.points[0]).norm() > 1e-12);
}

TEST_CASE("apply_ground with identity report leaves the map unchanged") {
  LocalMap map;
  map.points = {Point3(1.0, 2.0, 3.0), Point3(-1.0, 0.5, 0.0)};
  GroundSolveReport report;
  const LocalMap aligned = ApplyGroundAlignment(map, report);
  REQUIRE(aligned.points.size() == map.points.size());
  for (std::size_t i = 0; i < map.points.size(); ++i) {
    CHECK(aligned.points[i] == map.points[i]);
  }
}
