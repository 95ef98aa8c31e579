#include <doctest.h>

#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "bevloop/config.hpp"
#include "bevloop/io.hpp"

using namespace bevloop;

namespace {

std::filesystem::path TempFile(const std::string &name) {
  return std::filesystem::temp_directory_path() / name;
}

void WriteBytes(const std::filesystem::path &path,
                const std::vector<float> &values) {
  std::ofstream file(path, std::ios::binary);
  file.write(reinterpret_cast<const char *>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(float)));
}

}  // namespace

TEST_CASE("a 32-byte scan file holds two points") {
  const auto path = TempFile("bevloop_scan_two.bin");
  WriteBytes(path, {1.0f, 2.0f, 3.0f, 0.5f, -1.0f, -2.0f, -3.0f, 0.25f});
  const auto result = ReadScanFile(path);
  REQUIRE(result.cloud.points.size() == 2);
  CHECK(result.cloud.points[0] == Point3(1.0f, 2.0f, 3.0f));
  CHECK(result.cloud.points[1] == Point3(-1.0f, -2.0f, -3.0f));
  CHECK(result.cloud.intensities[1] == 0.25f);
  CHECK(result.dropped_points == 0);
  std::filesystem::remove(path);
}

TEST_CASE("an empty scan file is an empty cloud") {
  const auto path = TempFile("bevloop_scan_empty.bin");
  WriteBytes(path, {});
  const auto result = ReadScanFile(path);
  CHECK(result.cloud.points.empty());
  std::filesystem::remove(path);
}

TEST_CASE("NaN points are dropped and counted") {
  const auto path = TempFile("bevloop_scan_nan.bin");
  std::vector<float> values;
  for (int i = 0; i < 10; ++i) {
    values.insert(values.end(),
                  {static_cast<float>(i), 0.0f, 0.0f, 1.0f});
  }
  values[4 * 4] = std::numeric_limits<float>::quiet_NaN();
  WriteBytes(path, values);
  const auto result = ReadScanFile(path);
  CHECK(result.cloud.points.size() == 9);
  CHECK(result.dropped_points == 1);
  std::filesystem::remove(path);
}

TEST_CASE("scan files with a broken length are rejected") {
  const auto path = TempFile("bevloop_scan_bad.bin");
  std::ofstream file(path, std::ios::binary);
  file.write("abcdefghij", 10);
  file.close();
  CHECK_THROWS_WITH_AS(ReadScanFile(path),
                       doctest::Contains("not a multiple of 16"),
                       std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("identity pose line parses to identity") {
  const auto path = TempFile("bevloop_poses_identity.txt");
  std::ofstream(path) << "1 0 0 0 0 1 0 0 0 0 1 0\n";
  const auto poses = ReadPoseFile(path);
  REQUIRE(poses.size() == 1);
  CHECK(poses[0].IsApprox(SE3::Identity(), 0.0));
  std::filesystem::remove(path);
}

TEST_CASE("pose lines with the wrong field count name the line") {
  const auto path = TempFile("bevloop_poses_short.txt");
  std::ofstream(path) << "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1\n";
  CHECK_THROWS_WITH_AS(ReadPoseFile(path), doctest::Contains("line 2"),
                       std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("a thousand poses round trip in order") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<SE3> poses;
  for (int i = 0; i < 1000; ++i) {
    SE3 pose;
    Eigen::Vector3d axis(unit(rng), unit(rng), unit(rng));
    if (axis.norm() < 1e-9) axis = Eigen::Vector3d::UnitX();
    pose.rotation = So3Exp(axis.normalized() * std::abs(unit(rng)) * 3.0);
    pose.translation = Eigen::Vector3d(100.0 * unit(rng), 100.0 * unit(rng),
                                       10.0 * unit(rng));
    poses.push_back(pose);
  }
  const auto path = TempFile("bevloop_poses_roundtrip.txt");
  WritePoseFile(path, poses);
  const auto loaded = ReadPoseFile(path);
  REQUIRE(loaded.size() == poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    CHECK(loaded[i].IsApprox(poses[i], 1e-12));
  }
  std::filesystem::remove(path);
}

TEST_CASE("slightly drifted rotations are re-orthonormalized") {
  const auto path = TempFile("bevloop_poses_drift.txt");
  std::ofstream(path) << "1 1e-6 0 0 0 1 0 0 0 0 1 0\n";
  const auto poses = ReadPoseFile(path);
  REQUIRE(poses.size() == 1);
  CHECK(poses[0].OrthonormalityError() < 1e-12);
  std::filesystem::remove(path);
}

TEST_CASE("badly non-orthonormal rotations are rejected with the line") {
  const auto path = TempFile("bevloop_poses_bad.txt");
  std::ofstream(path) << "1 0.5 0 0 0 1 0 0 0 0 1 0\n";
  CHECK_THROWS_WITH_AS(ReadPoseFile(path), doctest::Contains("line 1"),
                       std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("non-finite pose values are rejected") {
  const auto path = TempFile("bevloop_poses_nan.txt");
  std::ofstream(path) << "1 0 0 nan 0 1 0 0 0 0 1 0\n";
  CHECK_THROWS_WITH_AS(ReadPoseFile(path), doctest::Contains("line 1"),
                       std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("scan listing is sorted and validated") {
  const auto dir = TempFile("bevloop_scandir");
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "000002.bin") << "";
  std::ofstream(dir / "000000.bin") << "";
  std::ofstream(dir / "000001.bin") << "";
  const auto files = ListScanFiles(dir);
  REQUIRE(files.size() == 3);
  CHECK(files[0].filename() == "000000.bin");
  CHECK(files[2].filename() == "000002.bin");
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(ListScanFiles(dir), std::runtime_error);
}

TEST_CASE("config round trips through its text form") {
  PipelineConfig config;
  config.displacement_threshold = 57.5;
  config.min_inliers = 9;
  config.seed = 123456789ULL;
  config.ground.inlier_distance = 0.75;
  config.feature_pruning = false;
  const std::string text = SerializeConfig(config);
  std::istringstream in(text);
  const PipelineConfig parsed = ParseConfig(in);
  CHECK(SerializeConfig(parsed) == text);
  CHECK(parsed.displacement_threshold == config.displacement_threshold);
  CHECK(parsed.min_inliers == config.min_inliers);
  CHECK(parsed.seed == config.seed);
  CHECK(parsed.ground.inlier_distance == config.ground.inlier_distance);
  CHECK(parsed.feature_pruning == false);
}

TEST_CASE("config parsing accepts comments and blank lines") {
  std::istringstream in(
      "# pipeline overrides\n"
      "\n"
      "gamma = 7   # stricter\n"
      "tau_match = 45\n");
  const auto config = ParseConfig(in);
  CHECK(config.min_inliers == 7);
  CHECK(config.match_threshold == 45);
  CHECK(config.displacement_threshold == 100.0);  // untouched default
}

TEST_CASE("unknown keys and bad values name their line") {
  std::istringstream unknown("definitely_not_a_key = 3\n");
  CHECK_THROWS_WITH_AS(ParseConfig(unknown), doctest::Contains("line 1"),
                       std::invalid_argument);
  std::istringstream bad("\ngamma = banana\n");
  CHECK_THROWS_WITH_AS(ParseConfig(bad), doctest::Contains("line 2"),
                       std::invalid_argument);
}

TEST_CASE("config validation guards the parameter domains") {
  PipelineConfig config;
  config.match_threshold = 300;  // bits beyond the descriptor length
  CHECK_THROWS_AS(config.Validate(), std::invalid_argument);
  config = PipelineConfig{};
  config.displacement_threshold = -1.0;
  CHECK_THROWS_AS(config.Validate(), std::invalid_argument);
  config = PipelineConfig{};
  config.features.fast_threshold = 0;
  CHECK_THROWS_AS(config.Validate(), std::invalid_argument);
  CHECK_NOTHROW(PipelineConfig{}.Validate());
}
