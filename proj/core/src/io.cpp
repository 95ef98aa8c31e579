#include "bevloop/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace bevloop {

ScanReadResult ReadScanFile(const std::filesystem::path &path) {
  std::ifstream file(path, std::ios::binary | std::ios::ate);
  if (!file) {
    throw std::runtime_error("cannot open scan file " + path.string());
  }
  const std::streamsize size = file.tellg();
  if (size % 16 != 0) {
    throw std::runtime_error("scan file " + path.string() +
                             ": byte length " + std::to_string(size) +
                             " is not a multiple of 16");
  }
  file.seekg(0);
  std::vector<float> raw(static_cast<std::size_t>(size) / sizeof(float));
  if (size > 0) {
    file.read(reinterpret_cast<char *>(raw.data()), size);
    if (!file) {
      throw std::runtime_error("scan file " + path.string() + ": read failed");
    }
  }

  ScanReadResult result;
  result.cloud.frame_id = "sensor";
  const std::size_t count = raw.size() / 4;
  result.cloud.points.reserve(count);
  result.cloud.intensities.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const float x = raw[4 * i];
    const float y = raw[4 * i + 1];
    const float z = raw[4 * i + 2];
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) {
      ++result.dropped_points;
      continue;
    }
    result.cloud.points.emplace_back(x, y, z);
    result.cloud.intensities.push_back(raw[4 * i + 3]);
  }
  return result;
}

std::vector<SE3> ReadPoseFile(const std::filesystem::path &path) {
  std::ifstream file(path);
  if (!file) {
    throw std::runtime_error("cannot open pose file " + path.string());
  }
  std::vector<SE3> poses;
  std::string line;
  int line_number = 0;
  while (std::getline(file, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream stream(line);
    double values[12];
    int fields = 0;
    double value = 0.0;
    while (stream >> value) {
      if (fields < 12) values[fields] = value;
      ++fields;
    }
    if (fields != 12) {
      throw std::runtime_error("pose file " + path.string() + " line " +
                               std::to_string(line_number) + ": expected 12 " +
                               "fields, got " + std::to_string(fields));
    }
    SE3 pose;
    pose.rotation << values[0], values[1], values[2], values[4], values[5],
        values[6], values[8], values[9], values[10];
    pose.translation << values[3], values[7], values[11];
    if (!pose.rotation.allFinite() || !pose.translation.allFinite()) {
      throw std::runtime_error("pose file " + path.string() + " line " +
                               std::to_string(line_number) +
                               ": non-finite value");
    }
    const double error = pose.OrthonormalityError();
    if (error > 1e-3) {
      throw std::runtime_error("pose file " + path.string() + " line " +
                               std::to_string(line_number) +
                               ": rotation is not orthonormal");
    }
    if (error > 1e-9) {
      pose = pose.Orthonormalized();
    }
    poses.push_back(pose);
  }
  return poses;
}

void WriteScanFile(const std::filesystem::path &path,
                   const PointCloud &cloud) {
  std::ofstream file(path, std::ios::binary);
  if (!file) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  const bool has_intensity = cloud.intensities.size() == cloud.points.size();
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const float values[4] = {static_cast<float>(cloud.points[i].x()),
                             static_cast<float>(cloud.points[i].y()),
                             static_cast<float>(cloud.points[i].z()),
                             has_intensity ? cloud.intensities[i] : 0.0f};
    file.write(reinterpret_cast<const char *>(values), sizeof(values));
  }
}

void WritePoseFile(const std::filesystem::path &path,
                   const std::vector<SE3> &poses) {
  std::ofstream file(path);
  if (!file) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  file << std::setprecision(17);
  for (const auto &pose : poses) {
    for (int row = 0; row < 3; ++row) {
      for (int col = 0; col < 3; ++col) {
        file << pose.rotation(row, col) << " ";
      }
      file << pose.translation(row);
      file << (row == 2 ? "\n" : " ");
    }
  }
}

std::vector<std::filesystem::path> ListScanFiles(
    const std::filesystem::path &directory) {
  if (!std::filesystem::is_directory(directory)) {
    throw std::runtime_error("scan directory " + directory.string() +
                             " does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto &entry : std::filesystem::directory_iterator(directory)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace bevloop
