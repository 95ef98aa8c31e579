#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bevloop/geometry.hpp"

namespace bevloop {

struct SessionManifest {
  std::filesystem::path scan_directory;
  std::filesystem::path pose_file;
  std::optional<std::filesystem::path> ground_truth_pose_file;
  std::string session_id = "session";
};

struct ScanReadResult {
  PointCloud cloud;
  int dropped_points = 0;  // non-finite coordinates
};

/// Binary scans: consecutive little-endian float32 quadruples
/// (x, y, z, intensity). Throws when the byte length is not a multiple of 16.
ScanReadResult ReadScanFile(const std::filesystem::path &path);

/// Text poses: one pose per line, 12 whitespace-separated reals forming a
/// row-major 3x4 [R | t]. Rotations with orthonormality error in
/// (1e-9, 1e-3] are re-projected onto SO(3); anything worse rejects the
/// line. Errors carry the 1-based line number.
std::vector<SE3> ReadPoseFile(const std::filesystem::path &path);

void WriteScanFile(const std::filesystem::path &path, const PointCloud &cloud);
void WritePoseFile(const std::filesystem::path &path,
                   const std::vector<SE3> &poses);

/// Scan files of a session directory, sorted by filename.
std::vector<std::filesystem::path> ListScanFiles(
    const std::filesystem::path &directory);

}  // namespace bevloop
