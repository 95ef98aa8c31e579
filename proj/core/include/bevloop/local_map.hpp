#pragma once

#include <optional>
#include <vector>

#include "bevloop/geometry.hpp"

namespace bevloop {

struct ScanRecord {
  int index = 0;
  PointCloud cloud;  // sensor frame
  SE3 pose;          // sensor in odometry frame
};

/// Voxel-downsampled aggregation of consecutive scans, expressed in the
/// frame of the first scan of its segment.
struct LocalMap {
  int map_index = 0;
  SE3 anchor_pose;                // odometry pose of the first scan
  std::vector<Point3> points;     // anchor frame
  std::vector<int> scan_indices;  // contiguous range of scan ordinals
  std::vector<SE3> scan_poses;    // odometry frame, parallel to scan_indices
  SE3 ground_transform;           // identity until ground alignment runs
  bool ground_aligned = false;
  bool partial = false;  // stream ended before the displacement threshold

  bool empty() const { return points.empty(); }
};

struct LocalMapperOptions {
  double displacement_threshold = 100.0;  // meters of travel per map
  double max_range = 100.0;               // per-scan range cutoff
  double voxel_size = 1.0;
  int max_points_per_voxel = 20;
};

/// Streaming builder: feed scans in order, a LocalMap pops out whenever the
/// displacement from the segment's first scan exceeds the threshold. The
/// triggering scan is included in the closed map; the next segment starts at
/// the following scan.
class LocalMapBuilder {
 public:
  explicit LocalMapBuilder(const LocalMapperOptions &options);

  std::optional<LocalMap> AddScan(const ScanRecord &scan);

  /// Flushes the trailing scans as a partial map, if any.
  std::optional<LocalMap> Finish();

  int maps_emitted() const { return next_map_index_; }

 private:
  LocalMap CloseSegment(bool partial);

  LocalMapperOptions options_;
  int next_map_index_ = 0;
  int last_scan_index_ = -1;
  bool segment_open_ = false;
  SE3 anchor_pose_;
  std::vector<Point3> world_points_;
  std::vector<int> scan_indices_;
  std::vector<SE3> scan_poses_;
};

/// Convenience wrapper for non-streaming callers.
std::vector<LocalMap> BuildLocalMaps(const std::vector<ScanRecord> &scans,
                                     const LocalMapperOptions &options);

}  // namespace bevloop
