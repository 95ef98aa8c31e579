#include "bevloop/local_map.hpp"

#include <cmath>
#include <stdexcept>

namespace bevloop {

LocalMapBuilder::LocalMapBuilder(const LocalMapperOptions &options)
    : options_(options) {
  if (options.displacement_threshold <= 0.0) {
    throw std::invalid_argument("displacement threshold must be positive");
  }
  if (options.max_range <= 0.0) {
    throw std::invalid_argument("max range must be positive");
  }
}

std::optional<LocalMap> LocalMapBuilder::AddScan(const ScanRecord &scan) {
  if (scan.index <= last_scan_index_) {
    throw std::invalid_argument("scan indices must be strictly increasing");
  }
  if (!scan.pose.translation.allFinite() || !scan.pose.rotation.allFinite()) {
    throw std::invalid_argument("scan pose must be finite");
  }
  last_scan_index_ = scan.index;

  if (!segment_open_) {
    anchor_pose_ = scan.pose;
    segment_open_ = true;
  }

  const double sq_max_range = options_.max_range * options_.max_range;
  for (const auto &p : scan.cloud.points) {
    if (!p.allFinite()) continue;
    if (p.squaredNorm() > sq_max_range) continue;
    world_points_.push_back(scan.pose * p);
  }
  scan_indices_.push_back(scan.index);
  scan_poses_.push_back(scan.pose);

  const double displacement =
      (scan.pose.translation - anchor_pose_.translation).norm();
  if (displacement > options_.displacement_threshold) {
    return CloseSegment(/*partial=*/false);
  }
  return std::nullopt;
}

std::optional<LocalMap> LocalMapBuilder::Finish() {
  if (!segment_open_) return std::nullopt;
  return CloseSegment(/*partial=*/true);
}

LocalMap LocalMapBuilder::CloseSegment(bool partial) {
  LocalMap map;
  map.map_index = next_map_index_++;
  map.anchor_pose = anchor_pose_;
  map.scan_indices = std::move(scan_indices_);
  map.scan_poses = std::move(scan_poses_);
  map.partial = partial;

  const auto downsampled = VoxelDownsample(world_points_, options_.voxel_size,
                                           options_.max_points_per_voxel);
  const SE3 world_to_anchor = anchor_pose_.Inverse();
  map.points.reserve(downsampled.size());
  for (const auto &p : downsampled) {
    map.points.push_back(world_to_anchor * p);
  }

  world_points_.clear();
  scan_indices_ = {};
  scan_poses_ = {};
  segment_open_ = false;
  return map;
}

std::vector<LocalMap> BuildLocalMaps(const std::vector<ScanRecord> &scans,
                                     const LocalMapperOptions &options) {
  LocalMapBuilder builder(options);
  std::vector<LocalMap> maps;
  for (const auto &scan : scans) {
    if (auto map = builder.AddScan(scan)) {
      maps.push_back(std::move(*map));
    }
  }
  if (auto map = builder.Finish()) {
    maps.push_back(std::move(*map));
  }
  return maps;
}

}  // namespace bevloop
