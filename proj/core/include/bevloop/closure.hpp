#pragma once

#include <optional>
#include <vector>

#include "bevloop/geometry.hpp"
#include "bevloop/hbst.hpp"

namespace bevloop {

/// Least-squares rigid 2D alignment (scale fixed to 1): returns the SE2
/// minimizing sum ||dst_i - (R src_i + t)||^2. Throws when the source (or
/// destination) points are all coincident.
SE2 EstimateSe2KabschUmeyama(const std::vector<Eigen::Vector2d> &src,
                             const std::vector<Eigen::Vector2d> &dst);

/// A match vote plus the image geometry needed to express keypoints in the
/// metric map frames: cell resolution and each image's origin cell offset.
struct ClosureCandidate {
  MatchVote vote;
  double resolution = 0.5;  // meters per pixel
  Eigen::Vector2i query_origin_cell = Eigen::Vector2i::Zero();
  Eigen::Vector2i reference_origin_cell = Eigen::Vector2i::Zero();
};

struct RansacOptions {
  int iterations = 200;
  double inlier_tolerance = 1.5;  // meters
  int min_inliers = 5;            // gamma
  std::uint64_t seed = 42;
};

struct LoopClosure {
  int query_map = 0;
  int reference_map = 0;
  int inliers = 0;
  /// Maps reference-map ground-aligned xy coordinates (meters) into the
  /// query map's ground-aligned frame.
  SE2 bev_transform;
  /// Full 3D relative transform between the original local frames: applying
  /// it to reference-map points expresses them in the query map's frame.
  SE3 relative_transform;
  std::vector<DescriptorMatch> inlier_pairs;
};

/// 2-point RANSAC over SE(2) followed by a full Kabsch-Umeyama fit on the
/// best hypothesis' inliers. Returns nothing when fewer than `min_inliers`
/// correspondences are consistent. Deterministic: the PRNG stream is derived
/// from the seed and the two map indices.
std::optional<LoopClosure> RansacVerify(const ClosureCandidate &candidate,
                                        const RansacOptions &options = {});

/// Composes the planar alignment with the two ground transforms into the
/// relative 3D transform between the original local map frames.
SE3 ComposeRelativeTransform(const SE2 &bev_transform,
                             const SE3 &ground_query,
                             const SE3 &ground_reference);

struct ScanClosure {
  int query_scan = 0;
  int reference_scan = 0;
  double distance = 0.0;
};

/// Converts a map-level closure into scan-level pairs: reference scan poses
/// are mapped through the relative transform and every cross pair closer
/// than `max_distance` is emitted. Poses are expected in their map-local
/// frames; indices provide the global scan ordinals.
std::vector<ScanClosure> ExpandToScanClosures(
    const LoopClosure &closure, const std::vector<SE3> &query_scan_poses,
    const std::vector<SE3> &reference_scan_poses,
    const std::vector<int> &query_scan_indices,
    const std::vector<int> &reference_scan_indices, double max_distance = 10.0);

}  // namespace bevloop
