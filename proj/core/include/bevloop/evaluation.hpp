#pragma once

#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include "bevloop/geometry.hpp"
#include "bevloop/ground_alignment.hpp"
#include "bevloop/local_map.hpp"

namespace bevloop {

using IndexPair = std::pair<int, int>;  // canonicalized: first < second

struct ReferenceParams {
  double keyframe_spacing = 2.0;          // meters between trajectory samples
  int keyframe_skip = 100;                // consecutive keyframes ignored
  double overlap_threshold = 0.5;         // o > threshold becomes a closure
  double correspondence_distance = 2.0;   // meters, keyframe overlap test
  double keyframe_voxel_size = 0.5;       // downsampling of keyframe maps
};

/// Ground-truth scan-level reference closures: keyframes sampled every
/// `keyframe_spacing` meters, overlap computed with both keyframe maps
/// placed by their ground-truth poses, candidate pairs expanded to all
/// scan-index pairs. Throws when scans and poses disagree in count.
std::set<IndexPair> ReferenceScanClosures(const std::vector<PointCloud> &scans,
                                          const std::vector<SE3> &gt_poses,
                                          double max_range,
                                          const ReferenceParams &params = {});

/// Ground-truth map-level reference closures: every pair of ground-truth
/// posed local maps with at least one correspondence within
/// `correspondence_distance`. Partial maps are skipped.
std::set<IndexPair> ReferenceMapClosures(const std::vector<LocalMap> &gt_maps,
                                         double correspondence_distance = 1.0);

/// Cross-session variant: pairs are (query map, reference map) with both
/// sessions' ground truth in one global frame; no canonicalization since the
/// two index spaces are distinct.
std::set<IndexPair> CrossSessionMapReferences(
    const std::vector<LocalMap> &query_gt_maps,
    const std::vector<LocalMap> &reference_gt_maps,
    double correspondence_distance = 1.0);

/// Rebuilds maps over an existing scan partition with a different pose set
/// (ground truth instead of odometry). Throws when the partition does not
/// cover the scans.
std::vector<LocalMap> RebuildMapsWithPoses(
    const std::vector<PointCloud> &scans, const std::vector<SE3> &poses,
    const std::vector<LocalMap> &partition_source,
    const LocalMapperOptions &options);

struct Detection {
  IndexPair pair;
  int inliers = 0;
};

struct PrPoint {
  int gamma = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Precision/recall per distinct inlier threshold, descending gamma. Empty
/// detections produce the single conventional point (P=1, R=0).
std::vector<PrPoint> PrCurve(const std::vector<Detection> &detections,
                             const std::set<IndexPair> &references);

/// Trapezoidal area under the PR curve over the recall axis, anchored at
/// recall zero with the highest-gamma precision.
double AveragePrecision(const std::vector<PrPoint> &curve);

/// Maximum recall among points at exactly full precision; 0 if none.
double RecallAtFullPrecision(const std::vector<PrPoint> &curve);

double MaxF1(const std::vector<PrPoint> &curve);

/// Fraction of transformed query points with a reference point within
/// `correspondence_distance`.
double RelativeFitness(const std::vector<Point3> &query_points,
                       const std::vector<Point3> &reference_points,
                       const SE3 &transform,
                       double correspondence_distance = 1.0);

struct StressResult {
  double magnitude_deg = 0.0;
  double mean_error_deg = 0.0;
};

/// Induces rotations of the given magnitudes about random axes in the
/// xy-plane, re-solves the ground alignment, and reports the mean geodesic
/// deviation of (R_induced * R_estimated) from identity per magnitude.
std::vector<StressResult> GroundAlignmentStress(
    const std::vector<std::vector<Point3>> &maps,
    const std::vector<double> &magnitudes_deg, int trials = 10,
    std::uint64_t seed = 42, const GroundSolverOptions &options = {},
    double sample_cell_size = 5.0);

}  // namespace bevloop
