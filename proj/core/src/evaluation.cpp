#include "bevloop/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>

namespace bevloop {

namespace {

IndexPair Canonical(int a, int b) {
  return a < b ? IndexPair{a, b} : IndexPair{b, a};
}

struct Keyframe {
  int first_scan = 0;
  int last_scan = 0;  // inclusive
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  std::vector<Point3> points;  // world frame, downsampled
};

}  // namespace

std::set<IndexPair> ReferenceScanClosures(const std::vector<PointCloud> &scans,
                                          const std::vector<SE3> &gt_poses,
                                          double max_range,
                                          const ReferenceParams &params) {
  if (scans.size() != gt_poses.size()) {
    std::ostringstream message;
    message << "ground truth poses missing for scans: have " << gt_poses.size()
            << " poses for " << scans.size() << " scans";
    throw std::invalid_argument(message.str());
  }
  if (scans.empty()) return {};

  // Sample the trajectory every keyframe_spacing meters; a keyframe map
  // aggregates the scans between consecutive samples.
  std::vector<Keyframe> keyframes;
  VoxelGrid *current_grid = nullptr;
  std::vector<std::unique_ptr<VoxelGrid>> grids;
  for (std::size_t i = 0; i < scans.size(); ++i) {
    const Eigen::Vector3d position = gt_poses[i].translation;
    const bool new_keyframe =
        keyframes.empty() ||
        (position - keyframes.back().position).norm() >=
            params.keyframe_spacing;
    if (new_keyframe) {
      Keyframe kf;
      kf.first_scan = static_cast<int>(i);
      kf.position = position;
      keyframes.push_back(std::move(kf));
      grids.push_back(std::make_unique<VoxelGrid>(params.keyframe_voxel_size,
                                                  1));
      current_grid = grids.back().get();
    }
    Keyframe &kf = keyframes.back();
    kf.last_scan = static_cast<int>(i);
    for (const auto &p : scans[i].points) {
      const Point3 world = gt_poses[i] * p;
      if (current_grid->Insert(world)) {
        kf.points.push_back(world);
      }
    }
  }

  std::set<IndexPair> result;
  const int n = static_cast<int>(keyframes.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + params.keyframe_skip + 1; j < n; ++j) {
      const double distance =
          (keyframes[i].position - keyframes[j].position).norm();
      if (distance > max_range) continue;
      if (keyframes[i].points.empty() || keyframes[j].points.empty()) continue;

      VoxelGrid grid(params.correspondence_distance, 1 << 20);
      for (const auto &p : keyframes[j].points) grid.Insert(p);
      std::size_t matched = 0;
      for (const auto &p : keyframes[i].points) {
        if (grid.HasNeighborWithin(p, params.correspondence_distance)) {
          ++matched;
        }
      }
      const double overlap =
          static_cast<double>(matched) / keyframes[i].points.size();
      if (overlap <= params.overlap_threshold) continue;

      for (int a = keyframes[i].first_scan; a <= keyframes[i].last_scan; ++a) {
        for (int b = keyframes[j].first_scan; b <= keyframes[j].last_scan;
             ++b) {
          result.insert(Canonical(a, b));
        }
      }
    }
  }
  return result;
}

std::set<IndexPair> ReferenceMapClosures(const std::vector<LocalMap> &gt_maps,
                                         double correspondence_distance) {
  std::set<IndexPair> result;
  const int n = static_cast<int>(gt_maps.size());
  for (int j = 0; j < n; ++j) {
    if (gt_maps[j].partial || gt_maps[j].empty()) continue;
    VoxelGrid grid(correspondence_distance, 1 << 20);
    for (const auto &p : gt_maps[j].points) {
      grid.Insert(gt_maps[j].anchor_pose * p);
    }
    for (int i = 0; i < j; ++i) {
      if (gt_maps[i].partial || gt_maps[i].empty()) continue;
      for (const auto &p : gt_maps[i].points) {
        if (grid.HasNeighborWithin(gt_maps[i].anchor_pose * p,
                                   correspondence_distance)) {
          result.insert(Canonical(gt_maps[i].map_index,
                                  gt_maps[j].map_index));
          break;
        }
      }
    }
  }
  return result;
}

std::set<IndexPair> CrossSessionMapReferences(
    const std::vector<LocalMap> &query_gt_maps,
    const std::vector<LocalMap> &reference_gt_maps,
    double correspondence_distance) {
  std::set<IndexPair> result;
  for (const auto &reference : reference_gt_maps) {
    if (reference.partial || reference.empty()) continue;
    VoxelGrid grid(correspondence_distance, 1 << 20);
    for (const auto &p : reference.points) {
      grid.Insert(reference.anchor_pose * p);
    }
    for (const auto &query : query_gt_maps) {
      if (query.partial || query.empty()) continue;
      for (const auto &p : query.points) {
        if (grid.HasNeighborWithin(query.anchor_pose * p,
                                   correspondence_distance)) {
          result.insert(IndexPair{query.map_index, reference.map_index});
          break;
        }
      }
    }
  }
  return result;
}

std::vector<LocalMap> RebuildMapsWithPoses(
    const std::vector<PointCloud> &scans, const std::vector<SE3> &poses,
    const std::vector<LocalMap> &partition_source,
    const LocalMapperOptions &options) {
  if (scans.size() != poses.size()) {
    throw std::invalid_argument("scan and pose counts differ");
  }
  std::size_t covered = 0;
  for (const auto &map : partition_source) covered += map.scan_indices.size();
  if (covered != scans.size()) {
    throw std::invalid_argument(
        "partition does not cover the scan sequence: " +
        std::to_string(covered) + " of " + std::to_string(scans.size()));
  }

  std::vector<LocalMap> rebuilt;
  rebuilt.reserve(partition_source.size());
  const double sq_max_range = options.max_range * options.max_range;
  for (const auto &source : partition_source) {
    LocalMap map;
    map.map_index = source.map_index;
    map.partial = source.partial;
    map.scan_indices = source.scan_indices;
    map.anchor_pose = poses.at(source.scan_indices.front());
    std::vector<Point3> world_points;
    for (const int scan_index : source.scan_indices) {
      map.scan_poses.push_back(poses.at(scan_index));
      for (const auto &p : scans.at(scan_index).points) {
        if (!p.allFinite() || p.squaredNorm() > sq_max_range) continue;
        world_points.push_back(poses.at(scan_index) * p);
      }
    }
    const auto downsampled = VoxelDownsample(world_points, options.voxel_size,
                                             options.max_points_per_voxel);
    const SE3 world_to_anchor = map.anchor_pose.Inverse();
    map.points.reserve(downsampled.size());
    for (const auto &p : downsampled) map.points.push_back(world_to_anchor * p);
    rebuilt.push_back(std::move(map));
  }
  return rebuilt;
}

std::vector<PrPoint> PrCurve(const std::vector<Detection> &detections,
                             const std::set<IndexPair> &references) {
  if (references.empty()) {
    throw std::invalid_argument("reference closure set is empty");
  }
  if (detections.empty()) {
    // Convention: an empty detector gets full precision at zero recall so
    // degenerate runs still produce defined metrics.
    return {PrPoint{0, 1.0, 0.0, 0.0}};
  }

  // Deduplicate pairs, keeping the strongest detection per pair. Pairs are
  // matched against references verbatim, so callers decide the orientation
  // convention (canonicalized in-session, query-vs-reference across
  // sessions).
  std::map<IndexPair, int> by_pair;
  for (const auto &detection : detections) {
    auto [it, inserted] = by_pair.try_emplace(detection.pair, detection.inliers);
    if (!inserted) it->second = std::max(it->second, detection.inliers);
  }

  std::vector<int> gammas;
  for (const auto &[pair, inliers] : by_pair) gammas.push_back(inliers);
  std::sort(gammas.begin(), gammas.end(), std::greater<>());
  gammas.erase(std::unique(gammas.begin(), gammas.end()), gammas.end());

  std::vector<PrPoint> curve;
  curve.reserve(gammas.size());
  for (const int gamma : gammas) {
    int true_positives = 0;
    int predicted = 0;
    for (const auto &[pair, inliers] : by_pair) {
      if (inliers < gamma) continue;
      ++predicted;
      if (references.contains(pair)) ++true_positives;
    }
    PrPoint point;
    point.gamma = gamma;
    point.precision = static_cast<double>(true_positives) / predicted;
    point.recall =
        static_cast<double>(true_positives) / references.size();
    point.f1 = point.precision + point.recall > 0.0
                   ? 2.0 * point.precision * point.recall /
                         (point.precision + point.recall)
                   : 0.0;
    curve.push_back(point);
  }
  return curve;
}

double AveragePrecision(const std::vector<PrPoint> &curve) {
  if (curve.empty()) return 0.0;
  // Points ordered by descending gamma have non-decreasing recall; anchor
  // the curve at recall zero with the first point's precision.
  double area = 0.0;
  double previous_recall = 0.0;
  double previous_precision = curve.front().precision;
  for (const auto &point : curve) {
    area += (point.recall - previous_recall) * 0.5 *
            (point.precision + previous_precision);
    previous_recall = point.recall;
    previous_precision = point.precision;
  }
  return area;
}

double RecallAtFullPrecision(const std::vector<PrPoint> &curve) {
  double best = 0.0;
  for (const auto &point : curve) {
    if (point.precision == 1.0) best = std::max(best, point.recall);
  }
  return best;
}

double MaxF1(const std::vector<PrPoint> &curve) {
  double best = 0.0;
  for (const auto &point : curve) best = std::max(best, point.f1);
  return best;
}

double RelativeFitness(const std::vector<Point3> &query_points,
                       const std::vector<Point3> &reference_points,
                       const SE3 &transform, double correspondence_distance) {
  if (query_points.empty() || reference_points.empty()) {
    throw std::invalid_argument("fitness needs non-empty maps");
  }
  VoxelGrid grid(correspondence_distance, 1 << 20);
  for (const auto &p : reference_points) grid.Insert(p);
  std::size_t matched = 0;
  for (const auto &p : query_points) {
    if (grid.HasNeighborWithin(transform * p, correspondence_distance)) {
      ++matched;
    }
  }
  return static_cast<double>(matched) / query_points.size();
}

std::vector<StressResult> GroundAlignmentStress(
    const std::vector<std::vector<Point3>> &maps,
    const std::vector<double> &magnitudes_deg, int trials, std::uint64_t seed,
    const GroundSolverOptions &options, double sample_cell_size) {
  std::vector<StressResult> results;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> axis_angle(0.0, 2.0 * M_PI);
  for (const double magnitude : magnitudes_deg) {
    const double magnitude_rad = magnitude * M_PI / 180.0;
    double error_sum = 0.0;
    int count = 0;
    for (const auto &map : maps) {
      for (int trial = 0; trial < trials; ++trial) {
        const double phi = axis_angle(rng);
        const Eigen::Vector3d axis(std::cos(phi), std::sin(phi), 0.0);
        const Eigen::Matrix3d induced = So3Exp(magnitude_rad * axis);
        std::vector<Point3> rotated;
        rotated.reserve(map.size());
        for (const auto &p : map) rotated.push_back(induced * p);

        const auto samples = SampleGround(rotated, sample_cell_size);
        const auto report = SolveGround(samples, options);
        const Eigen::Vector3d deviation =
            So3Log(induced * report.transform.rotation);
        error_sum += deviation.norm() * 180.0 / M_PI;
        ++count;
      }
    }
    results.push_back(
        StressResult{magnitude, count > 0 ? error_sum / count : 0.0});
  }
  return results;
}

}  // namespace bevloop
