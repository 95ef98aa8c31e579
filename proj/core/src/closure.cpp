#include "bevloop/closure.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <stdexcept>

namespace bevloop {

SE2 EstimateSe2KabschUmeyama(const std::vector<Eigen::Vector2d> &src,
                             const std::vector<Eigen::Vector2d> &dst) {
  if (src.size() != dst.size()) {
    throw std::invalid_argument("point sets must have equal size");
  }
  if (src.size() < 2) {
    throw std::invalid_argument("need at least two correspondences");
  }
  const double n = static_cast<double>(src.size());
  Eigen::Vector2d src_centroid = Eigen::Vector2d::Zero();
  Eigen::Vector2d dst_centroid = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    src_centroid += src[i];
    dst_centroid += dst[i];
  }
  src_centroid /= n;
  dst_centroid /= n;

  double src_spread = 0.0;
  Eigen::Matrix2d cross = Eigen::Matrix2d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Eigen::Vector2d s = src[i] - src_centroid;
    const Eigen::Vector2d d = dst[i] - dst_centroid;
    src_spread += s.squaredNorm();
    cross += d * s.transpose();
  }
  if (src_spread < 1e-12 || cross.cwiseAbs().maxCoeff() < 1e-12) {
    throw std::invalid_argument("degenerate point configuration");
  }

  Eigen::JacobiSVD<Eigen::Matrix2d> svd(
      cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix2d d = Eigen::Matrix2d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
    d(1, 1) = -1.0;
  }
  const Eigen::Matrix2d rotation =
      svd.matrixU() * d * svd.matrixV().transpose();

  SE2 result;
  result.angle = WrapAngle(std::atan2(rotation(1, 0), rotation(0, 0)));
  result.translation = dst_centroid - result.Rotation() * src_centroid;
  return result;
}

namespace {

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Per-candidate PRNG stream so parallel verification stays deterministic.
std::uint64_t DeriveSeed(std::uint64_t seed, int query_map,
                         int reference_map) {
  std::uint64_t m = SplitMix64(seed);
  m = SplitMix64(m ^ static_cast<std::uint64_t>(query_map));
  m = SplitMix64(m ^ static_cast<std::uint64_t>(reference_map));
  return m;
}

}  // namespace

std::optional<LoopClosure> RansacVerify(const ClosureCandidate &candidate,
                                        const RansacOptions &options) {
  const auto &pairs = candidate.vote.pairs;
  const std::size_t n = pairs.size();
  if (n < 2) return std::nullopt;

  // Keypoints expressed as metric cell centers in their map frames.
  std::vector<Eigen::Vector2d> src(n);  // reference map
  std::vector<Eigen::Vector2d> dst(n);  // query map
  const double res = candidate.resolution;
  for (std::size_t i = 0; i < n; ++i) {
    const auto &match = pairs[i];
    src[i] = Eigen::Vector2d(
        (match.reference.u + candidate.reference_origin_cell.x() + 0.5) * res,
        (match.reference.v + candidate.reference_origin_cell.y() + 0.5) * res);
    dst[i] = Eigen::Vector2d(
        (match.query.u + candidate.query_origin_cell.x() + 0.5) * res,
        (match.query.v + candidate.query_origin_cell.y() + 0.5) * res);
  }

  std::mt19937_64 rng(DeriveSeed(options.seed, candidate.vote.query_map,
                                 candidate.vote.reference_map));
  const double min_sample_spacing = 2.0 * res;  // 2 px
  const double sq_tolerance =
      options.inlier_tolerance * options.inlier_tolerance;

  std::vector<std::size_t> best_inliers;
  for (int iteration = 0; iteration < options.iterations; ++iteration) {
    const std::size_t i = rng() % n;
    const std::size_t j = rng() % n;
    if (i == j) continue;
    if ((src[i] - src[j]).norm() < min_sample_spacing) continue;
    if ((dst[i] - dst[j]).norm() < min_sample_spacing) continue;

    const SE2 hypothesis = EstimateSe2KabschUmeyama({src[i], src[j]},
                                                    {dst[i], dst[j]});
    const Eigen::Matrix2d r = hypothesis.Rotation();
    std::vector<std::size_t> inliers;
    for (std::size_t k = 0; k < n; ++k) {
      const Eigen::Vector2d residual =
          dst[k] - (r * src[k] + hypothesis.translation);
      if (residual.squaredNorm() <= sq_tolerance) inliers.push_back(k);
    }
    if (inliers.size() > best_inliers.size()) {
      best_inliers = std::move(inliers);
    }
  }

  if (static_cast<int>(best_inliers.size()) < options.min_inliers) {
    return std::nullopt;
  }

  std::vector<Eigen::Vector2d> src_in;
  std::vector<Eigen::Vector2d> dst_in;
  src_in.reserve(best_inliers.size());
  dst_in.reserve(best_inliers.size());
  for (const std::size_t k : best_inliers) {
    src_in.push_back(src[k]);
    dst_in.push_back(dst[k]);
  }
  const SE2 refined = EstimateSe2KabschUmeyama(src_in, dst_in);

  // Re-gate against the refined fit so every reported pair satisfies the
  // tolerance under the transform we actually return.
  LoopClosure closure;
  closure.query_map = candidate.vote.query_map;
  closure.reference_map = candidate.vote.reference_map;
  closure.bev_transform = refined;
  const Eigen::Matrix2d r = refined.Rotation();
  for (std::size_t k = 0; k < n; ++k) {
    const Eigen::Vector2d residual = dst[k] - (r * src[k] + refined.translation);
    if (residual.squaredNorm() <= sq_tolerance) {
      closure.inlier_pairs.push_back(pairs[k]);
    }
  }
  closure.inliers = static_cast<int>(closure.inlier_pairs.size());
  if (closure.inliers < options.min_inliers) return std::nullopt;
  closure.relative_transform = Se2ToSe3(refined);
  return closure;
}

SE3 ComposeRelativeTransform(const SE2 &bev_transform, const SE3 &ground_query,
                             const SE3 &ground_reference) {
  return ground_query.Inverse() * Se2ToSe3(bev_transform) * ground_reference;
}

std::vector<ScanClosure> ExpandToScanClosures(
    const LoopClosure &closure, const std::vector<SE3> &query_scan_poses,
    const std::vector<SE3> &reference_scan_poses,
    const std::vector<int> &query_scan_indices,
    const std::vector<int> &reference_scan_indices, double max_distance) {
  if (query_scan_poses.size() != query_scan_indices.size() ||
      reference_scan_poses.size() != reference_scan_indices.size()) {
    throw std::invalid_argument("pose and index lists must align");
  }
  std::vector<ScanClosure> result;
  std::vector<Eigen::Vector3d> reference_in_query;
  reference_in_query.reserve(reference_scan_poses.size());
  for (const auto &pose : reference_scan_poses) {
    reference_in_query.push_back(closure.relative_transform *
                                 pose.translation);
  }
  const double sq_max = max_distance * max_distance;
  for (std::size_t qi = 0; qi < query_scan_poses.size(); ++qi) {
    const Eigen::Vector3d &q = query_scan_poses[qi].translation;
    for (std::size_t ri = 0; ri < reference_in_query.size(); ++ri) {
      const double sq_distance = (q - reference_in_query[ri]).squaredNorm();
      if (sq_distance <= sq_max) {
        result.push_back(ScanClosure{query_scan_indices[qi],
                                     reference_scan_indices[ri],
                                     std::sqrt(sq_distance)});
      }
    }
  }
  return result;
}

}  // namespace bevloop
