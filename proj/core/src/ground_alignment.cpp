#include "bevloop/ground_alignment.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace bevloop {

namespace {

struct CellIndex {
  std::int64_t x = 0;
  std::int64_t y = 0;
  bool operator==(const CellIndex &other) const = default;
};

struct CellIndexHash {
  std::size_t operator()(const CellIndex &c) const {
    return static_cast<std::size_t>(c.x * 73856093LL ^ c.y * 19349669LL);
  }
};

double MedianAbs(std::vector<double> values) {
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  return values[mid];
}

// Structured state: rotation about an axis in the xy-plane plus a
// z-translation. Re-projecting onto this family after every update keeps the
// reported transform exactly in the shape the Jacobian allows.
struct GroundState {
  double omega_x = 0.0;
  double omega_y = 0.0;
  double t_z = 0.0;

  SE3 Transform() const {
    SE3 t;
    t.rotation = So3Exp(Eigen::Vector3d(omega_x, omega_y, 0.0));
    t.translation = Eigen::Vector3d(0.0, 0.0, t_z);
    return t;
  }
};

}  // namespace

std::vector<GroundSample> SampleGround(const std::vector<Point3> &points,
                                       double cell_size) {
  if (points.empty()) {
    throw std::invalid_argument("empty local map");
  }
  if (cell_size <= 0.0) {
    throw std::invalid_argument("ground cell size must be positive");
  }
  std::unordered_map<CellIndex, std::size_t, CellIndexHash> lowest;
  std::vector<GroundSample> samples;
  for (const auto &p : points) {
    const CellIndex cell{
        static_cast<std::int64_t>(std::floor(p.x() / cell_size)),
        static_cast<std::int64_t>(std::floor(p.y() / cell_size))};
    auto [it, inserted] = lowest.try_emplace(cell, samples.size());
    if (inserted) {
      samples.push_back(GroundSample{p, 1});
    } else if (p.z() < samples[it->second].point.z()) {
      samples[it->second].point = p;
    }
  }
  return samples;
}

std::vector<GroundSample> SampleGround(const LocalMap &map, double cell_size) {
  return SampleGround(map.points, cell_size);
}

GroundSolveReport SolveGround(const std::vector<GroundSample> &samples,
                              const GroundSolverOptions &options) {
  if (samples.size() < 3) {
    throw std::invalid_argument("rank-deficient ground fit");
  }
  // Collinear xy geometry cannot constrain both tilt axes.
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto &s : samples) mean += s.point.head<2>();
  mean /= static_cast<double>(samples.size());
  Eigen::Matrix2d xy_cov = Eigen::Matrix2d::Zero();
  for (const auto &s : samples) {
    const Eigen::Vector2d d = s.point.head<2>() - mean;
    xy_cov += d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(xy_cov);
  if (eig.eigenvalues()(0) < 1e-9 * std::max(eig.eigenvalues()(1), 1.0)) {
    throw std::invalid_argument("rank-deficient ground fit");
  }

  GroundState state;
  GroundSolveReport report;
  const std::size_t n = samples.size();
  std::vector<Eigen::Vector3d> transformed(n);
  std::vector<double> residuals(n);
  std::vector<char> inlier(n, 1);

  auto evaluate = [&](int *inliers_out) {
    const SE3 t = state.Transform();
    std::vector<double> abs_residuals(n);
    for (std::size_t k = 0; k < n; ++k) {
      transformed[k] = t * samples[k].point;
      residuals[k] = transformed[k].z();
      abs_residuals[k] = std::abs(residuals[k]);
    }
    // The gate tightens with the fit: a robust scale bound keeps the bulk of
    // the samples active while the map is still far from flat, and the fixed
    // inlier distance takes over once residuals shrink.
    const double scale = 1.4826 * MedianAbs(abs_residuals);
    const double gate = std::max(options.inlier_distance, 3.0 * scale);
    int inliers = 0;
    for (std::size_t k = 0; k < n; ++k) {
      inlier[k] = abs_residuals[k] <= gate ? 1 : 0;
      inliers += inlier[k];
    }
    *inliers_out = inliers;
  };

  for (int iteration = 1; iteration <= options.max_iterations; ++iteration) {
    report.iterations = iteration;
    int inliers = 0;
    evaluate(&inliers);
    if (inliers < 3) {
      report.transform = SE3::Identity();
      report.valid = false;
      report.inlier_count = inliers;
      report.final_residual = 0.0;
      return report;
    }
    double cost = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (inlier[k]) cost += residuals[k] * residuals[k];
    }
    report.cost_trace.push_back(cost);

    // Reduced normal equations over (dz, d_omega_x, d_omega_y); the other
    // three Jacobian entries are identically zero.
    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    Eigen::Vector3d b = Eigen::Vector3d::Zero();
    for (std::size_t k = 0; k < n; ++k) {
      if (!inlier[k]) continue;
      const Eigen::Vector3d j(1.0, transformed[k].y(), -transformed[k].x());
      h += j * j.transpose();
      b += j * residuals[k];
    }
    const Eigen::Vector3d update = h.ldlt().solve(-b);
    if (!update.allFinite()) {
      throw std::runtime_error("rank-deficient ground fit");
    }

    // Left-multiplicative update, then re-projection onto the structured
    // family (the dropped terms are second order in the update).
    const Eigen::Matrix3d delta_r =
        So3Exp(Eigen::Vector3d(update(1), update(2), 0.0));
    const Eigen::Vector3d omega =
        So3Log(delta_r * So3Exp(Eigen::Vector3d(state.omega_x, state.omega_y,
                                                0.0)));
    state.omega_x = omega.x();
    state.omega_y = omega.y();
    state.t_z = (delta_r * Eigen::Vector3d(0.0, 0.0, state.t_z)).z() +
                update(0);

    if (update.norm() < options.convergence_epsilon) break;
  }

  int inliers = 0;
  evaluate(&inliers);
  double cost = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (inlier[k]) cost += residuals[k] * residuals[k];
  }
  report.transform = state.Transform();
  report.inlier_count = inliers;
  report.final_residual = cost;
  report.valid = inliers >= 3;
  return report;
}

LocalMap ApplyGroundAlignment(const LocalMap &map,
                              const GroundSolveReport &report) {
  LocalMap aligned = map;
  for (auto &p : aligned.points) {
    p = report.transform * p;
  }
  aligned.ground_transform = report.transform;
  aligned.ground_aligned = true;
  return aligned;
}

}  // namespace bevloop
