#pragma once

#include <vector>

#include "bevloop/geometry.hpp"
#include "bevloop/local_map.hpp"

namespace bevloop {

struct GroundSample {
  Point3 point;
  int weight = 1;  // binary, assigned during solving
};

struct GroundSolverOptions {
  int max_iterations = 20;
  double inlier_distance = 0.5;       // binary-weight gate at convergence
  double convergence_epsilon = 1e-4;  // norm of the 3-dof update
};

/// Result of the iterative ground fit. The transform is structurally
/// restricted: translation only along z, rotation only about axes in the
/// xy-plane (zero axis-angle z-component), matching the solver's Jacobian.
struct GroundSolveReport {
  SE3 transform;
  int iterations = 0;
  double final_residual = 0.0;  // weighted sum of squared plane distances
  int inlier_count = 0;
  bool valid = true;  // false when fewer than 3 inliers survived weighting
  std::vector<double> cost_trace;  // weighted cost per iteration
};

/// Lowest point per xy-cell, one sample per occupied cell. Ties on z keep
/// the first point encountered.
std::vector<GroundSample> SampleGround(const std::vector<Point3> &points,
                                       double cell_size = 5.0);
std::vector<GroundSample> SampleGround(const LocalMap &map,
                                       double cell_size = 5.0);

/// Gauss-Newton fit of the transform that flattens the sampled ground onto
/// the xy-plane. Throws on degenerate sample geometry (fewer than three
/// samples or all samples collinear in xy).
GroundSolveReport SolveGround(const std::vector<GroundSample> &samples,
                              const GroundSolverOptions &options = {});

/// Applies the solved transform to every map point and records it on the map.
LocalMap ApplyGroundAlignment(const LocalMap &map,
                              const GroundSolveReport &report);

}  // namespace bevloop
