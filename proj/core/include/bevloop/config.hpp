#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace bevloop {

struct GroundConfig {
  double cell_size = 5.0;
  int max_iterations = 20;
  double inlier_distance = 0.5;
  double convergence_epsilon = 1e-4;
};

struct FeatureConfig {
  int fast_threshold = 20;
  int max_features = 500;
};

/// End-to-end pipeline parameters. Defaults not stated by the config file
/// reference are repo defaults; everything can be overridden per key.
struct PipelineConfig {
  double displacement_threshold = 100.0;  // tau_c, meters
  double max_range = 100.0;               // meters
  double map_voxel_size = 1.0;            // nu_map, meters
  double bev_resolution = 0.5;            // nu_b, meters
  int prune_threshold = 35;               // tau_pr, bits
  int match_threshold = 50;               // tau_match, bits
  int min_inliers = 5;                    // gamma
  double inlier_tolerance = 1.5;          // meters
  int ransac_iterations = 200;
  double scan_closure_distance = 10.0;    // tau_d, meters
  GroundConfig ground;
  std::uint64_t seed = 42;
  FeatureConfig features;
  int exclude_recent = 1;        // in-session near-history suppression
  bool ground_alignment = true;  // stage toggle
  bool feature_pruning = true;   // stage toggle

  /// Throws std::invalid_argument when a parameter leaves its domain.
  void Validate() const;
};

/// Flat key = value format; '#' starts a comment. Unknown keys are rejected.
PipelineConfig ParseConfig(std::istream &in);
PipelineConfig ParseConfigFile(const std::string &path);
std::string SerializeConfig(const PipelineConfig &config);

}  // namespace bevloop
