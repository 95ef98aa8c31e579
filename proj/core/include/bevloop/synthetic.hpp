#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bevloop/geometry.hpp"

namespace bevloop {

/// Describes a synthetic outdoor scene plus a scanning trajectory through
/// it. Poses are exact, so the written pose file doubles as ground truth.
struct SyntheticWorldSpec {
  enum class Layout {
    kCorridor,      // straight corridor, distinct random boxes along it
    kGridStreets,   // two crossing streets with buildings in the quadrants
    kAliasingPair,  // two structurally identical corridors far apart
  };

  Layout layout = Layout::kCorridor;
  double corridor_length = 400.0;
  double corridor_width = 40.0;
  double wall_height = 6.0;
  double scan_spacing = 1.6;   // meters of travel between scans
  double sensor_height = 1.7;  // above ground
  double sensor_range = 100.0;
  int ground_points_per_scan = 250;
  int structure_points_per_scan = 1000;
  double fov_deg = 360.0;  // horizontal wedge about the sensor x-axis

  // Walking-style roll/pitch oscillation along the path.
  double oscillation_amplitude_deg = 0.0;
  double roll_wavelength = 23.0;
  double pitch_wavelength = 37.0;

  bool out_and_back = true;  // corridor layout: retrace the path backwards
  int box_count = 40;        // corridor layout: distinct structure

  double motif_period = 20.0;  // aliasing layout: pillar repetition
  double separation = 600.0;   // aliasing layout: distance between twins

  std::uint64_t seed = 1;

  void Validate() const;  // throws on inconsistent values
};

struct SyntheticWorld {
  std::vector<PointCloud> scans;  // sensor frame
  std::vector<SE3> poses;         // exact, odometry == ground truth
};

SyntheticWorld GenerateSyntheticWorld(const SyntheticWorldSpec &spec);

/// Writes scans/%06d.bin, poses.txt and gt_poses.txt under out_dir.
void WriteSyntheticSession(const SyntheticWorld &world,
                           const std::filesystem::path &out_dir);

}  // namespace bevloop
