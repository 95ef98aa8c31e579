#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bevloop/geometry.hpp"
#include "bevloop/local_map.hpp"

namespace bevloop {

/// Normalized point-density image of a ground-aligned local map, projected
/// orthographically onto the xy-plane. u indexes x-cells, v indexes y-cells.
struct DensityImage {
  int width = 0;
  int height = 0;
  double resolution = 0.5;  // meters per pixel
  Eigen::Vector2i origin_cell = Eigen::Vector2i::Zero();
  std::vector<int> counts;        // row-major: index v * width + u
  std::vector<double> intensity;  // [0, 1]; values below 0.05 are exactly 0
  bool degenerate = false;        // max count equals min count

  int CountAt(int u, int v) const { return counts[v * width + u]; }
  double IntensityAt(int u, int v) const { return intensity[v * width + u]; }

  /// 8-bit view for the feature detector, round-half-up quantization.
  std::vector<std::uint8_t> Quantized() const;

  /// Map-frame x coordinate of the center of pixel column u (analogous for y).
  double MapX(double u) const {
    return (u + origin_cell.x() + 0.5) * resolution;
  }
  double MapY(double v) const {
    return (v + origin_cell.y() + 0.5) * resolution;
  }
};

DensityImage ProjectDensity(const std::vector<Point3> &points,
                            double resolution = 0.5);
DensityImage ProjectDensity(const LocalMap &map, double resolution = 0.5);

/// Binary 8-bit grayscale PGM (P5) dump for debugging.
void WritePgm(const DensityImage &image, const std::filesystem::path &path);

}  // namespace bevloop
