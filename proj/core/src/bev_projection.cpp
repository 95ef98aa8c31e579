#include "bevloop/bev_projection.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace bevloop {

std::vector<std::uint8_t> DensityImage::Quantized() const {
  std::vector<std::uint8_t> out(intensity.size());
  for (std::size_t i = 0; i < intensity.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::floor(255.0 * intensity[i] + 0.5));
  }
  return out;
}

DensityImage ProjectDensity(const std::vector<Point3> &points,
                            double resolution) {
  if (points.empty()) {
    throw std::invalid_argument("cannot project an empty map");
  }
  if (resolution <= 0.0) {
    throw std::invalid_argument("bev resolution must be positive");
  }

  double x_low = std::numeric_limits<double>::max();
  double x_high = std::numeric_limits<double>::lowest();
  double y_low = std::numeric_limits<double>::max();
  double y_high = std::numeric_limits<double>::lowest();
  for (const auto &p : points) {
    x_low = std::min(x_low, p.x());
    x_high = std::max(x_high, p.x());
    y_low = std::min(y_low, p.y());
    y_high = std::max(y_high, p.y());
  }

  const auto cell = [resolution](double value) {
    return static_cast<std::int64_t>(std::floor(value / resolution));
  };

  DensityImage image;
  image.resolution = resolution;
  image.origin_cell = Eigen::Vector2i(static_cast<int>(cell(x_low)),
                                      static_cast<int>(cell(y_low)));
  image.width = static_cast<int>(cell(x_high) - cell(x_low)) + 1;
  image.height = static_cast<int>(cell(y_high) - cell(y_low)) + 1;
  image.counts.assign(static_cast<std::size_t>(image.width) * image.height, 0);

  for (const auto &p : points) {
    const int u = static_cast<int>(cell(p.x())) - image.origin_cell.x();
    const int v = static_cast<int>(cell(p.y())) - image.origin_cell.y();
    ++image.counts[v * image.width + u];
  }

  int count_min = std::numeric_limits<int>::max();
  int count_max = 0;
  for (const int c : image.counts) {
    count_min = std::min(count_min, c);
    count_max = std::max(count_max, c);
  }

  image.intensity.assign(image.counts.size(), 0.0);
  if (count_max == count_min) {
    image.degenerate = true;
    return image;
  }
  const double span = static_cast<double>(count_max - count_min);
  for (std::size_t i = 0; i < image.counts.size(); ++i) {
    const double value = (image.counts[i] - count_min) / span;
    image.intensity[i] = value < 0.05 ? 0.0 : value;
  }
  return image;
}

DensityImage ProjectDensity(const LocalMap &map, double resolution) {
  return ProjectDensity(map.points, resolution);
}

void WritePgm(const DensityImage &image, const std::filesystem::path &path) {
  std::ofstream file(path, std::ios::binary);
  if (!file) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  file << "P5\n" << image.width << " " << image.height << "\n255\n";
  const auto pixels = image.Quantized();
  // PGM rows run top to bottom; flip v so +y points up in the image.
  for (int v = image.height - 1; v >= 0; --v) {
    file.write(reinterpret_cast<const char *>(&pixels[v * image.width]),
               image.width);
  }
}

}  // namespace bevloop
