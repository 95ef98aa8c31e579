#include "bevloop/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "bevloop/io.hpp"

namespace bevloop {

namespace {

struct Surface {
  Eigen::Vector3d corner;
  Eigen::Vector3d edge_u;
  Eigen::Vector3d edge_v;
  double area = 0.0;
  Eigen::Vector3d center;
  double half_diagonal = 0.0;
  bool is_ground = false;
};

class WorldModel {
 public:
  void AddRectangle(const Eigen::Vector3d &corner,
                    const Eigen::Vector3d &edge_u,
                    const Eigen::Vector3d &edge_v, bool is_ground) {
    // Long rectangles are tiled so per-scan candidate filtering stays tight.
    constexpr double kTile = 20.0;
    const double len_u = edge_u.norm();
    const double len_v = edge_v.norm();
    const int tiles_u = std::max(1, static_cast<int>(std::ceil(len_u / kTile)));
    const int tiles_v = std::max(1, static_cast<int>(std::ceil(len_v / kTile)));
    for (int iu = 0; iu < tiles_u; ++iu) {
      for (int iv = 0; iv < tiles_v; ++iv) {
        Surface s;
        s.edge_u = edge_u / tiles_u;
        s.edge_v = edge_v / tiles_v;
        s.corner = corner + s.edge_u * iu + s.edge_v * iv;
        s.area = s.edge_u.norm() * s.edge_v.norm();
        s.center = s.corner + 0.5 * s.edge_u + 0.5 * s.edge_v;
        s.half_diagonal = 0.5 * (s.edge_u + s.edge_v).norm();
        s.is_ground = is_ground;
        (is_ground ? ground_ : structure_).push_back(s);
      }
    }
  }

  void AddBox(const Eigen::Vector2d &center, const Eigen::Vector2d &size,
              double height) {
    const Eigen::Vector3d up(0.0, 0.0, height);
    const Eigen::Vector3d ex(size.x(), 0.0, 0.0);
    const Eigen::Vector3d ey(0.0, size.y(), 0.0);
    const Eigen::Vector3d base(center.x() - 0.5 * size.x(),
                               center.y() - 0.5 * size.y(), 0.0);
    AddRectangle(base, ex, up, false);
    AddRectangle(base + ey, ex, up, false);
    AddRectangle(base, ey, up, false);
    AddRectangle(base + ex, ey, up, false);
  }

  const std::vector<Surface> &ground() const { return ground_; }
  const std::vector<Surface> &structure() const { return structure_; }

 private:
  std::vector<Surface> ground_;
  std::vector<Surface> structure_;
};

class ScanSampler {
 public:
  ScanSampler(const WorldModel &world, const SyntheticWorldSpec &spec,
              std::mt19937_64 &rng)
      : world_(world), spec_(spec), rng_(rng) {}

  PointCloud Sample(const SE3 &pose) {
    PointCloud cloud;
    cloud.frame_id = "sensor";
    const SE3 world_to_sensor = pose.Inverse();
    SampleSurfaces(world_.ground(), spec_.ground_points_per_scan, pose,
                   world_to_sensor, &cloud);
    SampleSurfaces(world_.structure(), spec_.structure_points_per_scan, pose,
                   world_to_sensor, &cloud);
    return cloud;
  }

 private:
  void SampleSurfaces(const std::vector<Surface> &surfaces, int target,
                      const SE3 &pose, const SE3 &world_to_sensor,
                      PointCloud *cloud) {
    candidates_.clear();
    cumulative_.clear();
    double total_area = 0.0;
    for (const auto &surface : surfaces) {
      const double distance = (surface.center - pose.translation).norm();
      if (distance > spec_.sensor_range + surface.half_diagonal) continue;
      candidates_.push_back(&surface);
      total_area += surface.area;
      cumulative_.push_back(total_area);
    }
    if (candidates_.empty()) return;

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double half_fov = 0.5 * spec_.fov_deg * M_PI / 180.0;
    const bool full_fov = spec_.fov_deg >= 360.0;
    for (int slot = 0; slot < target; ++slot) {
      for (int attempt = 0; attempt < 8; ++attempt) {
        const double pick = unit(rng_) * total_area;
        const auto it =
            std::lower_bound(cumulative_.begin(), cumulative_.end(), pick);
        std::size_t index = static_cast<std::size_t>(it - cumulative_.begin());
        if (index >= candidates_.size()) index = candidates_.size() - 1;
        const Surface &surface = *candidates_[index];
        const Eigen::Vector3d world_point = surface.corner +
                                            unit(rng_) * surface.edge_u +
                                            unit(rng_) * surface.edge_v;
        const Eigen::Vector3d sensor_point = world_to_sensor * world_point;
        if (sensor_point.norm() > spec_.sensor_range) continue;
        if (!full_fov &&
            std::abs(std::atan2(sensor_point.y(), sensor_point.x())) >
                half_fov) {
          continue;
        }
        cloud->points.push_back(sensor_point);
        cloud->intensities.push_back(1.0f);
        break;
      }
    }
  }

  const WorldModel &world_;
  const SyntheticWorldSpec &spec_;
  std::mt19937_64 &rng_;
  std::vector<const Surface *> candidates_;
  std::vector<double> cumulative_;
};

struct TrajectorySample {
  Eigen::Vector3d position;
  double heading = 0.0;
  double path_distance = 0.0;
};

void AppendLeg(const Eigen::Vector2d &from, const Eigen::Vector2d &to,
               double spacing, double height,
               std::vector<TrajectorySample> *samples) {
  const Eigen::Vector2d delta = to - from;
  const double length = delta.norm();
  const double heading = std::atan2(delta.y(), delta.x());
  double start_distance = 0.0;
  double offset = 0.0;
  if (!samples->empty()) {
    start_distance = samples->back().path_distance;
    offset = spacing;  // continue the spacing across leg boundaries
  }
  for (double s = offset; s <= length + 1e-9; s += spacing) {
    const Eigen::Vector2d xy = from + (s / length) * delta;
    samples->push_back(TrajectorySample{
        Eigen::Vector3d(xy.x(), xy.y(), height), heading,
        start_distance + s});
  }
}

void BuildCorridor(const SyntheticWorldSpec &spec, double x0, double y_center,
                   bool with_motif, bool with_walls, WorldModel *world) {
  const double half_width = 0.5 * spec.corridor_width;
  world->AddRectangle(
      Eigen::Vector3d(x0, y_center - half_width, 0.0),
      Eigen::Vector3d(spec.corridor_length, 0.0, 0.0),
      Eigen::Vector3d(0.0, spec.corridor_width, 0.0), true);
  if (with_walls) {
    world->AddRectangle(
        Eigen::Vector3d(x0, y_center - half_width, 0.0),
        Eigen::Vector3d(spec.corridor_length, 0.0, 0.0),
        Eigen::Vector3d(0.0, 0.0, spec.wall_height), false);
    world->AddRectangle(
        Eigen::Vector3d(x0, y_center + half_width, 0.0),
        Eigen::Vector3d(spec.corridor_length, 0.0, 0.0),
        Eigen::Vector3d(0.0, 0.0, spec.wall_height), false);
  }
  if (with_motif) {
    // Pillar pairs flank the path well inside the corridor so they stay
    // clear of the descriptor border band in the density image.
    const double offset = std::min(6.0, half_width - 2.0);
    for (double x = x0 + 0.5 * spec.motif_period;
         x < x0 + spec.corridor_length; x += spec.motif_period) {
      world->AddBox(Eigen::Vector2d(x, y_center - offset),
                    Eigen::Vector2d(1.5, 1.5), 5.0);
      world->AddBox(Eigen::Vector2d(x, y_center + offset),
                    Eigen::Vector2d(1.5, 1.5), 5.0);
    }
  }
}

void AddRandomBoxes(const SyntheticWorldSpec &spec, std::mt19937_64 &rng,
                    WorldModel *world) {
  std::uniform_real_distribution<double> along(5.0, spec.corridor_length - 5.0);
  std::uniform_real_distribution<double> size(1.5, 4.5);
  std::uniform_real_distribution<double> height(2.0, spec.wall_height);
  std::uniform_real_distribution<double> side(0.0, 1.0);
  // Keep a clear lane around the path; stay inside the corridor walls.
  const double y_min = 4.0;
  const double y_max = std::max(y_min + 1.0, 0.5 * spec.corridor_width - 3.0);
  std::uniform_real_distribution<double> lateral(y_min, y_max);
  for (int i = 0; i < spec.box_count; ++i) {
    const double x = along(rng);
    const double y = side(rng) < 0.5 ? -lateral(rng) : lateral(rng);
    world->AddBox(Eigen::Vector2d(x, y), Eigen::Vector2d(size(rng), size(rng)),
                  height(rng));
  }
}

}  // namespace

void SyntheticWorldSpec::Validate() const {
  const auto require = [](bool condition, const char *message) {
    if (!condition) {
      throw std::invalid_argument(std::string("synthetic world: ") + message);
    }
  };
  require(corridor_length > 0.0, "corridor length must be positive");
  require(corridor_width > 0.0, "corridor width must be positive");
  require(wall_height > 0.0, "wall height must be positive");
  require(scan_spacing > 0.0, "scan spacing must be positive");
  require(sensor_range > 0.0, "sensor range must be positive");
  require(fov_deg > 0.0 && fov_deg <= 360.0, "fov must be in (0, 360]");
  require(ground_points_per_scan >= 0 && structure_points_per_scan >= 0,
          "point budgets must be non-negative");
  require(oscillation_amplitude_deg >= 0.0 && oscillation_amplitude_deg < 90.0,
          "oscillation amplitude must be in [0, 90)");
  require(motif_period > 2.0, "motif period must exceed the pillar size");
  require(scan_spacing < corridor_length, "scan spacing exceeds the corridor");
}

SyntheticWorld GenerateSyntheticWorld(const SyntheticWorldSpec &spec) {
  spec.Validate();
  std::mt19937_64 rng(spec.seed);

  WorldModel world;
  std::vector<TrajectorySample> trajectory;
  const double h = spec.sensor_height;

  switch (spec.layout) {
    case SyntheticWorldSpec::Layout::kCorridor: {
      BuildCorridor(spec, 0.0, 0.0, false, &world);
      AddRandomBoxes(spec, rng, &world);
      AppendLeg({0.0, 0.0}, {spec.corridor_length, 0.0}, spec.scan_spacing, h,
                &trajectory);
      if (spec.out_and_back) {
        AppendLeg({spec.corridor_length, 0.0}, {0.0, 0.0}, spec.scan_spacing,
                  h, &trajectory);
      }
      break;
    }
    case SyntheticWorldSpec::Layout::kGridStreets: {
      // Two crossing streets; buildings fill the quadrant corners.
      const double half = 0.5 * spec.corridor_length;
      const double half_width = 0.5 * spec.corridor_width;
      world.AddRectangle(Eigen::Vector3d(0.0, -half_width, 0.0),
                         Eigen::Vector3d(spec.corridor_length, 0.0, 0.0),
                         Eigen::Vector3d(0.0, spec.corridor_width, 0.0), true);
      world.AddRectangle(Eigen::Vector3d(half - half_width, -half, 0.0),
                         Eigen::Vector3d(spec.corridor_width, 0.0, 0.0),
                         Eigen::Vector3d(0.0, spec.corridor_length, 0.0), true);
      std::uniform_real_distribution<double> jitter(-10.0, 10.0);
      for (int qx = -1; qx <= 1; qx += 2) {
        for (int qy = -1; qy <= 1; qy += 2) {
          for (int b = 0; b < std::max(1, spec.box_count / 4); ++b) {
            const double bx = half + qx * (half_width + 12.0 + std::abs(jitter(rng)) * 3.0);
            const double by = qy * (half_width + 12.0 + std::abs(jitter(rng)) * 3.0);
            world.AddBox(Eigen::Vector2d(bx, by),
                         Eigen::Vector2d(6.0 + jitter(rng) * 0.3,
                                         6.0 + jitter(rng) * 0.3),
                         spec.wall_height);
          }
        }
      }
      AppendLeg({0.0, 0.0}, {half, 0.0}, spec.scan_spacing, h, &trajectory);
      AppendLeg({half, 0.0}, {half, half}, spec.scan_spacing, h, &trajectory);
      if (spec.out_and_back) {
        AppendLeg({half, half}, {half, 0.0}, spec.scan_spacing, h, &trajectory);
        AppendLeg({half, 0.0}, {0.0, 0.0}, spec.scan_spacing, h, &trajectory);
      }
      break;
    }
    case SyntheticWorldSpec::Layout::kAliasingPair: {
      // Twin corridors with identical pillar motifs, far enough apart that
      // their maps never physically overlap; a bare transit leg links them.
      BuildCorridor(spec, 0.0, 0.0, true, &world);
      BuildCorridor(spec, 0.0, spec.separation, true, &world);
      const Eigen::Vector2d transit_start(spec.corridor_length, 0.0);
      const Eigen::Vector2d transit_end(0.0, spec.separation);
      const Eigen::Vector2d direction =
          (transit_end - transit_start).normalized();
      const Eigen::Vector2d normal(-direction.y(), direction.x());
      const double transit_length = (transit_end - transit_start).norm();
      world.AddRectangle(
          Eigen::Vector3d(transit_start.x() - 15.0 * normal.x(),
                          transit_start.y() - 15.0 * normal.y(), 0.0),
          Eigen::Vector3d(direction.x() * transit_length,
                          direction.y() * transit_length, 0.0),
          Eigen::Vector3d(normal.x() * 30.0, normal.y() * 30.0, 0.0), true);
      AppendLeg({0.0, 0.0}, transit_start, spec.scan_spacing, h, &trajectory);
      AppendLeg(transit_start, transit_end, spec.scan_spacing, h, &trajectory);
      AppendLeg(transit_end, {spec.corridor_length, spec.separation},
                spec.scan_spacing, h, &trajectory);
      break;
    }
  }

  const double amplitude = spec.oscillation_amplitude_deg * M_PI / 180.0;
  SyntheticWorld result;
  result.poses.reserve(trajectory.size());
  ScanSampler sampler(world, spec, rng);
  for (const auto &sample : trajectory) {
    SE3 pose;
    const double roll =
        amplitude * std::sin(2.0 * M_PI * sample.path_distance /
                             spec.roll_wavelength);
    const double pitch =
        amplitude * std::sin(2.0 * M_PI * sample.path_distance /
                                 spec.pitch_wavelength +
                             1.0);
    pose.rotation = So3Exp(Eigen::Vector3d(0.0, 0.0, sample.heading)) *
                    So3Exp(Eigen::Vector3d(0.0, pitch, 0.0)) *
                    So3Exp(Eigen::Vector3d(roll, 0.0, 0.0));
    pose.translation = sample.position;
    result.poses.push_back(pose);
    result.scans.push_back(sampler.Sample(pose));
  }
  return result;
}

void WriteSyntheticSession(const SyntheticWorld &world,
                           const std::filesystem::path &out_dir) {
  const auto scan_dir = out_dir / "scans";
  std::filesystem::create_directories(scan_dir);
  for (std::size_t i = 0; i < world.scans.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.bin", i);
    WriteScanFile(scan_dir / name, world.scans[i]);
  }
  WritePoseFile(out_dir / "poses.txt", world.poses);
  WritePoseFile(out_dir / "gt_poses.txt", world.poses);
}

}  // namespace bevloop
