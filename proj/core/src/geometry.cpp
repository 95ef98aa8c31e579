#include "bevloop/geometry.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace bevloop {

namespace {

Eigen::Matrix3d Skew(const Eigen::Vector3d &v) {
  Eigen::Matrix3d s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

}  // namespace

Eigen::Matrix3d So3Exp(const Eigen::Vector3d &omega) {
  const double theta = omega.norm();
  const Eigen::Matrix3d hat = Skew(omega);
  if (theta < 1e-10) {
    return Eigen::Matrix3d::Identity() + hat + 0.5 * hat * hat;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Eigen::Matrix3d::Identity() + a * hat + b * hat * hat;
}

Eigen::Vector3d So3Log(const Eigen::Matrix3d &rotation) {
  const double cos_theta =
      std::clamp(0.5 * (rotation.trace() - 1.0), -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  const Eigen::Vector3d vee(rotation(2, 1) - rotation(1, 2),
                            rotation(0, 2) - rotation(2, 0),
                            rotation(1, 0) - rotation(0, 1));
  if (theta < 1e-10) {
    return 0.5 * vee;
  }
  if (theta > M_PI - 1e-6) {
    // Near pi the vee part vanishes; recover the axis from R + I.
    const Eigen::Matrix3d s = 0.5 * (rotation + Eigen::Matrix3d::Identity());
    Eigen::Vector3d axis(std::sqrt(std::max(s(0, 0), 0.0)),
                         std::sqrt(std::max(s(1, 1), 0.0)),
                         std::sqrt(std::max(s(2, 2), 0.0)));
    int k = 0;
    s.diagonal().maxCoeff(&k);
    if (axis[k] < 1e-12) return Eigen::Vector3d::Zero();
    // Fix the signs of the two remaining components from the off-diagonals.
    const int i = (k + 1) % 3;
    const int j = (k + 2) % 3;
    axis[i] = std::copysign(axis[i], s(k, i));
    axis[j] = std::copysign(axis[j], s(k, j));
    if (vee[k] < 0.0) axis = -axis;
    return theta * axis.normalized();
  }
  return (theta / (2.0 * std::sin(theta))) * vee;
}

SE3 SE3::FromMatrix(const Eigen::Matrix4d &matrix) {
  SE3 out;
  out.rotation = matrix.topLeftCorner<3, 3>();
  out.translation = matrix.topRightCorner<3, 1>();
  return out;
}

SE3 SE3::operator*(const SE3 &other) const {
  SE3 out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

SE3 SE3::Inverse() const {
  SE3 out;
  out.rotation = rotation.transpose();
  out.translation = -(rotation.transpose() * translation);
  return out;
}

Eigen::Matrix4d SE3::Matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

SE3 SE3::Orthonormalized() const {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  Eigen::Matrix3d v = svd.matrixV();
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (u * v.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  SE3 out;
  out.rotation = u * d * v.transpose();
  out.translation = translation;
  return out;
}

double SE3::OrthonormalityError() const {
  const Eigen::Matrix3d err =
      rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
  return err.cwiseAbs().maxCoeff();
}

bool SE3::IsApprox(const SE3 &other, double tolerance) const {
  return (rotation - other.rotation).cwiseAbs().maxCoeff() <= tolerance &&
         (translation - other.translation).cwiseAbs().maxCoeff() <= tolerance;
}

double WrapAngle(double angle) {
  double a = std::fmod(angle + M_PI, 2.0 * M_PI);
  if (a <= 0.0) a += 2.0 * M_PI;
  return a - M_PI;
}

Eigen::Matrix2d SE2::Rotation() const {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

Eigen::Vector2d SE2::operator*(const Eigen::Vector2d &p) const {
  return Rotation() * p + translation;
}

SE2 SE2::operator*(const SE2 &other) const {
  SE2 out;
  out.angle = WrapAngle(angle + other.angle);
  out.translation = Rotation() * other.translation + translation;
  return out;
}

SE2 SE2::Inverse() const {
  SE2 out;
  out.angle = WrapAngle(-angle);
  out.translation = -(out.Rotation() * translation);
  return out;
}

SE3 Se2ToSe3(const SE2 &t) {
  SE3 out;
  out.rotation = So3Exp(Eigen::Vector3d(0.0, 0.0, t.angle));
  out.translation = Eigen::Vector3d(t.translation.x(), t.translation.y(), 0.0);
  return out;
}

VoxelIndex VoxelOf(const Point3 &p, double resolution) {
  return VoxelIndex{static_cast<std::int64_t>(std::floor(p.x() / resolution)),
                    static_cast<std::int64_t>(std::floor(p.y() / resolution)),
                    static_cast<std::int64_t>(std::floor(p.z() / resolution))};
}

VoxelGrid::VoxelGrid(double resolution, int max_points_per_voxel)
    : resolution_(resolution), max_points_per_voxel_(max_points_per_voxel) {
  if (resolution <= 0.0) {
    throw std::invalid_argument("voxel grid resolution must be positive");
  }
  if (max_points_per_voxel < 1) {
    throw std::invalid_argument("voxel capacity must be at least 1");
  }
}

bool VoxelGrid::Insert(const Point3 &p) {
  auto &cell = cells_[VoxelOf(p, resolution_)];
  if (static_cast<int>(cell.size()) >= max_points_per_voxel_) return false;
  cell.push_back(p);
  ++size_;
  return true;
}

bool VoxelGrid::HasNeighborWithin(const Point3 &p, double radius) const {
  const VoxelIndex center = VoxelOf(p, resolution_);
  const double sq_radius = radius * radius;
  for (std::int64_t dx = -1; dx <= 1; ++dx) {
    for (std::int64_t dy = -1; dy <= 1; ++dy) {
      for (std::int64_t dz = -1; dz <= 1; ++dz) {
        const auto it = cells_.find(
            VoxelIndex{center.x + dx, center.y + dy, center.z + dz});
        if (it == cells_.end()) continue;
        for (const auto &q : it->second) {
          if ((q - p).squaredNorm() <= sq_radius) return true;
        }
      }
    }
  }
  return false;
}

std::vector<Point3> VoxelDownsample(const std::vector<Point3> &points,
                                    double resolution,
                                    int max_points_per_voxel) {
  if (resolution <= 0.0) {
    throw std::invalid_argument("voxel size must be positive");
  }
  if (max_points_per_voxel < 1) {
    throw std::invalid_argument("voxel capacity must be at least 1");
  }
  std::unordered_map<VoxelIndex, int, VoxelIndexHash> occupancy;
  occupancy.reserve(points.size());
  std::vector<Point3> kept;
  kept.reserve(points.size());
  for (const auto &p : points) {
    int &count = occupancy[VoxelOf(p, resolution)];
    if (count >= max_points_per_voxel) continue;
    ++count;
    kept.push_back(p);
  }
  return kept;
}

}  // namespace bevloop
