#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace bevloop {

using Point3 = Eigen::Vector3d;

/// Rodrigues exponential of an axis-angle vector.
Eigen::Matrix3d So3Exp(const Eigen::Vector3d &omega);

/// Axis-angle logarithm of a rotation matrix, valid for angles in [0, pi].
Eigen::Vector3d So3Log(const Eigen::Matrix3d &rotation);

/// Rigid transform in 3D, rotation stored as a matrix so the ground solver's
/// perturbation math maps directly onto it.
struct SE3 {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static SE3 Identity() { return {}; }
  static SE3 FromMatrix(const Eigen::Matrix4d &matrix);

  Point3 operator*(const Point3 &p) const { return rotation * p + translation; }
  SE3 operator*(const SE3 &other) const;
  SE3 Inverse() const;
  Eigen::Matrix4d Matrix() const;

  /// Projects the rotation block back onto SO(3) (polar decomposition).
  SE3 Orthonormalized() const;

  /// Max-abs deviation of R^T R from identity.
  double OrthonormalityError() const;

  bool IsApprox(const SE3 &other, double tolerance = 1e-9) const;
};

/// Wraps an angle to (-pi, pi].
double WrapAngle(double angle);

/// Planar rigid transform used for the 2D image alignment.
struct SE2 {
  double angle = 0.0;  // radians, wrapped to (-pi, pi]
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();

  static SE2 Identity() { return {}; }

  Eigen::Matrix2d Rotation() const;
  Eigen::Vector2d operator*(const Eigen::Vector2d &p) const;
  SE2 operator*(const SE2 &other) const;
  SE2 Inverse() const;
};

/// Promotes a planar transform to 3D: pure yaw plus x/y translation.
SE3 Se2ToSe3(const SE2 &t);

struct PointCloud {
  std::vector<Point3> points;
  std::vector<float> intensities;  // parallel to points when non-empty
  std::string frame_id;

  bool empty() const { return points.empty(); }
  std::size_t size() const { return points.size(); }
};

struct VoxelIndex {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;
  bool operator==(const VoxelIndex &other) const = default;
};

struct VoxelIndexHash {
  std::size_t operator()(const VoxelIndex &v) const {
    return static_cast<std::size_t>(v.x * 73856093LL ^ v.y * 19349669LL ^
                                    v.z * 83492791LL);
  }
};

VoxelIndex VoxelOf(const Point3 &p, double resolution);

/// Hash grid with a bounded number of points per cell. Single writer during
/// construction, immutable afterwards.
class VoxelGrid {
 public:
  VoxelGrid(double resolution, int max_points_per_voxel);

  /// Inserts p unless its cell is already at capacity. Returns true if kept.
  bool Insert(const Point3 &p);

  /// True if any stored point lies within `radius` of p. Exact as long as
  /// radius <= resolution (the 27-cell neighborhood then covers the ball).
  bool HasNeighborWithin(const Point3 &p, double radius) const;

  double resolution() const { return resolution_; }
  int max_points_per_voxel() const { return max_points_per_voxel_; }
  std::size_t size() const { return size_; }

 private:
  double resolution_;
  int max_points_per_voxel_;
  std::size_t size_ = 0;
  std::unordered_map<VoxelIndex, std::vector<Point3>, VoxelIndexHash> cells_;
};

/// Keeps at most `max_points_per_voxel` points per cell, first come first
/// kept, so the output is deterministic given the input order.
std::vector<Point3> VoxelDownsample(const std::vector<Point3> &points,
                                    double resolution,
                                    int max_points_per_voxel);

}  // namespace bevloop
