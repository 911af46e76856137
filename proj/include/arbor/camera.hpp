#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace arbor {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Four-parameter pinhole intrinsics; no distortion model.
struct Intrinsics {
  double fx = 1, fy = 1;
  double cx = 0, cy = 0;
  int width = 1, height = 1;

  Mat3 K() const;
  bool valid() const noexcept;
};

/// World-to-camera rigid transform: x_cam = R * x_world + t.
struct Extrinsics {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  bool valid(double tol = 1e-9) const;
  Vec3 center() const { return -R.transpose() * t; }
};

struct Camera {
  std::string id;
  Intrinsics intrinsics;
  Extrinsics extrinsics;
  bool aligned = true;

  Vec3 center() const { return extrinsics.center(); }
  /// Unit optical axis in world coordinates.
  Vec3 view_axis() const { return extrinsics.R.row(2).transpose(); }
  Vec3 to_camera(const Vec3& world) const { return extrinsics.R * world + extrinsics.t; }
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();

  Vec3 at(double s) const { return origin + s * direction; }
};

/// Pixel of a world point. Throws NonPositiveDepth when the point is not in
/// front of the camera.
Vec2 project(const Camera& camera, const Vec3& point);

/// Ray from the optical center through a pixel.
Ray pixel_ray(const Camera& camera, const Vec2& pixel);

/// World point on the pixel ray at a given camera-frame depth.
Vec3 unproject(const Camera& camera, const Vec2& pixel, double depth);

/// Intersects `ray` with the plane through `anchor` parallel to the image
/// plane of `camera`.
Vec3 parallel_plane_intersect(const Camera& camera, const Ray& ray, const Vec3& anchor);

/// F such that x2^T F x1 = 0 for homogeneous pixels of a common world point.
Mat3 fundamental_matrix(const Camera& cam1, const Camera& cam2);

/// Epipolar line in image 2 of pixel `x1` in image 1, scaled so a^2 + b^2 = 1.
Vec3 epipolar_line(const Mat3& F, const Vec2& x1);

struct Correspondence {
  Vec3 world;
  Vec2 pixel;
};

struct PnpOptions {
  int max_iterations = 50;
  double tolerance = 1e-12;  ///< relative cost decrease that ends refinement
  bool ransac = false;
  double inlier_threshold_px = 4.0;
  int ransac_iterations = 200;
  std::uint64_t seed = 0;
};

struct PnpResult {
  Extrinsics pose;
  double rms_px = 0;
  int iterations = 0;
  std::vector<double> rms_history;  ///< RMS after the linear stage, then per refinement step
  std::vector<std::size_t> inliers;   ///< all indices unless RANSAC is enabled
};

/// Direct linear transform followed by Gauss-Newton refinement of reprojection
/// error. Needs at least six non-degenerate correspondences.
PnpResult solve_pnp(std::span<const Correspondence> correspondences, const Intrinsics& intrinsics,
                    const PnpOptions& options = {});

/// Skew-symmetric cross-product matrix.
Mat3 skew(const Vec3& v);

/// Rotation matrix from an axis-angle vector.
Mat3 rotation_from_axis_angle(const Vec3& omega);

}  // namespace arbor
