#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "arbor/annotation.hpp"
#include "arbor/camera.hpp"

namespace arbor::multiview {

using CameraMap = std::map<std::string, Camera>;
using annotation::VertexId;

/// One sighting of a 3D vertex: annotated pixel and radius in pixels.
struct Observation {
  std::string camera_id;
  std::string image_id;
  Vec2 pixel = Vec2::Zero();
  double radius_px = 0;
};

struct Keypoint3D {
  std::string id;
  Vec3 position = Vec3::Zero();
  double radius = 0;    ///< world units, 0 until estimated
  double residual = 0;  ///< RMS ray distance of the triangulation
  std::vector<Observation> observations;
};

struct BranchVertex {
  VertexId id = 0;
  Vec3 position = Vec3::Zero();
  double thickness = 0;  ///< radius in world units
  std::optional<std::string> keypoint;
  std::vector<Observation> observations;
};

struct Branch3D {
  std::vector<BranchVertex> vertices;
  std::vector<std::pair<VertexId, VertexId>> edges;
  std::vector<VertexId> roots;

  BranchVertex* find(VertexId id);
  const BranchVertex* find(VertexId id) const;
  VertexId next_id() const;
};

/// Skips, fallbacks and warnings collected while lifting annotations.
struct Report {
  enum class Kind { Skip, Fallback, Warning, Failure };
  struct Entry {
    Kind kind;
    std::string subject;
    std::string message;
  };
  std::vector<Entry> entries;

  void add(Kind kind, std::string subject, std::string message);
  std::size_t count(Kind kind) const;
  bool mentions(const std::string& subject) const;
};

std::string_view to_string(Report::Kind kind) noexcept;

struct Triangulation {
  Vec3 point = Vec3::Zero();
  double residual = 0;  ///< RMS of point-to-ray distances
};

/// Ratio of smallest to largest eigenvalue of sum(I - d d^T) below which a
/// ray bundle counts as degenerate.
inline constexpr double kRayConditionLimit = 1e-8;

/// Least-squares point closest to all rays (directions need not be unit).
/// Throws DegenerateRays for fewer than two rays or a near-parallel bundle.
Triangulation triangulate_point(std::span<const Ray> rays);

/// Cameras that are known and aligned, looked up by id.
const Camera* usable_camera(const CameraMap& cameras, const std::string& id);

/// Largest angle in degrees between any two viewing rays onto `point`.
double viewpoint_spread_deg(const Vec3& point, std::span<const Observation> observations, const CameraMap& cameras);

inline constexpr double kMinViewpointSpreadDeg = 10.0;

/// One keypoint per identifier seen in at least two aligned images, sorted by
/// identifier. Radii are estimated as well. Skips and low viewpoint spread
/// are reported.
std::vector<Keypoint3D> triangulate_keypoints(std::span<const annotation::ImageAnnotation> annotations,
                                              const CameraMap& cameras, Report* report = nullptr);

/// Mean over observing cameras of |x_w' - o| / |x_c - o| * r_c, where x_c is
/// the annotated pixel on the image plane at the mean focal length and x_w'
/// the same ray cut by the plane through the keypoint parallel to the image.
double estimate_thickness(const Keypoint3D& keypoint, const CameraMap& cameras);

/// Keypoints become vertices (ids in input order) joined wherever some image
/// has a curve between the two keypoints. Isolated vertices are reported.
Branch3D transfer_topology(std::span<const annotation::ImageAnnotation> annotations,
                           std::span<const Keypoint3D> keypoints, Report* report = nullptr);

/// Replaces every keypoint-to-keypoint edge by a chain with `n_sub` interior
/// vertices placed at equal fractions of the image-space curves and
/// triangulated. Edges seen in fewer than two aligned images, or whose rays
/// are degenerate, fall back to linear interpolation (reported).
Branch3D subdivide_curves(const Branch3D& branch, std::span<const annotation::ImageAnnotation> annotations,
                          const CameraMap& cameras, int n_sub, Report* report = nullptr);

/// One root per connected component: the vertex lowest along `up` (lowest
/// id on ties). Replaces `branch.roots`; roots are listed in id order.
void choose_roots(Branch3D& branch, const Vec3& up = Vec3::UnitZ());

inline constexpr double kDefaultClampFraction = 0.9;

/// Marches from `root` to the leaves. Each child moves to the mean over its
/// observing cameras of c' + alpha (c - c'), where c' is the child's
/// annotation ray cut by the plane through the (already clamped) parent that
/// is parallel to that camera's image plane.
Branch3D clamp_narrow_baseline(const Branch3D& branch, VertexId root, const CameraMap& cameras,
                               double alpha = kDefaultClampFraction);

struct ImageOutcome {
  std::string image_id;
  std::string camera_id;
  std::size_t shared_keypoints = 0;
  bool recovered = false;
  double rms_px = 0;
  std::string message;
};

struct Reregistration {
  CameraMap cameras;
  std::vector<Keypoint3D> keypoints;
  std::vector<ImageOutcome> outcomes;
};

struct ReregisterOptions {
  std::size_t min_shared = 6;
  double max_rms_px = 5.0;
  PnpOptions pnp;
};

/// Poses misaligned cameras from first-pass keypoints and, when any camera
/// was recovered, triangulates again with the newly aligned images.
Reregistration reregister_misaligned(std::span<const Keypoint3D> first_pass,
                                     std::span<const annotation::ImageAnnotation> annotations,
                                     const CameraMap& cameras, const ReregisterOptions& options = {},
                                     Report* report = nullptr);

}  // namespace arbor::multiview
