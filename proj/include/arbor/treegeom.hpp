#pragma once

#include <Eigen/Geometry>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "arbor/annotation.hpp"
#include "arbor/camera.hpp"
#include "arbor/image.hpp"
#include "arbor/multiview.hpp"

namespace arbor::tree {

using Rgb = std::array<std::uint8_t, 3>;
using Isometry = Eigen::Isometry3d;

/// Where a skeleton node sits between two annotated keypoints, as a fraction
/// of the control-polygon length from `from` to `to`.
struct Anchor {
  std::string from, to;
  double fraction = 0;
};

struct SkeletonNode {
  Vec3 position = Vec3::Zero();
  double radius = 0;
  std::optional<Anchor> anchor;
};

/// Generalized-cylinder tree. Node ids are indices; edge i runs from
/// edges[i].first (parent) to edges[i].second (child).
struct Skeleton {
  std::vector<SkeletonNode> nodes;
  std::vector<std::pair<int, int>> edges;
  int root = 0;

  /// Throws InvalidTopology (or CyclicInput) unless the edges form a tree
  /// rooted at `root` spanning every node, with positive radii and at most
  /// two children per node.
  void validate() const;
  std::vector<std::vector<int>> child_edges() const;  ///< per node, outgoing edge ids in id order
  std::vector<int> parent_edge() const;               ///< per node, incoming edge id or -1
};

/// Clamped uniform B-spline of degree min(3, n - 1) through the control
/// points' hull, evaluated by de Boor's algorithm at u in [0, 1].
Vec3 bspline_point(std::span<const Vec3> controls, double u);

/// Every maximal unbranched chain of the branch graph becomes a B-spline over
/// its vertices, sampled at `samples_per_segment` points per control segment.
/// Bifurcation vertices stay shared nodes. Radii follow the control polygon
/// by length fraction. Throws CyclicInput when the graph has a cycle.
Skeleton skeleton_from_branches(const multiview::Branch3D& branch, int samples_per_segment,
                                std::optional<multiview::VertexId> root = std::nullopt);

struct BoneBinding {
  int edge = -1;
  double weight = 0;
};

struct Mesh {
  std::vector<Vec3> positions;
  std::vector<Vec3> normals;
  std::vector<Rgb> colors;
  std::vector<std::array<BoneBinding, 2>> bindings;  ///< second entry unused when its weight is 0
  std::vector<int> ring_node;                         ///< skeleton node of the generating ring, -1 for none
  std::vector<std::array<int, 3>> triangles;

  std::size_t size() const { return positions.size(); }
};

/// Per-vertex sorted neighbor lists from the triangle edges.
std::vector<std::vector<int>> vertex_adjacency(const Mesh& mesh);

/// Rotation-minimizing frames along a polyline by double reflection. The
/// first reference vector is up x tangent (x axis when they are parallel).
struct Frame {
  Vec3 tangent, normal, binormal;
};
std::vector<Frame> rotation_minimizing_frames(std::span<const Vec3> points);

struct SkinOptions {
  int ring_sides = 16;
  bool weld = true;  ///< false leaves side branches as separate open tubes
};

/// One tube per chain: rings oriented by rotation-minimizing frames, caps on
/// the root and leaves, side branches welded to the parent ring at the fork.
Mesh skin_skeleton(const Skeleton& skeleton, const SkinOptions& options = {});

/// Counts of mesh edges by number of incident triangles.
struct ManifoldAudit {
  std::size_t boundary_edges = 0;  ///< one triangle
  std::size_t interior_edges = 0;  ///< two triangles
  std::size_t singular_edges = 0;  ///< three or more
  bool consistently_oriented = true;
  std::size_t vertices = 0, edges = 0, faces = 0;
  long euler_characteristic() const { return static_cast<long>(vertices) - static_cast<long>(edges) + static_cast<long>(faces); }
  bool manifold() const { return singular_edges == 0 && consistently_oriented; }
};
ManifoldAudit audit_manifold(const Mesh& mesh);

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Rgb> colors;

  std::size_t size() const { return points.size(); }
};

/// Closed membership test for the sampling cylinder of a vertex.
bool in_sampling_cylinder(const Vec3& vertex, const Vec3& normal, const Vec3& point, double radius, double height);

struct Heights {
  std::vector<double> value;
  std::vector<char> known;
};

/// Mean normal offset of the cloud points in each vertex's sampling cylinder;
/// vertices with empty cylinders are unknown. Parallel over vertices using a
/// spatial index.
Heights sample_heights(const Mesh& mesh, const PointCloud& cloud, double radius, double height);
/// Serial brute-force version of sample_heights.
Heights sample_heights_reference(const Mesh& mesh, const PointCloud& cloud, double radius, double height);

struct FillResult {
  std::vector<double> value;
  std::size_t unanchored = 0;  ///< unknown vertices in regions without a known vertex (set to 0)
  double relative_residual = 0;
};

/// Harmonic extension with uniform graph-Laplacian weights: unknown values
/// equal the mean of their neighbors, known values are Dirichlet data.
FillResult laplace_fill(const std::vector<std::vector<int>>& adjacency, const Heights& heights);

struct DisplaceResult {
  Mesh mesh;
  std::vector<double> height;
  std::size_t unknown = 0;
  std::size_t unanchored = 0;
  bool all_empty = false;
};

/// Moves every vertex along its normal by the sampled height, filling empty
/// regions harmonically.
DisplaceResult displace_mesh(const Mesh& mesh, const PointCloud& cloud, double sample_radius, double sample_height);

/// Uniform Laplacian smoothing of positions; 0 < lambda <= 1.
Mesh smooth(const Mesh& mesh, int iterations, double lambda);

/// Sum over vertices of degree * |neighbor mean - vertex|^2.
double laplacian_energy(const Mesh& mesh, const std::vector<std::vector<int>>& adjacency);

/// Recomputes area-weighted vertex normals from the triangles.
void recompute_normals(Mesh& mesh);

/// Colors each vertex with its exact nearest cloud point. Throws EmptyCloud.
std::vector<Rgb> texture_nearest(const Mesh& mesh, const PointCloud& cloud);

/// Quality of a camera for a vertex: max(0, n . v) / (1 + d^2), v the unit
/// direction to the camera center and d its distance.
double view_quality(const Vec3& position, const Vec3& normal, const Vec3& camera_center);

struct ImageTexture {
  std::vector<Rgb> colors;
  std::vector<char> colored;
  std::size_t uncolored = 0;
};

/// Colors branch vertices from the annotated images: each ring vertex looks up
/// the matching point on every annotated keypoint curve by its length fraction
/// and its signed offset across the branch, and keeps the best-quality sample.
ImageTexture texture_from_images(const Mesh& mesh, const Skeleton& skeleton,
                                 std::span<const annotation::ImageAnnotation> annotations,
                                 const multiview::CameraMap& cameras, const std::map<std::string, Rgb8>& images);

struct PointBinding {
  int edge = -1;
  Vec3 local = Vec3::Zero();  ///< coordinates in the edge frame
  double distance = 0;
};

/// Edge frame: origin at the parent node, z along the edge.
Isometry edge_frame(const Skeleton& skeleton, int edge);

/// Binds every point to the edge at the smallest point-to-segment distance,
/// lowest edge id on ties.
std::vector<PointBinding> bind_orphan_points(const PointCloud& cloud, const Skeleton& skeleton);
std::vector<PointBinding> bind_orphan_points_reference(const PointCloud& cloud, const Skeleton& skeleton);

struct Posed {
  Mesh mesh;
  PointCloud cloud;
};

/// Linear blend skinning with one rigid transform per edge. Throws
/// InconsistentPose when the count is wrong or a child edge does not carry
/// its joint to where the parent edge puts it.
Posed pose(const Skeleton& skeleton, std::span<const Isometry> transforms, const Mesh& mesh,
           const PointCloud& cloud = {}, std::span<const PointBinding> bindings = {});

struct RigidBody {
  int edge = -1;
  double r1 = 0, r2 = 0, length = 0;
  double mass = 0;
  Vec3 center_of_mass = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();  ///< body frame, z along the edge
  Mat3 inertia_body = Mat3::Zero();  ///< about the center of mass in the body frame
  Mat3 inertia_world() const { return rotation * inertia_body * rotation.transpose(); }
};

struct Joint {
  int parent_body = -1;  ///< -1 anchors the body to the ground
  int child_body = -1;
  Vec3 position = Vec3::Zero();
  double stiffness = 0, damping = 0;
};

struct RigidBodyModel {
  std::vector<RigidBody> bodies;
  std::vector<Joint> joints;
};

/// Solid conical frustum of radii r1 (base, z = 0) and r2 (top, z = L).
struct FrustumMass {
  double mass;
  double com_z;
  double axial;   ///< about the axis
  double transverse;  ///< about a perpendicular axis through the center of mass
};
FrustumMass frustum_mass(double r1, double r2, double length, double density);

RigidBodyModel export_rigid_bodies(const Skeleton& skeleton, double density, double stiffness, double damping);

}  // namespace arbor::tree
