#include <algorithm>
#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>
#include <cmath>
#include <limits>
#include <numbers>

#include "arbor/treegeom.hpp"

namespace arbor::tree {

namespace {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;
using BPoint = bg::model::point<double, 3, bg::cs::cartesian>;
using BBox = bg::model::box<BPoint>;
using EdgeBox = std::pair<BBox, int>;

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

PointBinding make_binding(const Skeleton& sk, int edge, const Vec3& p, double d) {
  return {edge, edge_frame(sk, edge).inverse() * p, d};
}

}  // namespace

Isometry edge_frame(const Skeleton& sk, int edge) {
  const Vec3 a = sk.nodes[sk.edges[edge].first].position;
  const Vec3 d = sk.nodes[sk.edges[edge].second].position - a;
  const Vec3 z = d.norm() > 0 ? d.normalized() : Vec3::UnitZ();
  Vec3 x = Vec3::UnitZ().cross(z);
  if (x.norm() < 1e-9) x = Vec3::UnitX().cross(z);
  x.normalize();
  Isometry f = Isometry::Identity();
  f.linear().col(0) = x;
  f.linear().col(1) = z.cross(x);
  f.linear().col(2) = z;
  f.translation() = a;
  return f;
}

std::vector<PointBinding> bind_orphan_points_reference(const PointCloud& cloud, const Skeleton& sk) {
  if (sk.edges.empty()) throw Error(Errc::InvalidTopology, "skeleton has no edges");
  std::vector<PointBinding> out;
  out.reserve(cloud.size());
  for (const Vec3& p : cloud.points) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < sk.edges.size(); ++e) {
      const double d = segment_distance(p, sk.nodes[sk.edges[e].first].position, sk.nodes[sk.edges[e].second].position);
      if (d < best_d) best_d = d, best = static_cast<int>(e);
    }
    out.push_back(make_binding(sk, best, p, best_d));
  }
  return out;
}

std::vector<PointBinding> bind_orphan_points(const PointCloud& cloud, const Skeleton& sk) {
  if (sk.edges.empty()) throw Error(Errc::InvalidTopology, "skeleton has no edges");
  std::vector<EdgeBox> boxes;
  for (std::size_t e = 0; e < sk.edges.size(); ++e) {
    const Vec3& a = sk.nodes[sk.edges[e].first].position;
    const Vec3& b = sk.nodes[sk.edges[e].second].position;
    const Vec3 lo = a.cwiseMin(b), hi = a.cwiseMax(b);
    boxes.emplace_back(BBox({lo.x(), lo.y(), lo.z()}, {hi.x(), hi.y(), hi.z()}), static_cast<int>(e));
  }
  const bgi::rtree<EdgeBox, bgi::rstar<16>> tree(boxes.begin(), boxes.end());
  std::vector<PointBinding> out(cloud.size());
  const long n = static_cast<long>(cloud.size());
#pragma omp parallel for schedule(dynamic, 256)
  for (long i = 0; i < n; ++i) {
    const Vec3& p = cloud.points[i];
    const BPoint q(p.x(), p.y(), p.z());
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    // Boxes arrive by increasing distance, which bounds the segment distance
    // from below; stop once no remaining box can tie the best segment.
    for (auto it = tree.qbegin(bgi::nearest(q, static_cast<unsigned>(boxes.size()))); it != tree.qend(); ++it) {
      const double lower = bg::distance(q, it->first);
      if (lower > best_d * (1 + 1e-12) + 1e-300) break;
      const int e = it->second;
      const double d = segment_distance(p, sk.nodes[sk.edges[e].first].position, sk.nodes[sk.edges[e].second].position);
      if (d < best_d || (d == best_d && e < best)) best_d = d, best = e;
    }
    out[i] = make_binding(sk, best, p, best_d);
  }
  return out;
}

Posed pose(const Skeleton& sk, std::span<const Isometry> T, const Mesh& mesh, const PointCloud& cloud,
           std::span<const PointBinding> bindings) {
  if (T.size() != sk.edges.size()) {
    throw Error(Errc::InconsistentPose, "pose has " + std::to_string(T.size()) + " transforms for " +
                                            std::to_string(sk.edges.size()) + " edges");
  }
  if (!cloud.points.empty() && bindings.size() != cloud.size()) {
    throw Error(Errc::DimensionMismatch, "every cloud point needs a binding");
  }
  const auto parent_edge = sk.parent_edge();
  int first_root_edge = -1;
  for (std::size_t e = 0; e < sk.edges.size(); ++e) {
    const int node = sk.edges[e].first;
    const Vec3& x = sk.nodes[node].position;
    int ref = parent_edge[node];
    if (ref < 0) {
      if (first_root_edge < 0) first_root_edge = static_cast<int>(e);
      ref = first_root_edge;
    }
    const double tol = 1e-6 * (1 + x.norm());
    if ((T[e] * x - T[ref] * x).norm() > tol) {
      throw Error(Errc::InconsistentPose, "edge " + std::to_string(e) + " separates from its parent at node " +
                                              std::to_string(node));
    }
  }

  Posed out{mesh, cloud};
  const bool identity = std::all_of(T.begin(), T.end(), [](const Isometry& t) { return t.matrix() == Eigen::Matrix4d::Identity(); });
  if (identity) return out;

  for (std::size_t i = 0; i < mesh.size(); ++i) {
    Vec3 p = Vec3::Zero(), nrm = Vec3::Zero();
    double wsum = 0;
    for (const auto& b : mesh.bindings[i]) {
      if (b.weight <= 0 || b.edge < 0) continue;
      p += b.weight * (T[b.edge] * mesh.positions[i]);
      nrm += b.weight * (T[b.edge].linear() * mesh.normals[i]);
      wsum += b.weight;
    }
    if (wsum <= 0) continue;
    out.mesh.positions[i] = p / wsum;
    if (nrm.norm() > 0) out.mesh.normals[i] = nrm.normalized();
  }
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& b = bindings[i];
    out.cloud.points[i] = T[b.edge] * (edge_frame(sk, b.edge) * b.local);
  }
  return out;
}

FrustumMass frustum_mass(double a, double b, double L, double rho) {
  using std::numbers::pi;
  const double s2 = a * a + a * b + b * b;
  const double s4 = a * a * a * a + a * a * a * b + a * a * b * b + a * b * b * b + b * b * b * b;
  FrustumMass m{};
  m.mass = rho * pi * L * s2 / 3;
  m.com_z = L * (a * a + 2 * a * b + 3 * b * b) / (4 * s2);
  m.axial = rho * pi * L * s4 / 10;
  // About a perpendicular axis through the base center, then shifted to the center of mass.
  const double base = rho * pi * (L * s4 / 20 + L * L * L * (a * a + 3 * a * b + 6 * b * b) / 30);
  m.transverse = base - m.mass * m.com_z * m.com_z;
  return m;
}

RigidBodyModel export_rigid_bodies(const Skeleton& sk, double density, double stiffness, double damping) {
  if (!(density > 0)) throw Error(Errc::InvalidParams, "density must be positive");
  sk.validate();
  RigidBodyModel model;
  const auto parent_edge = sk.parent_edge();
  for (std::size_t e = 0; e < sk.edges.size(); ++e) {
    const auto& a = sk.nodes[sk.edges[e].first];
    const auto& b = sk.nodes[sk.edges[e].second];
    const double L = (b.position - a.position).norm();
    if (!(L > 0)) throw Error(Errc::InvalidTopology, "edge " + std::to_string(e) + " has zero length");
    const auto m = frustum_mass(a.radius, b.radius, L, density);
    const Isometry f = edge_frame(sk, static_cast<int>(e));
    RigidBody body;
    body.edge = static_cast<int>(e);
    body.r1 = a.radius;
    body.r2 = b.radius;
    body.length = L;
    body.mass = m.mass;
    body.rotation = f.linear();
    body.center_of_mass = a.position + m.com_z * f.linear().col(2);
    body.inertia_body = Vec3(m.transverse, m.transverse, m.axial).asDiagonal();
    model.bodies.push_back(body);
    model.joints.push_back({parent_edge[sk.edges[e].first], static_cast<int>(e), a.position, stiffness, damping});
  }
  return model;
}

}  // namespace arbor::tree
