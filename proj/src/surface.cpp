#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <algorithm>
#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>
#include <cmath>
#include <iterator>
#include <limits>

#include "arbor/treegeom.hpp"

namespace arbor::tree {

namespace {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;
using BPoint = bg::model::point<double, 3, bg::cs::cartesian>;
using BBox = bg::model::box<BPoint>;
using Indexed = std::pair<BPoint, std::size_t>;
using PointTree = bgi::rtree<Indexed, bgi::rstar<16>>;

BPoint bp(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

PointTree index_cloud(const PointCloud& cloud) {
  std::vector<Indexed> values;
  values.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) values.emplace_back(bp(cloud.points[i]), i);
  return PointTree(values.begin(), values.end());
}

BBox around(const Vec3& c, const Vec3& half) { return {bp(c - half), bp(c + half)}; }

}  // namespace

bool in_sampling_cylinder(const Vec3& v, const Vec3& n, const Vec3& p, double radius, double height) {
  const Vec3 d = p - v;
  const double a = d.dot(n);
  if (std::abs(a) > height) return false;
  return (d - a * n).norm() <= radius;
}

Heights sample_heights_reference(const Mesh& mesh, const PointCloud& cloud, double radius, double height) {
  Heights h{std::vector<double>(mesh.size(), 0.0), std::vector<char>(mesh.size(), 0)};
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    const Vec3 n = mesh.normals[i].normalized();
    double sum = 0;
    std::size_t count = 0;
    for (const Vec3& p : cloud.points) {
      if (!in_sampling_cylinder(mesh.positions[i], n, p, radius, height)) continue;
      sum += (p - mesh.positions[i]).dot(n);
      ++count;
    }
    if (count) h.value[i] = sum / static_cast<double>(count), h.known[i] = 1;
  }
  return h;
}

Heights sample_heights(const Mesh& mesh, const PointCloud& cloud, double radius, double height) {
  if (!(radius > 0) || !(height > 0)) throw Error(Errc::InvalidParams, "sampling cylinder needs positive size");
  Heights h{std::vector<double>(mesh.size(), 0.0), std::vector<char>(mesh.size(), 0)};
  if (cloud.points.empty()) return h;
  const PointTree tree = index_cloud(cloud);
  const long n = static_cast<long>(mesh.size());
#pragma omp parallel
  {
    std::vector<Indexed> hits;
#pragma omp for schedule(dynamic, 64)
    for (long i = 0; i < n; ++i) {
      const Vec3& v = mesh.positions[i];
      const Vec3 nrm = mesh.normals[i].normalized();
      Vec3 half;
      for (int k = 0; k < 3; ++k)
        half[k] = height * std::abs(nrm[k]) + radius * std::sqrt(std::max(0.0, 1 - nrm[k] * nrm[k]));
      half = half * (1 + 1e-9) + Vec3::Constant(1e-12);
      hits.clear();
      tree.query(bgi::intersects(around(v, half)), std::back_inserter(hits));
      // Sum in index order so the result does not depend on the tree layout.
      std::sort(hits.begin(), hits.end(), [](const Indexed& a, const Indexed& b) { return a.second < b.second; });
      double sum = 0;
      std::size_t count = 0;
      for (const auto& [pt, idx] : hits) {
        const Vec3& p = cloud.points[idx];
        if (!in_sampling_cylinder(v, nrm, p, radius, height)) continue;
        sum += (p - v).dot(nrm);
        ++count;
      }
      if (count) h.value[i] = sum / static_cast<double>(count), h.known[i] = 1;
    }
  }
  return h;
}

FillResult laplace_fill(const std::vector<std::vector<int>>& adj, const Heights& heights) {
  const std::size_t n = adj.size();
  if (heights.value.size() != n || heights.known.size() != n) {
    throw Error(Errc::DimensionMismatch, "heights do not match the graph");
  }
  FillResult r;
  r.value.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (heights.known[i]) r.value[i] = heights.value[i];

  // Unknown components that touch a known vertex are solved; the rest stay 0.
  std::vector<int> comp(n, -1);
  std::vector<char> anchored;
  for (std::size_t s = 0; s < n; ++s) {
    if (heights.known[s] || comp[s] >= 0) continue;
    const int id = static_cast<int>(anchored.size());
    anchored.push_back(0);
    std::vector<std::size_t> stack{s};
    comp[s] = id;
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      for (int u : adj[v]) {
        if (heights.known[u]) anchored[id] = 1;
        else if (comp[u] < 0) comp[u] = id, stack.push_back(static_cast<std::size_t>(u));
      }
    }
  }
  std::vector<int> row(n, -1);
  int m = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (heights.known[i]) continue;
    if (anchored[comp[i]]) row[i] = m++;
    else ++r.unanchored;
  }
  if (m == 0) return r;

  std::vector<Eigen::Triplet<double>> trips;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
  for (std::size_t i = 0; i < n; ++i) {
    if (row[i] < 0) continue;
    trips.emplace_back(row[i], row[i], static_cast<double>(adj[i].size()));
    for (int u : adj[i]) {
      if (heights.known[u]) b[row[i]] += heights.value[u];
      else trips.emplace_back(row[i], row[u], -1.0);
    }
  }
  Eigen::SparseMatrix<double> A(m, m);
  A.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
  if (solver.info() != Eigen::Success) throw Error(Errc::NoConvergence, "Laplace system factorization failed");
  Eigen::VectorXd x = solver.solve(b);
  // One step of iterative refinement keeps the residual tight on large patches.
  x += solver.solve(b - A * x);
  const double bn = b.norm();
  r.relative_residual = (A * x - b).norm() / (bn > 0 ? bn : 1.0);
  for (std::size_t i = 0; i < n; ++i)
    if (row[i] >= 0) r.value[i] = x[row[i]];
  return r;
}

DisplaceResult displace_mesh(const Mesh& mesh, const PointCloud& cloud, double sample_radius, double sample_height) {
  DisplaceResult out;
  out.mesh = mesh;
  const Heights h = sample_heights(mesh, cloud, sample_radius, sample_height);
  out.unknown = static_cast<std::size_t>(std::count(h.known.begin(), h.known.end(), 0));
  if (out.unknown == mesh.size()) {
    out.all_empty = true;
    out.height.assign(mesh.size(), 0.0);
    return out;
  }
  const FillResult f = laplace_fill(vertex_adjacency(mesh), h);
  out.unanchored = f.unanchored;
  out.height = f.value;
  for (std::size_t i = 0; i < mesh.size(); ++i)
    out.mesh.positions[i] = mesh.positions[i] + f.value[i] * mesh.normals[i].normalized();
  return out;
}

Mesh smooth(const Mesh& mesh, int iterations, double lambda) {
  if (!(lambda > 0 && lambda <= 1)) throw Error(Errc::InvalidParams, "smoothing lambda must lie in (0, 1]");
  if (iterations < 0) throw Error(Errc::InvalidParams, "negative iteration count");
  Mesh out = mesh;
  const auto adj = vertex_adjacency(mesh);
  std::vector<Vec3> next(mesh.size());
  const long n = static_cast<long>(mesh.size());
  for (int it = 0; it < iterations; ++it) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
      const Vec3& p = out.positions[i];
      if (adj[i].empty()) {
        next[i] = p;
        continue;
      }
      Vec3 mean = Vec3::Zero();
      for (int u : adj[i]) mean += out.positions[u];
      mean /= static_cast<double>(adj[i].size());
      next[i] = p + lambda * (mean - p);
    }
    out.positions.swap(next);
  }
  return out;
}

double laplacian_energy(const Mesh& mesh, const std::vector<std::vector<int>>& adj) {
  double e = 0;
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    if (adj[i].empty()) continue;
    Vec3 mean = Vec3::Zero();
    for (int u : adj[i]) mean += mesh.positions[u];
    mean /= static_cast<double>(adj[i].size());
    e += static_cast<double>(adj[i].size()) * (mean - mesh.positions[i]).squaredNorm();
  }
  return e;
}

void recompute_normals(Mesh& mesh) {
  std::vector<Vec3> acc(mesh.size(), Vec3::Zero());
  for (const auto& t : mesh.triangles) {
    const Vec3 n = (mesh.positions[t[1]] - mesh.positions[t[0]]).cross(mesh.positions[t[2]] - mesh.positions[t[0]]);
    for (int v : t) acc[v] += n;
  }
  for (std::size_t i = 0; i < mesh.size(); ++i)
    if (acc[i].norm() > 0) mesh.normals[i] = acc[i].normalized();
}

std::vector<Rgb> texture_nearest(const Mesh& mesh, const PointCloud& cloud) {
  if (cloud.points.empty()) throw Error(Errc::EmptyCloud, "texturing needs a non-empty point cloud");
  if (cloud.colors.size() != cloud.points.size()) throw Error(Errc::DimensionMismatch, "cloud colors do not match points");
  const PointTree tree = index_cloud(cloud);
  std::vector<Rgb> colors(mesh.size());
  const long n = static_cast<long>(mesh.size());
#pragma omp parallel
  {
    std::vector<Indexed> hits;
#pragma omp for schedule(dynamic, 64)
    for (long i = 0; i < n; ++i) {
      const Vec3& v = mesh.positions[i];
      hits.clear();
      tree.query(bgi::nearest(bp(v), 1), std::back_inserter(hits));
      // Gather every point at the nearest distance and keep the lowest index.
      const double d = (cloud.points[hits.front().second] - v).norm();
      const double pad = d * (1 + 1e-12) + 1e-300;
      hits.clear();
      tree.query(bgi::intersects(around(v, Vec3::Constant(pad))), std::back_inserter(hits));
      std::size_t best = std::numeric_limits<std::size_t>::max();
      double best_d = std::numeric_limits<double>::infinity();
      for (const auto& [pt, idx] : hits) {
        const double dd = (cloud.points[idx] - v).squaredNorm();
        if (dd < best_d || (dd == best_d && idx < best)) best_d = dd, best = idx;
      }
      colors[i] = cloud.colors[best];
    }
  }
  return colors;
}

double view_quality(const Vec3& position, const Vec3& normal, const Vec3& camera_center) {
  const Vec3 to = camera_center - position;
  const double d = to.norm();
  if (!(d > 0)) return 0;
  return std::max(0.0, normal.normalized().dot(to / d)) / (1 + d * d);
}

}  // namespace arbor::tree
