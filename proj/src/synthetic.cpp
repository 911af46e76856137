#include "arbor/synthetic.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <set>

namespace arbor::synthetic {

using std::numbers::pi;

Vec3 Tree::edge_point(int child, double t) const {
  const Vec3& a = nodes[parent[child]];
  const Vec3& b = nodes[child];
  const Vec3& c = controls[child];
  return (1 - t) * (1 - t) * a + 2 * (1 - t) * t * c + t * t * b;
}

double Tree::edge_radius(int child, double t) const { return std::lerp(radii[parent[child]], radii[child], t); }

std::string Tree::key(int node) { return "k" + std::to_string(node); }

Tree make_tree(std::uint64_t seed, const TreeOptions& opt) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Tree t;
  t.nodes.push_back(Vec3::Zero());
  t.radii.push_back(opt.root_radius);
  t.parent.push_back(-1);
  t.controls.push_back(Vec3::Zero());
  std::vector<int> depth{0};
  for (int i = 1; i <= opt.branches; ++i) {
    const int p = (i - 1) / 2;
    const int d = depth[p] + 1;
    const double len = opt.trunk_height * std::pow(0.8, d - 1);
    Vec3 dir = p == 0 && i == 1 ? Vec3(0, 0, 1)
                                : Vec3(opt.spread * u(rng), opt.spread * u(rng), 0.6 + 0.4 * std::abs(u(rng)));
    dir.normalize();
    const Vec3 a = t.nodes[p];
    const Vec3 b = a + len * dir;
    Vec3 side = dir.cross(Vec3(u(rng), u(rng), u(rng))).normalized();
    t.nodes.push_back(b);
    t.radii.push_back(std::max(opt.min_radius, t.radii[p] * 0.75));
    t.parent.push_back(p);
    t.controls.push_back(0.5 * (a + b) + opt.bend * len * side);
    depth.push_back(d);
  }
  return t;
}

Camera look_at(const std::string& id, const Vec3& eye, const Vec3& target, double focal, int width, int height) {
  const Vec3 z = (target - eye).normalized();
  Vec3 up(0, 0, 1);
  if (std::abs(z.dot(up)) > 0.99) up = Vec3(0, 1, 0);
  const Vec3 x = z.cross(up).normalized();
  const Vec3 y = z.cross(x);
  Camera c;
  c.id = id;
  c.intrinsics = {focal, focal, width / 2.0, height / 2.0, width, height};
  c.extrinsics.R.row(0) = x.transpose();
  c.extrinsics.R.row(1) = y.transpose();
  c.extrinsics.R.row(2) = z.transpose();
  c.extrinsics.t = -c.extrinsics.R * eye;
  return c;
}

std::vector<Camera> ring_cameras(int count, double radius, double height, const Vec3& target, double focal, int width,
                                 int height_px, double arc_deg) {
  std::vector<Camera> out;
  const double step = arc_deg >= 360 ? 2 * pi / count : arc_deg * pi / 180 / std::max(1, count - 1);
  for (int i = 0; i < count; ++i) {
    const double a = i * step;
    const Vec3 eye = target + Vec3(radius * std::cos(a), radius * std::sin(a), height);
    char id[16];
    std::snprintf(id, sizeof id, "cam%02d", i);
    out.push_back(look_at(id, eye, target, focal, width, height_px));
  }
  return out;
}

annotation::ImageAnnotation annotate(const Tree& tree, const Camera& camera, const std::string& image_id,
                                     int interior) {
  annotation::ImageAnnotation a;
  a.image_id = image_id;
  a.camera_id = camera.id;
  a.width = camera.intrinsics.width;
  a.height = camera.intrinsics.height;
  const double f = std::sqrt(camera.intrinsics.fx * camera.intrinsics.fy);
  const auto vertex = [&](annotation::VertexId id, const Vec3& p, double r) {
    const Vec2 px = project(camera, p);
    return annotation::Vertex{id, px.x(), px.y(), f * r / camera.to_camera(p).z(), {}};
  };
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    auto v = vertex(static_cast<annotation::VertexId>(i), tree.nodes[i], tree.radii[i]);
    v.keypoint = Tree::key(static_cast<int>(i));
    a.vertices.push_back(v);
  }
  annotation::VertexId next = static_cast<annotation::VertexId>(tree.nodes.size());
  for (std::size_t c = 1; c < tree.nodes.size(); ++c) {
    annotation::VertexId prev = tree.parent[c];
    for (int k = 1; k <= interior; ++k) {
      const double t = static_cast<double>(k) / (interior + 1);
      a.vertices.push_back(vertex(next, tree.edge_point(static_cast<int>(c), t), tree.edge_radius(static_cast<int>(c), t)));
      a.edges.emplace_back(prev, next);
      prev = next++;
    }
    a.edges.emplace_back(prev, static_cast<annotation::VertexId>(c));
  }
  return a;
}

annotation::ImageAnnotation restrict_to(const annotation::ImageAnnotation& ann, const Tree& tree,
                                        const std::vector<int>& children) {
  std::set<int> wanted(children.begin(), children.end());
  annotation::ImageAnnotation out = ann;
  out.edges.clear();
  std::set<annotation::VertexId> used;
  const auto n = static_cast<annotation::VertexId>(tree.nodes.size());
  // annotate() emits each edge as a chain of edges that ends at the child node.
  std::vector<std::pair<annotation::VertexId, annotation::VertexId>> chain;
  for (const auto& e : ann.edges) {
    chain.push_back(e);
    if (e.second < n) {
      if (wanted.count(static_cast<int>(e.second))) {
        for (const auto& ce : chain) {
          out.edges.push_back(ce);
          used.insert(ce.first);
          used.insert(ce.second);
        }
      }
      chain.clear();
    }
  }
  std::erase_if(out.vertices, [&](const annotation::Vertex& v) { return !used.count(v.id); });
  return out;
}

}  // namespace arbor::synthetic
