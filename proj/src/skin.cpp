#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "arbor/treegeom.hpp"

namespace arbor::tree {

std::vector<std::vector<int>> vertex_adjacency(const Mesh& mesh) {
  std::vector<std::vector<int>> adj(mesh.size());
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      adj[t[k]].push_back(t[(k + 1) % 3]);
      adj[t[(k + 1) % 3]].push_back(t[k]);
    }
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return adj;
}

std::vector<Frame> rotation_minimizing_frames(std::span<const Vec3> x) {
  const std::size_t n = x.size();
  std::vector<Frame> f(n);
  if (n == 0) return f;
  if (n == 1) {
    f[0] = {Vec3::UnitZ(), Vec3::UnitX(), Vec3::UnitY()};
    return f;
  }
  std::vector<Vec3> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 d = x[std::min(i + 1, n - 1)] - x[i == 0 ? 0 : i - 1];
    t[i] = d.norm() > 0 ? d.normalized() : (i > 0 ? t[i - 1] : Vec3::UnitZ());
  }
  Vec3 r = Vec3::UnitZ().cross(t[0]);
  if (r.norm() < 1e-9) r = Vec3::UnitX().cross(t[0]);
  r.normalize();
  f[0] = {t[0], r, t[0].cross(r)};
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const Vec3 v1 = x[i + 1] - x[i];
    const double c1 = v1.squaredNorm();
    Vec3 rl = r, tl = t[i];
    if (c1 > 0) {
      rl = r - (2 / c1) * v1.dot(r) * v1;
      tl = t[i] - (2 / c1) * v1.dot(t[i]) * v1;
    }
    const Vec3 v2 = t[i + 1] - tl;
    const double c2 = v2.squaredNorm();
    r = c2 > 1e-30 ? rl - (2 / c2) * v2.dot(rl) * v2 : rl;
    // Remove drift so the frame stays orthonormal.
    r = (r - r.dot(t[i + 1]) * t[i + 1]).normalized();
    f[i + 1] = {t[i + 1], r, t[i + 1].cross(r)};
  }
  return f;
}

namespace {

struct Chain {
  std::vector<int> nodes;
  std::vector<int> edges;
  bool side = false;  ///< starts at a fork on the parent's surface
};

std::vector<Chain> tube_chains(const Skeleton& sk) {
  const auto out = sk.child_edges();
  const auto main_edge = [&](int node) {
    const auto& es = out[node];
    int best = es.front();
    for (int e : es)
      if (sk.nodes[sk.edges[e].second].radius > sk.nodes[sk.edges[best].second].radius) best = e;
    return best;
  };
  std::vector<Chain> chains;
  std::vector<std::pair<int, bool>> starts;  // (edge, side)
  if (!out[sk.root].empty()) {
    const int m = main_edge(sk.root);
    starts.emplace_back(m, false);
    for (int e : out[sk.root])
      if (e != m) starts.emplace_back(e, true);
  }
  for (std::size_t s = 0; s < starts.size(); ++s) {
    Chain c;
    c.side = starts[s].second;
    int e = starts[s].first;
    c.nodes.push_back(sk.edges[e].first);
    while (true) {
      c.edges.push_back(e);
      const int node = sk.edges[e].second;
      c.nodes.push_back(node);
      if (out[node].empty()) break;
      e = main_edge(node);
      for (int o : out[node])
        if (o != e) starts.emplace_back(o, true);
    }
    chains.push_back(std::move(c));
  }
  return chains;
}

}  // namespace

Mesh skin_skeleton(const Skeleton& sk, const SkinOptions& opt) {
  sk.validate();
  if (opt.ring_sides < 3) throw Error(Errc::InvalidParams, "rings need at least three sides");
  const int S = opt.ring_sides;
  Mesh mesh;
  const auto add_vertex = [&](const Vec3& p, const Vec3& n, std::array<BoneBinding, 2> b, int node) {
    mesh.positions.push_back(p);
    mesh.normals.push_back(n);
    mesh.colors.push_back({200, 200, 200});
    mesh.bindings.push_back(b);
    mesh.ring_node.push_back(node);
    return static_cast<int>(mesh.positions.size()) - 1;
  };

  std::map<int, std::vector<int>> ring_at_node;                // rings of chains passing through a node
  std::vector<std::pair<int, std::vector<int>>> pending_welds;  // (fork node, side chain first ring)

  for (const Chain& c : tube_chains(sk)) {
    std::vector<Vec3> pts;
    for (int n : c.nodes) pts.push_back(sk.nodes[n].position);
    if (c.side) {
      const Vec3 d = pts[1] - pts[0];
      const double shift = std::min(sk.nodes[c.nodes[0]].radius, 0.5 * d.norm());
      if (d.norm() > 0) pts[0] += shift * d.normalized();
    }
    const auto frames = rotation_minimizing_frames(pts);
    std::vector<std::vector<int>> rings;
    for (std::size_t k = 0; k < c.nodes.size(); ++k) {
      const int node = c.nodes[k];
      const double r = c.side && k == 0 ? sk.nodes[c.nodes[1]].radius : sk.nodes[node].radius;
      std::array<BoneBinding, 2> b{};
      if (k == 0) b[0] = {c.edges.front(), 1.0};
      else if (k + 1 == c.nodes.size()) b[0] = {c.edges.back(), 1.0};
      else b = {BoneBinding{c.edges[k - 1], 0.5}, BoneBinding{c.edges[k], 0.5}};
      std::vector<int> ring;
      for (int j = 0; j < S; ++j) {
        const double phi = 2 * std::numbers::pi * j / S;
        const Vec3 radial = std::cos(phi) * frames[k].normal + std::sin(phi) * frames[k].binormal;
        ring.push_back(add_vertex(pts[k] + r * radial, radial, b, node));
      }
      if (!(c.side && k == 0)) ring_at_node.emplace(node, ring);
      rings.push_back(std::move(ring));
    }
    for (std::size_t k = 0; k + 1 < rings.size(); ++k) {
      for (int j = 0; j < S; ++j) {
        const int a = rings[k][j], b = rings[k][(j + 1) % S];
        const int cc = rings[k + 1][j], d = rings[k + 1][(j + 1) % S];
        mesh.triangles.push_back({a, b, d});
        mesh.triangles.push_back({a, d, cc});
      }
      if (k == 0 && c.side) {
        pending_welds.emplace_back(c.nodes[0], rings[0]);
      }
    }
    if (!c.side) {
      const int center = add_vertex(pts.front(), -frames.front().tangent, {BoneBinding{c.edges.front(), 1.0}, {}},
                                    c.nodes.front());
      for (int j = 0; j < S; ++j) mesh.triangles.push_back({center, rings.front()[(j + 1) % S], rings.front()[j]});
    }
    const int tip = add_vertex(pts.back(), frames.back().tangent, {BoneBinding{c.edges.back(), 1.0}, {}}, c.nodes.back());
    for (int j = 0; j < S; ++j) mesh.triangles.push_back({tip, rings.back()[j], rings.back()[(j + 1) % S]});
  }

  if (!opt.weld || pending_welds.empty()) return mesh;

  std::vector<int> remap(mesh.size());
  for (std::size_t i = 0; i < remap.size(); ++i) remap[i] = static_cast<int>(i);
  for (std::size_t w = 0; w < pending_welds.size(); ++w) {
    const auto& [fork, ring] = pending_welds[w];
    const auto& parent_ring = ring_at_node.at(fork);
    for (int v : ring) {
      int best = parent_ring.front();
      for (int p : parent_ring)
        if ((mesh.positions[p] - mesh.positions[v]).squaredNorm() < (mesh.positions[best] - mesh.positions[v]).squaredNorm())
          best = p;
      remap[v] = best;
    }
  }
  std::vector<std::array<int, 3>> tris;
  for (auto t : mesh.triangles) {
    for (int& v : t) v = remap[v];
    if (t[0] != t[1] && t[1] != t[2] && t[0] != t[2]) tris.push_back(t);
  }
  // Compact away the welded vertices.
  std::vector<int> index(mesh.size(), -1);
  Mesh out;
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    if (remap[i] != static_cast<int>(i)) continue;
    index[i] = static_cast<int>(out.positions.size());
    out.positions.push_back(mesh.positions[i]);
    out.normals.push_back(mesh.normals[i]);
    out.colors.push_back(mesh.colors[i]);
    out.bindings.push_back(mesh.bindings[i]);
    out.ring_node.push_back(mesh.ring_node[i]);
  }
  for (auto t : tris) {
    for (int& v : t) v = index[v];
    out.triangles.push_back(t);
  }
  return out;
}

ManifoldAudit audit_manifold(const Mesh& mesh) {
  std::map<std::pair<int, int>, int> directed;
  for (const auto& t : mesh.triangles)
    for (int k = 0; k < 3; ++k) ++directed[{t[k], t[(k + 1) % 3]}];
  std::map<std::pair<int, int>, int> undirected;
  for (const auto& [e, n] : directed) undirected[std::minmax(e.first, e.second)] += n;
  ManifoldAudit a;
  for (const auto& [e, n] : undirected) {
    if (n == 1) ++a.boundary_edges;
    else if (n == 2) {
      ++a.interior_edges;
      const auto fwd = directed.find(e), bwd = directed.find({e.second, e.first});
      if (fwd == directed.end() || bwd == directed.end() || fwd->second != 1 || bwd->second != 1)
        a.consistently_oriented = false;
    } else {
      ++a.singular_edges;
    }
  }
  std::vector<char> used(mesh.size(), 0);
  for (const auto& t : mesh.triangles)
    for (int v : t) used[v] = 1;
  a.vertices = static_cast<std::size_t>(std::count(used.begin(), used.end(), 1));
  a.edges = undirected.size();
  a.faces = mesh.triangles.size();
  return a;
}

}  // namespace arbor::tree
