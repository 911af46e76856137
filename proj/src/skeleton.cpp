#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <unordered_map>

#include "arbor/treegeom.hpp"

namespace arbor::tree {

void Skeleton::validate() const {
  const int n = static_cast<int>(nodes.size());
  if (n == 0) throw Error(Errc::InvalidTopology, "skeleton has no nodes");
  if (root < 0 || root >= n) throw Error(Errc::InvalidTopology, "root is not a node");
  std::vector<int> incoming(n, 0), children(n, 0);
  for (const auto& [p, c] : edges) {
    if (p < 0 || p >= n || c < 0 || c >= n || p == c) throw Error(Errc::InvalidTopology, "edge with invalid endpoints");
    ++incoming[c];
    ++children[p];
  }
  for (int i = 0; i < n; ++i) {
    if (!(nodes[i].radius > 0)) throw Error(Errc::InvalidTopology, "node " + std::to_string(i) + " has no positive radius");
    if (children[i] > 2) throw Error(Errc::InvalidTopology, "node " + std::to_string(i) + " has more than two children");
    if (incoming[i] != (i == root ? 0 : 1)) {
      throw Error(Errc::InvalidTopology, "node " + std::to_string(i) + " has " + std::to_string(incoming[i]) + " parents");
    }
  }
  const auto out = child_edges();
  std::vector<char> seen(n, 0);
  std::vector<int> stack{root};
  int reached = 0;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    if (seen[v]) throw Error(Errc::CyclicInput, "skeleton has a cycle");
    seen[v] = 1;
    ++reached;
    for (int e : out[v]) stack.push_back(edges[e].second);
  }
  if (reached != n) throw Error(Errc::InvalidTopology, "skeleton is not connected to its root");
}

std::vector<std::vector<int>> Skeleton::child_edges() const {
  std::vector<std::vector<int>> out(nodes.size());
  for (std::size_t e = 0; e < edges.size(); ++e) out[edges[e].first].push_back(static_cast<int>(e));
  return out;
}

std::vector<int> Skeleton::parent_edge() const {
  std::vector<int> out(nodes.size(), -1);
  for (std::size_t e = 0; e < edges.size(); ++e) out[edges[e].second] = static_cast<int>(e);
  return out;
}

Vec3 bspline_point(std::span<const Vec3> P, double u) {
  const int n = static_cast<int>(P.size());
  if (n == 0) throw Error(Errc::InvalidParams, "spline without control points");
  if (n == 1) return P[0];
  const int p = std::min(3, n - 1);
  u = std::clamp(u, 0.0, 1.0);
  if (u == 1.0) return P[n - 1];
  // Clamped uniform knots: p + 1 zeros, n - p - 1 interior knots, p + 1 ones.
  const int spans = n - p;
  std::vector<double> knot(n + p + 1);
  for (int i = 0; i < static_cast<int>(knot.size()); ++i)
    knot[i] = std::clamp(static_cast<double>(i - p) / spans, 0.0, 1.0);
  const int k = std::min(p + static_cast<int>(std::floor(u * spans)), n - 1);
  std::vector<Vec3> d(P.begin() + (k - p), P.begin() + k + 1);
  for (int r = 1; r <= p; ++r) {
    for (int j = p; j >= r; --j) {
      const int i = j + k - p;
      const double denom = knot[i + p - r + 1] - knot[i];
      const double a = denom > 0 ? (u - knot[i]) / denom : 0.0;
      d[j] = (1 - a) * d[j - 1] + a * d[j];
    }
  }
  return d[p];
}

namespace {

std::vector<double> cumulative_fractions(std::span<const Vec3> pts) {
  std::vector<double> c(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) c[i] = c[i - 1] + (pts[i] - pts[i - 1]).norm();
  const double total = c.empty() ? 0 : c.back();
  for (std::size_t i = 0; i < c.size(); ++i)
    c[i] = total > 0 ? c[i] / total : (pts.size() > 1 ? static_cast<double>(i) / (pts.size() - 1) : 0.0);
  return c;
}

double interpolate(std::span<const double> at, std::span<const double> values, double s) {
  auto it = std::upper_bound(at.begin(), at.end(), s);
  if (it == at.begin()) return values.front();
  if (it == at.end()) return values.back();
  const auto i = static_cast<std::size_t>(it - at.begin()) - 1;
  const double span = at[i + 1] - at[i];
  return span > 0 ? std::lerp(values[i], values[i + 1], (s - at[i]) / span) : values[i];
}

std::optional<Anchor> anchor_at(std::span<const double> c, const std::vector<std::optional<std::string>>& keys, double s) {
  std::vector<std::size_t> k;
  for (std::size_t i = 0; i < keys.size(); ++i)
    if (keys[i]) k.push_back(i);
  for (std::size_t j = 0; j + 1 < k.size(); ++j) {
    const double a = c[k[j]], b = c[k[j + 1]];
    if (s >= a && (s < b || (j + 2 == k.size() && s <= b))) {
      return Anchor{*keys[k[j]], *keys[k[j + 1]], b > a ? std::clamp((s - a) / (b - a), 0.0, 1.0) : 0.0};
    }
  }
  return std::nullopt;
}

}  // namespace

Skeleton skeleton_from_branches(const multiview::Branch3D& branch, int samples_per_segment,
                                std::optional<multiview::VertexId> root) {
  using multiview::VertexId;
  if (samples_per_segment < 1) throw Error(Errc::InvalidParams, "need at least one sample per segment");
  if (branch.vertices.empty()) throw Error(Errc::InvalidTopology, "branch has no vertices");
  const VertexId r = root.value_or(branch.roots.empty() ? branch.vertices.front().id : branch.roots.front());
  if (!branch.find(r)) throw Error(Errc::UnknownId, "root vertex " + std::to_string(r) + " missing");

  std::unordered_map<VertexId, std::vector<VertexId>> adj;
  std::set<std::pair<VertexId, VertexId>> seen_edges;
  for (const auto& [a, b] : branch.edges) {
    if (a == b || !seen_edges.insert(std::minmax(a, b)).second) continue;
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::unordered_map<VertexId, std::vector<VertexId>> children;
  std::unordered_map<VertexId, VertexId> parent{{r, r}};
  std::queue<VertexId> q;
  q.push(r);
  while (!q.empty()) {
    const VertexId v = q.front();
    q.pop();
    auto& nb = adj[v];
    std::sort(nb.begin(), nb.end());
    for (VertexId c : nb) {
      if (c == parent[v]) continue;
      if (parent.count(c)) throw Error(Errc::CyclicInput, "branch graph has a cycle through vertex " + std::to_string(c));
      parent[c] = v;
      children[v].push_back(c);
      q.push(c);
    }
    if (children[v].size() > 2) {
      throw Error(Errc::InvalidTopology, "vertex " + std::to_string(v) + " has more than two children");
    }
  }

  Skeleton sk;
  std::unordered_map<VertexId, int> node_of;
  const auto add_node = [&](const Vec3& p, double radius, std::optional<Anchor> a) {
    sk.nodes.push_back({p, radius, std::move(a)});
    return static_cast<int>(sk.nodes.size()) - 1;
  };
  const auto* rv = branch.find(r);
  node_of[r] = add_node(rv->position, rv->thickness, std::nullopt);
  sk.root = 0;

  std::vector<std::pair<VertexId, VertexId>> starts;
  for (VertexId c : children[r]) starts.emplace_back(r, c);
  for (std::size_t si = 0; si < starts.size(); ++si) {
    std::vector<VertexId> chain{starts[si].first, starts[si].second};
    while (children[chain.back()].size() == 1) chain.push_back(children[chain.back()].front());
    for (VertexId c : children[chain.back()]) starts.emplace_back(chain.back(), c);

    std::vector<Vec3> P;
    std::vector<double> radii;
    std::vector<std::optional<std::string>> keys;
    for (VertexId id : chain) {
      const auto* v = branch.find(id);
      P.push_back(v->position);
      radii.push_back(v->thickness);
      keys.push_back(v->keypoint);
    }
    const auto c = cumulative_fractions(P);
    const int m = static_cast<int>(P.size() - 1) * samples_per_segment + 1;
    std::vector<Vec3> Q(m);
    for (int j = 0; j < m; ++j) Q[j] = bspline_point(P, static_cast<double>(j) / (m - 1));
    const auto s = cumulative_fractions(Q);

    const int first = node_of.at(chain.front());
    if (!sk.nodes[first].anchor) sk.nodes[first].anchor = anchor_at(c, keys, 0.0);
    int prev = first;
    for (int j = 1; j < m; ++j) {
      const int node = add_node(Q[j], interpolate(c, radii, s[j]), anchor_at(c, keys, s[j]));
      sk.edges.emplace_back(prev, node);
      prev = node;
    }
    node_of[chain.back()] = prev;
  }
  sk.validate();
  return sk;
}

}  // namespace arbor::tree
