#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "arbor/treegeom.hpp"

namespace arbor::tree {

namespace {

Vec3 node_tangent(const Skeleton& sk, const std::vector<int>& parent_edge, const std::vector<std::vector<int>>& out,
                  int node) {
  const Vec3 prev = parent_edge[node] >= 0 ? sk.nodes[sk.edges[parent_edge[node]].first].position : sk.nodes[node].position;
  const Vec3 next = out[node].empty() ? sk.nodes[node].position : sk.nodes[sk.edges[out[node].front()].second].position;
  const Vec3 d = next - prev;
  return d.norm() > 0 ? d.normalized() : Vec3::UnitZ();
}

}  // namespace

ImageTexture texture_from_images(const Mesh& mesh, const Skeleton& sk,
                                 std::span<const annotation::ImageAnnotation> annotations,
                                 const multiview::CameraMap& cameras, const std::map<std::string, Rgb8>& images) {
  ImageTexture out;
  out.colors.assign(mesh.size(), Rgb{0, 0, 0});
  out.colored.assign(mesh.size(), 0);

  struct View {
    const Camera* camera;
    const Rgb8* image;
    const annotation::ImageAnnotation* ann;
  };
  std::vector<View> views;
  for (const auto& a : annotations) {
    const Camera* cam = multiview::usable_camera(cameras, a.camera_id);
    auto img = images.find(a.image_id);
    if (cam && img != images.end() && img->second.channels >= 3) views.push_back({cam, &img->second, &a});
  }

  // Image curves for every keypoint pair used by an anchor, per view.
  std::map<std::tuple<std::size_t, std::string, std::string>, std::optional<annotation::CurveGeometry>> curves;
  for (const auto& node : sk.nodes) {
    if (!node.anchor) continue;
    for (std::size_t v = 0; v < views.size(); ++v) {
      auto key = std::make_tuple(v, node.anchor->from, node.anchor->to);
      if (!curves.count(key)) curves[key] = annotation::keypoint_curve(*views[v].ann, node.anchor->from, node.anchor->to);
    }
  }

  const auto parent_edge = sk.parent_edge();
  const auto child_edges = sk.child_edges();
  const long n = static_cast<long>(mesh.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (long i = 0; i < n; ++i) {
    const int node = mesh.ring_node[i];
    if (node < 0 || !sk.nodes[node].anchor) continue;
    const Anchor& anchor = *sk.nodes[node].anchor;
    const Vec3& c = sk.nodes[node].position;
    const double r = sk.nodes[node].radius;
    const Vec3 t = node_tangent(sk, parent_edge, child_edges, node);
    const Vec3 w = mesh.positions[i] - c;
    double best_q = 0;
    for (std::size_t v = 0; v < views.size(); ++v) {
      const auto& curve = curves.at(std::make_tuple(v, anchor.from, anchor.to));
      if (!curve) continue;
      const Camera& cam = *views[v].camera;
      const double q = view_quality(mesh.positions[i], mesh.normals[i], cam.center());
      if (!(q > best_q)) continue;
      try {
        const Vec3 e = t.cross((c - cam.center()).normalized());
        if (e.norm() < 1e-12) continue;  // looking straight down the branch
        const Vec3 side = e.normalized();
        const double s = std::clamp(w.dot(side) / r, -1.0, 1.0);
        const auto sample = curve->at_fraction(anchor.fraction);
        Vec2 across(-sample.tangent.y(), sample.tangent.x());
        if ((project(cam, c + r * side) - project(cam, c)).dot(across) < 0) across = -across;
        const Vec2 px = sample.point + s * sample.thickness * across;
        const int x = static_cast<int>(std::lround(px.x())), y = static_cast<int>(std::lround(px.y()));
        const Rgb8& img = *views[v].image;
        if (!img.contains(x, y)) continue;
        out.colors[i] = {img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)};
        out.colored[i] = 1;
        best_q = q;
      } catch (const Error&) {
        continue;  // behind the camera
      }
    }
  }
  out.uncolored = static_cast<std::size_t>(std::count(out.colored.begin(), out.colored.end(), 0));
  return out;
}

}  // namespace arbor::tree
