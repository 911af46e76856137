#include "arbor/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

namespace arbor::annotation {

const Vertex* ImageAnnotation::find(VertexId id) const {
  for (const auto& v : vertices)
    if (v.id == id) return &v;
  return nullptr;
}

const Vertex* ImageAnnotation::find_keypoint(const std::string& key) const {
  for (const auto& v : vertices)
    if (v.keypoint && *v.keypoint == key) return &v;
  return nullptr;
}

std::string_view to_string(Rule rule) noexcept {
  switch (rule) {
    case Rule::DanglingEdge: return "DanglingEdge";
    case Rule::SelfLoop: return "SelfLoop";
    case Rule::DuplicateEdge: return "DuplicateEdge";
    case Rule::DegreeViolation: return "DegreeViolation";
    case Rule::DuplicateKeypoint: return "DuplicateKeypoint";
    case Rule::DuplicateVertexId: return "DuplicateVertexId";
    case Rule::NonPositiveThickness: return "NonPositiveThickness";
    case Rule::OutOfBounds: return "OutOfBounds";
  }
  return "Unknown";
}

std::vector<Violation> validate(const ImageAnnotation& ann) {
  std::vector<Violation> out;
  std::map<VertexId, int> degree;
  std::set<std::string> keys;
  for (const auto& v : ann.vertices) {
    if (!degree.emplace(v.id, 0).second) {
      out.push_back({Rule::DuplicateVertexId, v.id, {}, "vertex id " + std::to_string(v.id) + " repeats"});
    }
    if (!(v.thickness > 0)) {
      out.push_back({Rule::NonPositiveThickness, v.id, {}, "thickness must be positive"});
    }
    if (!(v.x >= 0 && v.y >= 0 && v.x <= ann.width - 1 && v.y <= ann.height - 1)) {
      out.push_back({Rule::OutOfBounds, v.id, {}, "vertex lies outside the image"});
    }
    if (v.keypoint && !keys.insert(*v.keypoint).second) {
      out.push_back({Rule::DuplicateKeypoint, v.id, {}, "keypoint '" + *v.keypoint + "' used twice"});
    }
  }
  std::set<std::pair<VertexId, VertexId>> seen;
  for (const auto& e : ann.edges) {
    if (!degree.count(e.first) || !degree.count(e.second)) {
      out.push_back({Rule::DanglingEdge, {}, e, "edge references a missing vertex"});
      continue;
    }
    if (e.first == e.second) {
      out.push_back({Rule::SelfLoop, e.first, e, "edge joins a vertex to itself"});
      continue;
    }
    const auto key = std::minmax(e.first, e.second);
    if (!seen.insert(key).second) {
      out.push_back({Rule::DuplicateEdge, {}, e, "edge appears more than once"});
      continue;
    }
    ++degree[e.first];
    ++degree[e.second];
  }
  for (const auto& [id, d] : degree) {
    if (d < 1 || d > 3) {
      out.push_back({Rule::DegreeViolation, id, {}, "vertex degree " + std::to_string(d) + " not in {1,2,3}"});
    }
  }
  return out;
}

void rasterize_edge(Gray8& mask, const Vertex& a, const Vertex& b) {
  const Vec2 pa = a.pos(), pb = b.pos();
  const Vec2 ab = pb - pa;
  const double len2 = ab.squaredNorm();
  const double rmax = std::max(a.thickness, b.thickness);
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(pa.x(), pb.x()) - rmax)));
  const int x1 = std::min(mask.width - 1, static_cast<int>(std::ceil(std::max(pa.x(), pb.x()) + rmax)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(pa.y(), pb.y()) - rmax)));
  const int y1 = std::min(mask.height - 1, static_cast<int>(std::ceil(std::max(pa.y(), pb.y()) + rmax)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Vec2 p(x, y);
      const double t = len2 > 0 ? std::clamp((p - pa).dot(ab) / len2, 0.0, 1.0) : 0.0;
      const double r = std::lerp(a.thickness, b.thickness, t);
      if ((p - (pa + t * ab)).norm() <= r) mask.at(x, y) = 1;
    }
  }
}

Gray8 rasterize_mask(const ImageAnnotation& ann) {
  if (!validate(ann).empty()) throw Error(Errc::InvalidAnnotation, "annotation " + ann.image_id + " is invalid");
  Gray8 mask(ann.width, ann.height, 1, 0);
  for (const auto& [ia, ib] : ann.edges) rasterize_edge(mask, *ann.find(ia), *ann.find(ib));
  return mask;
}

std::vector<Curve> extract_curves(const ImageAnnotation& ann) {
  std::unordered_map<VertexId, std::vector<VertexId>> adj;
  for (const auto& v : ann.vertices) adj[v.id];
  for (const auto& [a, b] : ann.edges) {
    if (!adj.count(a) || !adj.count(b) || a == b) continue;
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::unordered_map<VertexId, const Vertex*> by_id;
  for (const auto& v : ann.vertices) by_id[v.id] = &v;
  const auto is_node = [&](VertexId id) { return adj[id].size() != 2 || by_id[id]->keypoint.has_value(); };

  std::vector<Curve> curves;
  std::set<std::pair<VertexId, VertexId>> used;
  for (const auto& v : ann.vertices) {
    if (!is_node(v.id)) continue;
    for (VertexId next : adj[v.id]) {
      if (used.count({v.id, next})) continue;
      Curve c{{v.id}};
      VertexId prev = v.id, cur = next;
      used.insert({prev, cur});
      while (true) {
        c.vertices.push_back(cur);
        if (is_node(cur)) break;
        const auto& nb = adj[cur];
        const VertexId nxt = nb[0] == prev ? nb[1] : nb[0];
        used.insert({cur, nxt});
        prev = cur;
        cur = nxt;
      }
      used.insert({c.vertices.back(), c.vertices[c.vertices.size() - 2]});
      curves.push_back(std::move(c));
    }
  }
  return curves;
}

double CurveGeometry::length() const {
  double s = 0;
  for (std::size_t i = 1; i < points.size(); ++i) s += (points[i] - points[i - 1]).norm();
  return s;
}

CurveGeometry::Sample CurveGeometry::at_fraction(double f) const {
  if (points.empty()) throw Error(Errc::InvalidParams, "empty curve");
  if (points.size() == 1) return {points[0], thickness[0], Vec2::UnitX()};
  const double target = std::clamp(f, 0.0, 1.0) * length();
  double acc = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double seg = (points[i] - points[i - 1]).norm();
    if (acc + seg >= target || i + 1 == points.size()) {
      const double t = seg > 0 ? std::clamp((target - acc) / seg, 0.0, 1.0) : 0.0;
      const Vec2 tangent = seg > 0 ? Vec2((points[i] - points[i - 1]) / seg) : Vec2::UnitX();
      return {points[i - 1] + t * (points[i] - points[i - 1]), (1 - t) * thickness[i - 1] + t * thickness[i],
              tangent};
    }
    acc += seg;
  }
  return {points.back(), thickness.back(), Vec2::UnitX()};
}

CurveGeometry curve_geometry(const ImageAnnotation& ann, const Curve& curve) {
  CurveGeometry g;
  for (VertexId id : curve.vertices) {
    const Vertex* v = ann.find(id);
    if (!v) throw Error(Errc::UnknownId, "curve vertex " + std::to_string(id) + " missing");
    g.points.push_back(v->pos());
    g.thickness.push_back(v->thickness);
  }
  return g;
}

std::optional<CurveGeometry> keypoint_curve(const ImageAnnotation& ann, const std::string& from,
                                            const std::string& to) {
  const Vertex* a = ann.find_keypoint(from);
  const Vertex* b = ann.find_keypoint(to);
  if (!a || !b) return std::nullopt;
  for (const auto& c : extract_curves(ann)) {
    if (c.front() == a->id && c.back() == b->id) return curve_geometry(ann, c);
    if (c.front() == b->id && c.back() == a->id) {
      Curve r = c;
      std::reverse(r.vertices.begin(), r.vertices.end());
      return curve_geometry(ann, r);
    }
  }
  return std::nullopt;
}

Vec2 closest_point_on_line(const Vec3& l, const Vec2& p) {
  const double dist = l.x() * p.x() + l.y() * p.y() + l.z();
  return p - dist * Vec2(l.x(), l.y());
}

Vec2 slide_along_line(const Vec3& l, const Vec2& p, double s) {
  return closest_point_on_line(l, p) + s * Vec2(-l.y(), l.x());
}

EpipolarDraft epipolar_transfer(const ImageAnnotation& ann, const Camera& cam1, const Camera& cam2,
                                const std::string& target_image_id) {
  if (!cam1.aligned || !cam2.aligned) throw Error(Errc::NotAligned, "stereo transfer needs aligned cameras");
  const Mat3 F = fundamental_matrix(cam1, cam2);
  EpipolarDraft draft;
  draft.annotation = ann;
  draft.annotation.camera_id = cam2.id;
  draft.annotation.image_id = target_image_id.empty() ? ann.image_id : target_image_id;
  draft.annotation.width = cam2.intrinsics.width;
  draft.annotation.height = cam2.intrinsics.height;
  draft.lines.reserve(ann.vertices.size());
  for (auto& v : draft.annotation.vertices) {
    const Vec3 line = epipolar_line(F, v.pos());
    const Vec2 q = closest_point_on_line(line, v.pos());
    v.x = q.x();
    v.y = q.y();
    draft.lines.push_back(line);
  }
  return draft;
}

}  // namespace arbor::annotation
