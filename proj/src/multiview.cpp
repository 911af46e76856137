#include "arbor/multiview.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <set>
#include <unordered_map>

namespace arbor::multiview {

BranchVertex* Branch3D::find(VertexId id) {
  auto it = std::find_if(vertices.begin(), vertices.end(), [&](const BranchVertex& v) { return v.id == id; });
  return it == vertices.end() ? nullptr : &*it;
}

const BranchVertex* Branch3D::find(VertexId id) const { return const_cast<Branch3D*>(this)->find(id); }

VertexId Branch3D::next_id() const {
  VertexId m = -1;
  for (const auto& v : vertices) m = std::max(m, v.id);
  return m + 1;
}

void Report::add(Kind kind, std::string subject, std::string message) {
  entries.push_back({kind, std::move(subject), std::move(message)});
}

std::size_t Report::count(Kind kind) const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [&](const Entry& e) { return e.kind == kind; }));
}

bool Report::mentions(const std::string& subject) const {
  return std::any_of(entries.begin(), entries.end(), [&](const Entry& e) { return e.subject == subject; });
}

std::string_view to_string(Report::Kind kind) noexcept {
  switch (kind) {
    case Report::Kind::Skip: return "skip";
    case Report::Kind::Fallback: return "fallback";
    case Report::Kind::Warning: return "warning";
    case Report::Kind::Failure: return "failure";
  }
  return "unknown";
}

namespace {

void note(Report* r, Report::Kind kind, std::string subject, std::string message) {
  if (r) r->add(kind, std::move(subject), std::move(message));
}

std::string edge_name(const std::string& a, const std::string& b) { return a + "-" + b; }

}  // namespace

Triangulation triangulate_point(std::span<const Ray> rays) {
  if (rays.size() < 2) throw Error(Errc::DegenerateRays, "triangulation needs at least two rays");
  Mat3 A = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (const Ray& r : rays) {
    const double n = r.direction.norm();
    if (!(n > 0)) throw Error(Errc::DegenerateRays, "ray with zero direction");
    const Vec3 d = r.direction / n;
    const Mat3 P = Mat3::Identity() - d * d.transpose();
    A += P;
    b += P * r.origin;
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(A);
  const auto& ev = eig.eigenvalues();
  if (!(ev(0) > kRayConditionLimit * ev(2))) throw Error(Errc::DegenerateRays, "rays are (nearly) parallel");
  Triangulation t;
  t.point = eig.eigenvectors() * ((eig.eigenvectors().transpose() * b).array() / ev.array()).matrix();
  double ss = 0;
  for (const Ray& r : rays) {
    const Vec3 d = r.direction.normalized();
    const Vec3 v = t.point - r.origin;
    ss += (v - v.dot(d) * d).squaredNorm();
  }
  t.residual = std::sqrt(ss / static_cast<double>(rays.size()));
  return t;
}

const Camera* usable_camera(const CameraMap& cameras, const std::string& id) {
  auto it = cameras.find(id);
  return it != cameras.end() && it->second.aligned ? &it->second : nullptr;
}

double viewpoint_spread_deg(const Vec3& point, std::span<const Observation> observations, const CameraMap& cameras) {
  std::vector<Vec3> dirs;
  for (const auto& o : observations)
    if (const Camera* c = usable_camera(cameras, o.camera_id)) dirs.push_back((point - c->center()).normalized());
  double best = 0;
  for (std::size_t i = 0; i < dirs.size(); ++i)
    for (std::size_t j = i + 1; j < dirs.size(); ++j)
      best = std::max(best, std::acos(std::clamp(dirs[i].dot(dirs[j]), -1.0, 1.0)));
  return best * 180.0 / std::numbers::pi;
}

double estimate_thickness(const Keypoint3D& kp, const CameraMap& cameras) {
  double sum = 0;
  int n = 0;
  for (const auto& o : kp.observations) {
    auto it = cameras.find(o.camera_id);
    if (it == cameras.end()) continue;
    const Camera& cam = it->second;
    const Intrinsics& K = cam.intrinsics;
    const double f = std::sqrt(K.fx * K.fy);
    const Ray ray = pixel_ray(cam, o.pixel);
    // Image plane point in pixel units: normalized coordinates scaled by f.
    const Vec3 xn((o.pixel.x() - K.cx) / K.fx, (o.pixel.y() - K.cy) / K.fy, 1.0);
    const double to_image = f * xn.norm();
    const Vec3 xw = parallel_plane_intersect(cam, ray, kp.position);
    sum += (xw - ray.origin).norm() / to_image * o.radius_px;
    ++n;
  }
  if (n == 0) throw Error(Errc::NoObservations, "keypoint " + kp.id + " has no usable observations");
  return sum / n;
}

std::vector<Keypoint3D> triangulate_keypoints(std::span<const annotation::ImageAnnotation> annotations,
                                              const CameraMap& cameras, Report* report) {
  std::map<std::string, std::vector<Observation>> by_key;
  std::map<std::string, std::size_t> seen_anywhere;
  for (const auto& ann : annotations) {
    const Camera* cam = usable_camera(cameras, ann.camera_id);
    if (!cam && !cameras.count(ann.camera_id)) {
      note(report, Report::Kind::Skip, ann.image_id, "camera '" + ann.camera_id + "' is unknown");
    }
    for (const auto& v : ann.vertices) {
      if (!v.keypoint) continue;
      ++seen_anywhere[*v.keypoint];
      if (cam) by_key[*v.keypoint].push_back({ann.camera_id, ann.image_id, v.pos(), v.thickness});
    }
  }

  std::vector<Keypoint3D> out;
  for (const auto& [key, total] : seen_anywhere) {
    auto it = by_key.find(key);
    const std::size_t usable = it == by_key.end() ? 0 : it->second.size();
    if (usable < 2) {
      note(report, Report::Kind::Skip, key,
           "labeled in " + std::to_string(usable) + " aligned image(s) of " + std::to_string(total));
      continue;
    }
    Keypoint3D kp;
    kp.id = key;
    kp.observations = it->second;
    out.push_back(std::move(kp));
  }

  std::vector<char> ok(out.size(), 1);
  std::vector<std::string> failure(out.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& kp = out[i];
    std::vector<Ray> rays;
    for (const auto& o : kp.observations) rays.push_back(pixel_ray(cameras.at(o.camera_id), o.pixel));
    try {
      const auto t = triangulate_point(rays);
      kp.position = t.point;
      kp.residual = t.residual;
      kp.radius = estimate_thickness(kp, cameras);
    } catch (const Error& e) {
      ok[i] = 0;
      failure[i] = e.what();
    }
  }

  std::vector<Keypoint3D> kept;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!ok[i]) {
      note(report, Report::Kind::Skip, out[i].id, failure[i]);
      continue;
    }
    const double spread = viewpoint_spread_deg(out[i].position, out[i].observations, cameras);
    if (spread < kMinViewpointSpreadDeg) {
      note(report, Report::Kind::Warning, out[i].id,
           "observing cameras span only " + std::to_string(spread) + " degrees of viewpoint");
    }
    kept.push_back(std::move(out[i]));
  }
  return kept;
}

Branch3D transfer_topology(std::span<const annotation::ImageAnnotation> annotations,
                           std::span<const Keypoint3D> keypoints, Report* report) {
  Branch3D b;
  std::unordered_map<std::string, VertexId> ids;
  for (const auto& kp : keypoints) {
    const VertexId id = static_cast<VertexId>(b.vertices.size());
    ids.emplace(kp.id, id);
    b.vertices.push_back({id, kp.position, kp.radius, kp.id, kp.observations});
  }
  std::set<std::pair<VertexId, VertexId>> edges;
  for (const auto& ann : annotations) {
    for (const auto& c : annotation::extract_curves(ann)) {
      const auto* a = ann.find(c.front());
      const auto* z = ann.find(c.back());
      if (!a || !z || !a->keypoint || !z->keypoint || *a->keypoint == *z->keypoint) continue;
      auto ia = ids.find(*a->keypoint), iz = ids.find(*z->keypoint);
      if (ia == ids.end() || iz == ids.end()) continue;
      edges.insert(std::minmax(ia->second, iz->second));
    }
  }
  b.edges.assign(edges.begin(), edges.end());
  std::vector<int> degree(b.vertices.size(), 0);
  for (const auto& [u, v] : b.edges) ++degree[u], ++degree[v];
  for (std::size_t i = 0; i < b.vertices.size(); ++i)
    if (degree[i] == 0) note(report, Report::Kind::Warning, *b.vertices[i].keypoint, "keypoint has no curve to another keypoint");
  return b;
}

void choose_roots(Branch3D& branch, const Vec3& up) {
  std::unordered_map<VertexId, std::size_t> index;
  for (std::size_t i = 0; i < branch.vertices.size(); ++i) index.emplace(branch.vertices[i].id, i);
  std::vector<std::vector<std::size_t>> adj(branch.vertices.size());
  for (const auto& [a, b] : branch.edges) {
    auto ia = index.find(a), ib = index.find(b);
    if (ia == index.end() || ib == index.end()) throw Error(Errc::UnknownId, "edge references a missing vertex");
    adj[ia->second].push_back(ib->second);
    adj[ib->second].push_back(ia->second);
  }
  std::vector<char> seen(branch.vertices.size(), 0);
  branch.roots.clear();
  for (std::size_t s = 0; s < branch.vertices.size(); ++s) {
    if (seen[s]) continue;
    std::size_t best = s;
    std::vector<std::size_t> stack{s};
    seen[s] = 1;
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      const auto& bv = branch.vertices[v];
      const auto& bb = branch.vertices[best];
      const double hv = bv.position.dot(up), hb = bb.position.dot(up);
      if (hv < hb || (hv == hb && bv.id < bb.id)) best = v;
      for (std::size_t u : adj[v])
        if (!seen[u]) seen[u] = 1, stack.push_back(u);
    }
    branch.roots.push_back(branch.vertices[best].id);
  }
  std::sort(branch.roots.begin(), branch.roots.end());
}

Branch3D subdivide_curves(const Branch3D& branch, std::span<const annotation::ImageAnnotation> annotations,
                          const CameraMap& cameras, int n_sub, Report* report) {
  if (n_sub < 0) throw Error(Errc::InvalidParams, "subdivision count must be non-negative");
  if (n_sub == 0) return branch;
  Branch3D out;
  out.vertices = branch.vertices;
  out.roots = branch.roots;
  VertexId next = branch.next_id();

  for (const auto& [ia, ib] : branch.edges) {
    const BranchVertex* a = branch.find(ia);
    const BranchVertex* b = branch.find(ib);
    if (!a || !b) throw Error(Errc::UnknownId, "edge references a missing vertex");
    std::vector<std::pair<const Camera*, annotation::CurveGeometry>> curves;
    std::vector<std::string> images;
    if (a->keypoint && b->keypoint) {
      for (const auto& ann : annotations) {
        const Camera* cam = usable_camera(cameras, ann.camera_id);
        if (!cam) continue;
        if (auto g = annotation::keypoint_curve(ann, *a->keypoint, *b->keypoint)) {
          curves.emplace_back(cam, std::move(*g));
          images.push_back(ann.image_id);
        }
      }
    }
    const std::string name = edge_name(a->keypoint.value_or(std::to_string(ia)), b->keypoint.value_or(std::to_string(ib)));
    bool reported = false;
    if (curves.size() < 2) {
      note(report, Report::Kind::Fallback, name, "curve seen in fewer than two aligned images; interpolating");
      reported = true;
    }

    VertexId prev = ia;
    for (int k = 1; k <= n_sub; ++k) {
      const double f = static_cast<double>(k) / (n_sub + 1);
      BranchVertex v;
      v.id = next++;
      v.thickness = std::lerp(a->thickness, b->thickness, f);
      v.position = a->position + f * (b->position - a->position);
      if (curves.size() >= 2) {
        std::vector<Ray> rays;
        for (std::size_t c = 0; c < curves.size(); ++c) {
          const auto s = curves[c].second.at_fraction(f);
          rays.push_back(pixel_ray(*curves[c].first, s.point));
          v.observations.push_back({curves[c].first->id, images[c], s.point, s.thickness});
        }
        try {
          v.position = triangulate_point(rays).point;
        } catch (const Error&) {
          if (!reported) note(report, Report::Kind::Fallback, name, "degenerate rays; interpolating");
          reported = true;
        }
      }
      out.vertices.push_back(std::move(v));
      out.edges.emplace_back(prev, out.vertices.back().id);
      prev = out.vertices.back().id;
    }
    out.edges.emplace_back(prev, ib);
  }
  return out;
}

Branch3D clamp_narrow_baseline(const Branch3D& branch, VertexId root, const CameraMap& cameras, double alpha) {
  if (!(alpha >= 0 && alpha <= 1)) throw Error(Errc::InvalidParams, "clamp fraction must lie in [0, 1]");
  Branch3D out = branch;
  if (!out.find(root)) throw Error(Errc::UnknownId, "root vertex " + std::to_string(root) + " missing");

  std::unordered_map<VertexId, std::vector<VertexId>> adj;
  for (const auto& [u, v] : out.edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::unordered_map<VertexId, VertexId> parent{{root, root}};
  std::queue<VertexId> q;
  q.push(root);
  while (!q.empty()) {
    const VertexId p = q.front();
    q.pop();
    const Vec3 px = out.find(p)->position;
    for (VertexId c : adj[p]) {
      if (c == parent[p]) continue;
      if (parent.count(c)) throw Error(Errc::CycleDetected, "branch graph has a cycle through vertex " + std::to_string(c));
      parent[c] = p;
      q.push(c);
      BranchVertex* v = out.find(c);
      // The mean of the per-camera candidates equals the lerp from the mean cut.
      Vec3 cut = Vec3::Zero();
      int n = 0;
      for (const auto& o : v->observations) {
        const Camera* cam = usable_camera(cameras, o.camera_id);
        if (!cam) continue;
        cut += parallel_plane_intersect(*cam, pixel_ray(*cam, o.pixel), px);
        ++n;
      }
      if (n == 0) continue;
      cut /= n;
      for (int k = 0; k < 3; ++k) v->position[k] = std::lerp(cut[k], v->position[k], alpha);
    }
  }
  return out;
}

Reregistration reregister_misaligned(std::span<const Keypoint3D> first_pass,
                                     std::span<const annotation::ImageAnnotation> annotations,
                                     const CameraMap& cameras, const ReregisterOptions& options, Report* report) {
  Reregistration r;
  r.cameras = cameras;
  r.keypoints.assign(first_pass.begin(), first_pass.end());

  std::unordered_map<std::string, const Keypoint3D*> known;
  for (const auto& kp : first_pass) known.emplace(kp.id, &kp);

  bool any = false;
  for (const auto& ann : annotations) {
    auto it = r.cameras.find(ann.camera_id);
    if (it == r.cameras.end() || it->second.aligned) continue;
    ImageOutcome o{ann.image_id, ann.camera_id, 0, false, 0, {}};
    std::vector<Correspondence> corr;
    for (const auto& v : ann.vertices) {
      if (!v.keypoint) continue;
      if (auto k = known.find(*v.keypoint); k != known.end()) corr.push_back({k->second->position, v.pos()});
    }
    o.shared_keypoints = corr.size();
    if (corr.size() < options.min_shared) {
      o.message = "only " + std::to_string(corr.size()) + " keypoints shared with the first pass";
    } else {
      try {
        const auto pnp = solve_pnp(corr, it->second.intrinsics, options.pnp);
        o.rms_px = pnp.rms_px;
        if (pnp.rms_px <= options.max_rms_px) {
          it->second.extrinsics = pnp.pose;
          it->second.aligned = true;
          o.recovered = true;
          o.message = "pose recovered";
          any = true;
        } else {
          o.message = "reprojection RMS " + std::to_string(pnp.rms_px) + " px exceeds limit";
        }
      } catch (const Error& e) {
        o.message = e.what();
      }
    }
    if (!o.recovered) note(report, Report::Kind::Failure, ann.image_id, o.message);
    r.outcomes.push_back(std::move(o));
  }
  if (any) r.keypoints = triangulate_keypoints(annotations, r.cameras, report);
  return r;
}

}  // namespace arbor::multiview
