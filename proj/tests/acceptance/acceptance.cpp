// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any fails. Usage: arbor_acceptance [--fixture DIR] [--only N,...]

#include <CLI11.hpp>
#include <Eigen/Geometry>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numbers>
#include <omp.h>
#include <random>
#include <set>
#include <sstream>

#include "arbor/dataset.hpp"
#include "arbor/flowfield.hpp"
#include "arbor/medialaxis.hpp"
#include "arbor/multiview.hpp"
#include "arbor/pipeline.hpp"
#include "arbor/synthetic.hpp"
#include "arbor/treegeom.hpp"
#include "arbor/videosync.hpp"
#include "synth.hpp"

using namespace arbor;
using std::numbers::pi;
namespace fs = std::filesystem;
namespace syn = arbor::synthetic;

namespace {

constexpr double kDeg = pi / 180;

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failed sub-checks; the first few are reported.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (ok) return;
    if (failures_.size() < 3) failures_.push_back(what);
    ++failed_;
  }
  void note(const std::string& s) { notes_.push_back(s); }
  Outcome done() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < notes_.size(); ++i) os << (i ? "; " : "") << notes_[i];
    if (failed_) {
      os << (notes_.empty() ? "" : "; ") << failed_ << "/" << total_ << " sub-checks failed";
      for (const auto& f : failures_) os << " [" << f << "]";
    }
    return {failed_ == 0, os.str()};
  }

 private:
  std::size_t total_ = 0, failed_ = 0;
  std::vector<std::string> failures_, notes_;
};

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

multiview::CameraMap to_map(const std::vector<Camera>& cams) {
  multiview::CameraMap m;
  for (const auto& c : cams) m.emplace(c.id, c);
  return m;
}

std::vector<annotation::ImageAnnotation> annotate_all(const syn::Tree& t, const std::vector<Camera>& cams, int interior = 0) {
  std::vector<annotation::ImageAnnotation> out;
  for (const auto& c : cams) out.push_back(syn::annotate(t, c, "img_" + c.id, interior));
  return out;
}

multiview::Branch3D tree_branch(const syn::Tree& t) {
  multiview::Branch3D b;
  for (std::size_t i = 0; i < t.nodes.size(); ++i)
    b.vertices.push_back({static_cast<multiview::VertexId>(i), t.nodes[i], t.radii[i], syn::Tree::key(static_cast<int>(i)), {}});
  for (std::size_t i = 1; i < t.nodes.size(); ++i) b.edges.emplace_back(t.parent[i], static_cast<multiview::VertexId>(i));
  b.roots = {0};
  return b;
}

double dist_to_polyline(const std::vector<Vec2>& poly, const Vec2& p) {
  double best = (poly.front() - p).norm();
  for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
    const Vec2 a = poly[i], d = poly[i + 1] - a;
    const double t = d.squaredNorm() > 0 ? std::clamp((p - a).dot(d) / d.squaredNorm(), 0.0, 1.0) : 0.0;
    best = std::min(best, (a + t * d - p).norm());
  }
  return best;
}

// ---- 1 -----------------------------------------------------------------------------

Outcome kernel_analytics() {
  Checker c;
  const auto t0 = std::chrono::steady_clock::now();
  const flow::BankParams bp;
  const auto bank = flow::make_bank(bp);
  c.expect(bank.size() == 18, "bank size " + std::to_string(bank.size()));
  double worst = 0;
  for (const auto& k : bank) {
    c.expect(std::abs(k.at(0, 0) - 1.0) < 1e-6, "center weight at theta " + fmt(k.theta / kDeg));
    const int h = k.half();
    for (int dy = -h; dy <= h; ++dy)
      for (int dx = -h; dx <= h; ++dx) c.expect(k.at(dx, dy) == k.at(-dx, -dy), "evenness");
    const Vec2 v(std::cos(k.theta), std::sin(k.theta)), perp(-v.y(), v.x());
    for (double along : {-3.0, -1.0, 0.0, 0.5, 2.0}) {
      for (double d : {1.0, 1.0 + bp.sigma}) {
        for (double side : {1.0, -1.0}) {
          const auto w = [&](double dd) {
            const Vec2 p = along * v + side * dd * bp.r * perp;
            return flow::kernel_weight(p.x(), p.y(), k.theta, bp.r, bp.sigma, bp.falloff_radius, bp.clamp_falloff);
          };
          const double at = w(d), in = w(d - 1e-9), out = w(d + 1e-9);
          worst = std::max({worst, std::abs(in - at), std::abs(out - at)});
          c.expect(std::abs(in - at) < 1e-6 && std::abs(out - at) < 1e-6, "continuity at d = " + fmt(d));
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 1.0, "runtime " + fmt(secs) + " s");
  c.note("18 kernels, worst jump " + fmt(worst, 2) + ", " + fmt(secs, 2) + " s");
  return c.done();
}

// ---- 2, 3 ----------------------------------------------------------------------------

Outcome orientation_recovery() {
  Checker c;
  const int size = 512;
  int margin = 0;
  {
    const flow::BankParams bp;
    double smallest = 1;
    for (double s : flow::default_scales()) smallest = std::min(smallest, s);
    margin = static_cast<int>(std::ceil(bp.N / 2 / smallest)) + 1;
  }
  double worst = 2;
  std::string worst_case;
  double max_secs = 0;
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  for (int deg = 0; deg <= 170; deg += 10) {
    for (int width : {4, 5, 6, 7}) {
      const double th = deg * kDeg;
      const auto m = synth::band(size, size, th, width, size / 2 + 0.3, size / 2 + 0.1);
      const auto t0 = std::chrono::steady_clock::now();
      const auto f = flow::compute_flow(m);
      max_secs = std::max(max_secs, seconds_since(t0));
      int total = 0, ok = 0;
      for (int y = margin; y < size - margin; ++y)
        for (int x = margin; x < size - margin; ++x) {
          if (m.at(x, y) < 0.5) continue;
          ++total;
          const auto d = f.at(x, y);
          if (!d.empty() && synth::angle_between_lines(std::atan2(d[0].y(), d[0].x()), th) <= 5 * kDeg) ++ok;
        }
      const double frac = total ? static_cast<double>(ok) / total : 0;
      if (frac < worst) worst = frac, worst_case = std::to_string(deg) + " deg, width " + std::to_string(width);
      c.expect(frac >= 0.95, std::to_string(deg) + " deg width " + std::to_string(width) + ": " + fmt(frac));
    }
  }
  omp_set_num_threads(saved);
  c.expect(max_secs < 10.0, "512x512 single-threaded took " + fmt(max_secs) + " s");
  c.note("72 bands, worst " + fmt(100 * worst, 4) + "% (" + worst_case + "), slowest 512x512 single-thread " + fmt(max_secs, 2) + " s");
  return c.done();
}

Outcome blob_rejection() {
  Checker c;
  const auto m = synth::disk(160, 160, 80.4, 79.7, 20);
  const auto f = flow::compute_flow(m);
  int total = 0, none = 0;
  for (int y = 0; y < 160; ++y)
    for (int x = 0; x < 160; ++x)
      if (std::hypot(x - 80.4, y - 79.7) < 20) ++total, none += f.count_at(x, y) == 0;
  const double frac = static_cast<double>(none) / total;
  c.expect(frac >= 0.9, "no-flow fraction " + fmt(frac));
  c.note(fmt(100 * frac, 4) + "% of " + std::to_string(total) + " interior pixels without flow");
  return c.done();
}

// ---- 4, 5 ------------------------------------------------------------------------------

Outcome medial_axis() {
  Checker c;
  const synth::Sinusoid s{64, 20, 200, -20, 420};
  const auto f = flow::compute_flow(synth::sinusoid_band(400, 128, s, 8));
  const Vec2 p0(40, s.y(40)), p1(360, s.y(360));
  const auto pl = medial::trace(f, p0, p1, {});
  c.expect(pl.termination == medial::Termination::ReachedEndpoint, "did not reach p1");
  double dev = 0, thk = 0;
  for (std::size_t i = 0; i < pl.points.size(); ++i) {
    dev = std::max(dev, s.distance(pl.points[i].x(), pl.points[i].y()));
    thk = std::max(thk, std::abs(pl.thicknesses[i] - 8) / 8);
  }
  c.expect(pl.points.size() > 50, "only " + std::to_string(pl.points.size()) + " points");
  c.expect(dev <= 1.5, "max deviation " + fmt(dev));
  c.expect(thk <= 0.15, "max thickness error " + fmt(thk));
  c.note(std::to_string(pl.points.size()) + " points, max deviation " + fmt(dev) + " px, max thickness error " + fmt(100 * thk) + "%");
  return c.done();
}

Outcome round_trip() {
  Checker c;
  // A scene not used anywhere else, with branches 3 to 8 px wide: each branch
  // is rasterized on its own and traced between its annotated ends.
  const auto t = syn::make_tree(90210, {.branches = 16, .trunk_height = 0.9, .bend = 0.1, .root_radius = 0.05, .min_radius = 0.025});
  const auto cams = syn::ring_cameras(2, 4.0, 0.3, {0, 0, 1.0}, 320, 512, 420, 90);
  std::size_t total = 0, close = 0, traced = 0, curves = 0;
  for (const auto& cam : cams) {
    const auto full = syn::annotate(t, cam, "held_out_" + cam.id, 4);
    for (int child = 1; child < static_cast<int>(t.nodes.size()); ++child) {
      const auto ann = syn::restrict_to(full, t, {child});
      const auto mask8 = annotation::rasterize_mask(ann);
      const GrayF mask = synth::to_float(mask8);
      const auto field = flow::compute_flow(mask);
      for (const auto& curve : annotation::extract_curves(ann)) {
        const auto geom = annotation::curve_geometry(ann, curve);
        ++curves;
        try {
          const auto pl = medial::trace(field, geom.points.front(), geom.points.back(), {});
          ++traced;
          for (const auto& p : pl.points) {
            ++total;
            close += dist_to_polyline(geom.points, p) <= 2.0;
          }
        } catch (const Error& e) {
          c.expect(false, "trace of branch " + std::to_string(child) + " in " + cam.id + ": " + std::string(to_string(e.code())));
        }
      }
    }
  }
  const double frac = total ? static_cast<double>(close) / total : 0;
  c.expect(frac >= 0.9, "within-2px fraction " + fmt(frac));
  c.note(std::to_string(traced) + "/" + std::to_string(curves) + " curves traced, " + fmt(100 * frac, 4) + "% of " +
         std::to_string(total) + " points within 2 px");
  return c.done();
}

// ---- 6, 7, 8 -------------------------------------------------------------------------------

double ray_cost(const Vec3& x, std::span<const Ray> rays) {
  double s = 0;
  for (const auto& r : rays) {
    const Vec3 d = r.direction.normalized();
    const Vec3 v = x - r.origin;
    s += (v - v.dot(d) * d).squaredNorm();
  }
  return s;
}

// Coarse-to-fine exhaustive search over a cube of half-size `half`.
Vec3 grid_search(std::span<const Ray> rays, Vec3 center, double half) {
  for (int level = 0; level < 8; ++level) {
    Vec3 best = center;
    double best_cost = ray_cost(center, rays);
    const int n = 20;
    for (int i = -n; i <= n; ++i)
      for (int j = -n; j <= n; ++j)
        for (int k = -n; k <= n; ++k) {
          const Vec3 x = center + half / n * Vec3(i, j, k);
          const double cst = ray_cost(x, rays);
          if (cst < best_cost) best_cost = cst, best = x;
        }
    center = best;
    half /= 8;
  }
  return center;
}

Outcome triangulation() {
  Checker c;
  {
    const Vec3 x(1, 2, 3);
    const Ray rays[] = {{Vec3(0, 0, 0), x}, {Vec3(5, 0, 1), x - Vec3(5, 0, 1)}, {Vec3(-2, 4, 0), x - Vec3(-2, 4, 0)}};
    const double err = (multiview::triangulate_point(rays).point - x).norm();
    c.expect(err < 1e-9, "exact rays error " + fmt(err));
    c.note("exact rays " + fmt(err, 2));
  }
  double worst = 0;
  {
    std::mt19937_64 rng(606);
    std::normal_distribution<double> px(0, 1.0);
    const auto cams = syn::ring_cameras(10, 6, 0.8, Vec3(0, 0, 1), 800, 1024, 768);
    for (int trial = 0; trial < 5; ++trial) {
      const Vec3 X(0.2 * trial - 0.4, 0.1, 1.0 + 0.05 * trial);
      std::vector<Ray> rays;
      for (const auto& cam : cams) rays.push_back(pixel_ray(cam, project(cam, X) + Vec2(px(rng), px(rng))));
      const Vec3 t = multiview::triangulate_point(rays).point;
      const Vec3 oracle = grid_search(rays, X, 0.5);
      worst = std::max(worst, (t - oracle).norm());
      c.expect((t - oracle).norm() < 1e-3, "noisy trial " + std::to_string(trial));
      c.expect(ray_cost(t, rays) <= ray_cost(oracle, rays) + 1e-12, "oracle beat the solver");
    }
    c.note("10-camera 1 px noise: max distance to grid optimum " + fmt(worst, 2));
  }
  {
    const auto tree = syn::make_tree(7, {.branches = 50});
    const auto cams = syn::ring_cameras(6, 9, 1.5, Vec3(0, 0, 1.5));
    const auto kps = multiview::triangulate_keypoints(annotate_all(tree, cams), to_map(cams));
    c.expect(kps.size() == tree.nodes.size(), "recovered " + std::to_string(kps.size()) + " keypoints");
    double err = 0;
    for (const auto& kp : kps) err = std::max(err, (kp.position - tree.nodes[std::stoi(kp.id.substr(1))]).norm());
    c.expect(err < 1e-6, "keypoint error " + fmt(err));
    c.note("50-branch tree: " + std::to_string(kps.size()) + " keypoints, max error " + fmt(err, 2));
  }
  return c.done();
}

Outcome thickness() {
  Checker c;
  double worst = 0;
  for (std::uint64_t seed : {3u, 8u, 21u}) {
    const auto tree = syn::make_tree(seed, {.branches = 20});
    const auto cams = syn::ring_cameras(5, 7, 0.8, Vec3(0, 0, 1.0), 900, 1280, 960, 150);
    const auto kps = multiview::triangulate_keypoints(annotate_all(tree, cams), to_map(cams));
    c.expect(kps.size() == tree.nodes.size(), "keypoint count");
    for (const auto& kp : kps) {
      const double rel = std::abs(kp.radius / tree.radii[std::stoi(kp.id.substr(1))] - 1);
      worst = std::max(worst, rel);
      c.expect(rel < 1e-6, kp.id + " relative error " + fmt(rel));
    }
  }
  // Hand computation: unit focal length, 2 px radius seen at depths 5 and 7.
  Camera a;
  a.id = "a";
  a.intrinsics = {1, 1, 0, 0, 2, 2};
  Camera b = a;
  b.id = "b";
  b.extrinsics.t = Vec3(0, 0, 2);
  multiview::Keypoint3D kp;
  kp.id = "k";
  kp.position = Vec3(0, 0, 5);
  kp.observations = {{"a", "i", Vec2(0, 0), 2}, {"b", "j", Vec2(0, 0), 2}};
  const double avg = multiview::estimate_thickness(kp, {{"a", a}, {"b", b}});
  c.expect(std::abs(avg - 12) < 1e-12, "two-camera average " + fmt(avg, 15));
  c.note("max relative radius error " + fmt(worst, 2) + " over 3 scenes; two-camera average " + fmt(avg, 15) + " (hand: 12)");
  return c.done();
}

Outcome clamping() {
  Checker c;
  const auto tree = syn::make_tree(16, {.branches = 14});
  const auto cams = syn::ring_cameras(2, 6, 1, Vec3(0, 0, 1.5), 800, 1024, 768, 0.5);
  const auto anns = annotate_all(tree, cams);
  const auto cm = to_map(cams);
  const auto b = multiview::transfer_topology(anns, multiview::triangulate_keypoints(anns, cm));
  double worst = 0;
  for (double alpha : {0.0, 0.5, 0.9, 1.0}) {
    const auto cl = multiview::clamp_narrow_baseline(b, 0, cm, alpha);
    for (const auto& v : cl.vertices)
      for (const auto& o : v.observations) {
        const double e = (project(cm.at(o.camera_id), v.position) - o.pixel).norm();
        worst = std::max(worst, e);
        c.expect(e <= 0.5, "alpha " + fmt(alpha) + " reprojection " + fmt(e));
      }
    if (alpha == 1.0) {
      for (std::size_t i = 0; i < b.vertices.size(); ++i) c.expect(cl.vertices[i].position == b.vertices[i].position, "alpha 1 moved a vertex");
    }
  }
  c.note(std::to_string(b.vertices.size()) + " vertices, worst reprojection " + fmt(worst, 2) + " px");
  return c.done();
}

// ---- 9, 10, 11, 12 --------------------------------------------------------------------------

Outcome laplace_fill() {
  Checker c;
  const auto grid = [](int nx, int ny) { return tree::vertex_adjacency(synth::grid_mesh(nx, ny, 1.0)); };
  {
    const auto adj = grid(12, 9);
    tree::Heights h{std::vector<double>(adj.size(), 0.0), std::vector<char>(adj.size(), 0)};
    for (int i : {0, 11, 50, 107}) h.known[i] = 1, h.value[i] = -1.75;
    for (double v : tree::laplace_fill(adj, h).value) c.expect(std::abs(v + 1.75) < 1e-8, "constant fill " + fmt(v, 12));
  }
  {
    const int n = 21;
    std::vector<std::vector<int>> path(n);
    for (int i = 0; i + 1 < n; ++i) path[i].push_back(i + 1), path[i + 1].push_back(i);
    tree::Heights h{std::vector<double>(n, 0.0), std::vector<char>(n, 0)};
    h.known[0] = h.known[n - 1] = 1;
    h.value[0] = 2;
    h.value[n - 1] = -3;
    const auto r = tree::laplace_fill(path, h);
    for (int i = 0; i < n; ++i) c.expect(std::abs(r.value[i] - (2 - 5.0 * i / (n - 1))) < 1e-8, "ramp at " + std::to_string(i));
  }
  std::mt19937_64 rng(2025);
  std::uniform_int_distribution<int> size(4, 20);
  std::uniform_real_distribution<double> u(-3, 3);
  std::bernoulli_distribution known(0.2);
  for (int patch = 0; patch < 100; ++patch) {
    const auto adj = grid(size(rng), size(rng));
    tree::Heights h{std::vector<double>(adj.size(), 0.0), std::vector<char>(adj.size(), 0)};
    for (std::size_t i = 0; i < adj.size(); ++i)
      if (known(rng)) h.known[i] = 1, h.value[i] = u(rng);
    h.known[0] = 1;
    h.value[0] = u(rng);
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < adj.size(); ++i)
      if (h.known[i]) lo = std::min(lo, h.value[i]), hi = std::max(hi, h.value[i]);
    const auto r = tree::laplace_fill(adj, h);
    for (double v : r.value) c.expect(v >= lo - 1e-12 && v <= hi + 1e-12, "maximum principle, patch " + std::to_string(patch));
  }
  c.note("constant, ramp and 100 random patches");
  return c.done();
}

tree::PointCloud sheet(double x0, double x1, double y0, double y1, double z, double step) {
  tree::PointCloud cl;
  for (double x = x0; x <= x1 + 1e-12; x += step)
    for (double y = y0; y <= y1 + 1e-12; y += step) {
      cl.points.emplace_back(x, y, z);
      cl.colors.push_back({0, 0, 0});
    }
  return cl;
}

Outcome displacement() {
  Checker c;
  const tree::Mesh m = synth::grid_mesh(21, 21, 0.05);
  {
    const auto h = tree::sample_heights(m, sheet(-0.1, 1.1, -0.1, 1.1, 0.3, 0.01), 0.03, 0.5);
    double err = 0;
    std::size_t sampled = 0;
    for (std::size_t i = 0; i < m.size(); ++i)
      if (h.known[i]) ++sampled, err = std::max(err, std::abs(h.value[i] - 0.3));
    c.expect(sampled == m.size(), "sampled " + std::to_string(sampled));
    c.expect(err < 1e-6, "offset error " + fmt(err));
    c.note(std::to_string(sampled) + " sampled vertices, max offset error " + fmt(err, 2));
  }
  {
    tree::PointCloud cloud = sheet(-0.1, 0.3, -0.1, 1.1, 0.3, 0.01);
    const auto right = sheet(0.7, 1.1, -0.1, 1.1, -0.1, 0.01);
    cloud.points.insert(cloud.points.end(), right.points.begin(), right.points.end());
    cloud.colors.insert(cloud.colors.end(), right.colors.begin(), right.colors.end());
    const auto r = tree::displace_mesh(m, cloud, 0.03, 0.5);
    // Harmonic: every unknown vertex is the mean of its neighbors.
    const auto adj = tree::vertex_adjacency(m);
    const auto h = tree::sample_heights(m, cloud, 0.03, 0.5);
    double worst = 0;
    std::size_t unknown = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (h.known[i]) continue;
      ++unknown;
      double s = 0;
      for (int j : adj[i]) s += r.height[j];
      worst = std::max(worst, std::abs(r.height[i] - s / static_cast<double>(adj[i].size())));
    }
    c.expect(unknown > 100, "unknown region too small");
    c.expect(worst < 1e-8, "mean-value residual " + fmt(worst));
    c.note(std::to_string(unknown) + " filled vertices, max mean-value residual " + fmt(worst, 2));
  }
  return c.done();
}

double twist_between(const tree::Frame& a, const tree::Frame& b) {
  const Vec3 axis = a.tangent.cross(b.tangent);
  Vec3 n = a.normal;
  if (axis.norm() > 1e-15) n = Eigen::AngleAxisd(std::atan2(axis.norm(), a.tangent.dot(b.tangent)), axis.normalized()) * a.normal;
  return std::atan2(n.cross(b.normal).norm(), n.dot(b.normal));
}

// Triangles grouped by connected vertex sets.
std::vector<tree::Mesh> components(const tree::Mesh& m) {
  std::vector<int> comp(m.size(), -1);
  const auto adj = tree::vertex_adjacency(m);
  int n = 0;
  for (std::size_t s = 0; s < m.size(); ++s) {
    if (comp[s] >= 0) continue;
    std::vector<int> stack{static_cast<int>(s)};
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      if (comp[v] >= 0) continue;
      comp[v] = n;
      for (int u : adj[v]) stack.push_back(u);
    }
    ++n;
  }
  std::vector<tree::Mesh> out(n);
  std::vector<int> local(m.size());
  for (std::size_t v = 0; v < m.size(); ++v) {
    local[v] = static_cast<int>(out[comp[v]].positions.size());
    out[comp[v]].positions.push_back(m.positions[v]);
  }
  for (const auto& t : m.triangles) out[comp[t[0]]].triangles.push_back({local[t[0]], local[t[1]], local[t[2]]});
  return out;
}

Outcome skinning() {
  Checker c;
  const int S = 12;
  const auto t = syn::make_tree(31, {.branches = 24, .bend = 0.15});
  const auto sk = tree::skeleton_from_branches(tree_branch(t), 4);
  const auto open = tree::skin_skeleton(sk, {S, false});
  const auto tubes = components(open);
  std::size_t closed = 0;
  for (const auto& tube : tubes) {
    const auto a = tree::audit_manifold(tube);
    c.expect(a.manifold(), "tube not a 2-manifold");
    c.expect(a.boundary_edges == 0 || a.boundary_edges == static_cast<std::size_t>(S), "unexpected boundary");
    closed += a.boundary_edges == 0;
  }
  c.expect(closed == 1, std::to_string(closed) + " closed tubes");
  {
    std::vector<Vec3> pts;
    for (int i = 0; i < 6; ++i) pts.emplace_back(0.3 * std::sin(i), 0.2 * i * i / 5.0, 0.5 * i);
    multiview::Branch3D chain;
    for (int i = 0; i < 6; ++i) {
      chain.vertices.push_back({i, pts[i], 0.08 - 0.01 * i, "p" + std::to_string(i), {}});
      if (i) chain.edges.emplace_back(i - 1, i);
    }
    chain.roots = {0};
    const auto m = tree::skin_skeleton(tree::skeleton_from_branches(chain, 5), {S, true});
    const auto a = tree::audit_manifold(m);
    c.expect(a.manifold() && a.boundary_edges == 0, "capped chain not closed");
    c.expect(a.euler_characteristic() == 2, "capped chain Euler characteristic " + std::to_string(a.euler_characteristic()));
  }
  double twist = 0;
  {
    std::vector<Vec3> pts;
    for (int i = 0; i <= 80; ++i) {
      const double s = i / 80.0;
      pts.emplace_back(std::sin(3 * s) + 0.2 * s, 0, std::cos(2 * s) + s * s);
    }
    const auto f = tree::rotation_minimizing_frames(pts);
    for (std::size_t i = 0; i + 1 < f.size(); ++i) twist = std::max(twist, twist_between(f[i], f[i + 1]));
    // A planar curve keeps its normal in (or perpendicular to) the plane.
    for (const auto& fr : f) c.expect(std::min(std::abs(fr.normal.y()), 1 - std::abs(fr.normal.y())) < 1e-6, "frame left the plane");
    c.expect(twist < 1e-6, "twist " + fmt(twist));
  }
  c.note(std::to_string(tubes.size()) + " tubes audited; capped chain chi = 2; max planar twist " + fmt(twist, 2) + " rad");
  return c.done();
}

Outcome rigid_export() {
  Checker c;
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> ur(0.03, 0.3), ul(0.4, 1.6);
  double mass_err = 0;
  for (int k = 0; k < 50; ++k) {
    const double r1 = ur(rng), r2 = ur(rng), L = ul(rng), rho = 700;
    const double exact = rho * pi * L * (r1 * r1 + r1 * r2 + r2 * r2) / 3;
    mass_err = std::max(mass_err, std::abs(tree::frustum_mass(r1, r2, L, rho).mass - exact) / exact);
  }
  c.expect(mass_err < 1e-12, "mass relative error " + fmt(mass_err));

  // One exported edge, inertia about its center of mass against Monte Carlo.
  const double a = 0.27, b = 0.11, L = 1.3, rho = 650;
  const Vec3 p0(0.2, -0.1, 0.4), dir = Vec3(0.3, -0.5, 0.8).normalized();
  const auto sk = tree::skeleton_from_branches(synth::segment_branch(p0, p0 + L * dir, a, b), 1);
  const auto model = tree::export_rigid_bodies(sk, rho, 1000, 10);
  c.expect(model.bodies.size() == 1, "body count");
  const auto& body = model.bodies.front();
  const double exact = rho * pi * L * (a * a + a * b + b * b) / 3;
  c.expect(std::abs(body.mass - exact) / exact < 1e-12, "exported mass");

  std::mt19937_64 mc(99);
  std::uniform_real_distribution<double> ux(-a, a), uz(0, L);
  const long N = 10'000'000;
  long hits = 0;
  Eigen::Vector3d s1 = Vec3::Zero();
  Mat3 s2 = Mat3::Zero();
  for (long k = 0; k < N; ++k) {
    const double x = ux(mc), y = ux(mc), z = uz(mc);
    const double rad = a + (b - a) * z / L;
    if (x * x + y * y > rad * rad) continue;
    ++hits;
    const Vec3 q(x, y, z);
    s1 += q;
    s2 += q * q.transpose();
  }
  const double cell = (2 * a) * (2 * a) * L / N;
  const double m = rho * hits * cell;
  const Vec3 com = s1 / hits;
  const Mat3 second = rho * cell * s2 - m * com * com.transpose();  // about the center of mass
  const Mat3 I_mc = second.trace() * Mat3::Identity() - second;
  // Body frame has z along the edge; rotations about z leave the frustum's tensor unchanged.
  const Mat3& I = body.inertia_body;
  const double scale = I.diagonal().maxCoeff();
  double worst = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double ref = i == j ? std::abs(I(i, j)) : scale;
      const double rel = std::abs(I_mc(i, j) - I(i, j)) / ref;
      worst = std::max(worst, rel);
      c.expect(rel <= 0.01, "inertia (" + std::to_string(i) + "," + std::to_string(j) + ") off by " + fmt(100 * rel) + "%");
    }
  const Vec3 com_world = p0 + com.z() * dir;
  c.expect((body.center_of_mass - com_world).norm() <= 0.01 * L, "center of mass");
  c.note("mass exact to " + fmt(mass_err, 2) + "; inertia vs 1e7-sample Monte Carlo within " + fmt(100 * worst, 2) + "%");
  return c.done();
}

// ---- 13, 14 -------------------------------------------------------------------------------

std::vector<double> motion(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0, 1);
  std::vector<double> v(n);
  double s = 0;
  for (auto& x : v) {
    s = 0.8 * s + g(rng);
    x = std::abs(s) + 0.2 * std::abs(g(rng));
  }
  return v;
}

std::pair<videosync::MotionSeries, videosync::MotionSeries> shifted(std::size_t n, int lag, std::mt19937_64& rng) {
  const std::size_t pad = 120;
  const auto base = motion(n + 2 * pad, rng);
  videosync::MotionSeries a, b;
  for (std::size_t i = 0; i < n; ++i) {
    a.values.push_back(base[pad + i]);
    b.values.push_back(base[pad + i - lag]);
  }
  return {a, b};
}

Outcome video_sync() {
  Checker c;
  std::mt19937_64 rng(13);
  int exact_clean = 0;
  for (int lag = -100; lag <= 100; ++lag) {
    auto [a, b] = shifted(600, lag, rng);
    const int got = videosync::best_offset(a, b, 100);
    exact_clean += got == lag;
    c.expect(got == lag, "lag " + std::to_string(lag) + " gave " + std::to_string(got));
  }
  int exact_noisy = 0;
  std::uniform_int_distribution<int> pick(-100, 100);
  for (int seed = 0; seed < 100; ++seed) {
    std::mt19937_64 r(5000 + seed);
    const int lag = pick(r);
    auto [a, b] = shifted(600, lag, r);
    double power = 0;
    for (double v : b.values) power += v * v;
    power /= static_cast<double>(b.values.size());
    std::normal_distribution<double> g(0, std::sqrt(power / 10));
    for (auto& v : b.values) v = std::max(0.0, v + g(r));
    exact_noisy += videosync::best_offset(a, b, 100) == lag;
  }
  c.expect(exact_noisy >= 99, "noisy exact " + std::to_string(exact_noisy));
  c.note(std::to_string(exact_clean) + "/201 clean lags exact; " + std::to_string(exact_noisy) + "/100 noisy seeds exact at SNR 10");
  return c.done();
}

Outcome dataset_generation() {
  Checker c;
  const auto t = syn::make_tree(404, {.branches = 30, .trunk_height = 1.0, .root_radius = 0.06, .min_radius = 0.01});
  const auto cam = syn::look_at("wide", {0, -3.2, 1.0}, {0, 0, 1.0}, 1400, 2400, 1800);
  const Gray8 mask = annotation::rasterize_mask(syn::annotate(t, cam, "wide", 3));
  std::size_t crops = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto cs = dataset::gen_crops(mask, 24, seed);
    c.expect(!cs.empty(), "seed " + std::to_string(seed) + " produced no crops");
    crops += cs.size();
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const auto& cr = cs[i];
      const auto img = dataset::crop(mask, cr);
      c.expect(img.width == 512 && img.height == 512, "crop size");
      c.expect(cr.left() >= 0 && cr.top() >= 0 && cr.left() + cr.size <= mask.width && cr.top() + cr.size <= mask.height, "crop outside");
      bool zero = false, one = false;
      for (auto v : img.data) (v ? one : zero) = true;
      c.expect(zero && one, "crop lacks a mask value");
      for (std::size_t j = 0; j < i; ++j) c.expect(std::hypot(cr.cx - cs[j].cx, cr.cy - cs[j].cy) >= 50.0, "centers too close");
    }
  }
  c.note(std::to_string(crops) + " crops over 10 seeds");
  return c.done();
}

// ---- 15 ----------------------------------------------------------------------------------

Outcome end_to_end(const fs::path& fixture) {
  Checker c;
  const fs::path golden_file = fixture / "golden.json";
  if (!fs::is_regular_file(golden_file)) return {false, "no golden.json in " + fixture.string()};
  const auto golden = io::read_json(golden_file);
  synth::TempDir work("arbor_acceptance_");
  auto cfg = io::read_json(fixture / "config.json");
  cfg["paths"]["output"] = (work.path / "out").string();
  const auto config = pipeline::parse_config(cfg, fixture);
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = pipeline::run(pipeline::Stage::All, config);
  const double secs = seconds_since(t0);
  for (const auto& r : results) c.expect(r.status == pipeline::StageResult::Status::Ran, std::string(pipeline::to_string(r.stage)) + " did not run");
  int matched = 0;
  for (const char* f : {"skeleton.json", "textured.obj", "rigid_bodies.json"}) {
    const fs::path p = config.paths.output / f;
    const bool ok = fs::is_regular_file(p) && io::sha256_file(p) == golden.at(f).get<std::string>();
    matched += ok;
    c.expect(ok, std::string(f) + " hash differs");
  }
  const int offset = io::read_json(config.paths.output / "sync.json").at("offset_frames").get<int>();
  c.expect(offset == golden.at("sync_offset_frames").get<int>(), "sync offset " + std::to_string(offset));
  c.expect(secs < 300, "run took " + fmt(secs) + " s");
  c.note(std::to_string(matched) + "/3 golden hashes, sync offset " + std::to_string(offset) + ", full run " + fmt(secs, 3) + " s");
  return c.done();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string fixture = ARBOR_FIXTURE_DIR;
  std::vector<int> only;
  app.add_option("--fixture", fixture, "synthetic fixture directory");
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"kernel analytics", kernel_analytics},
      {"orientation recovery", orientation_recovery},
      {"blob rejection", blob_rejection},
      {"medial axis", medial_axis},
      {"round trip", round_trip},
      {"triangulation", triangulation},
      {"thickness", thickness},
      {"clamping", clamping},
      {"laplace fill", laplace_fill},
      {"displacement", displacement},
      {"skinning", skinning},
      {"rigid-body export", rigid_export},
      {"video sync", video_sync},
      {"dataset generation", dataset_generation},
      {"end-to-end", [&] { return end_to_end(fixture); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << ": " << o.detail << " ("
              << fmt(seconds_since(t0), 3) << " s)" << std::endl;
  }
  return failed ? 1 : 0;
}
