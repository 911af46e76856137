// Writes the bundled synthetic scene: cameras (one of them misaligned),
// exact annotations, rendered photographs, a surface point cloud with loose
// "leaf" points, two offset frame sequences, a pose, and the pipeline config.
// With --golden it also runs the whole pipeline and records artifact hashes.

#include <CLI11.hpp>
#include <Eigen/Geometry>
#include <cmath>
#include <iostream>
#include <numbers>
#include <random>
#include <unistd.h>

#include "arbor/pipeline.hpp"
#include "arbor/synthetic.hpp"

namespace fs = std::filesystem;
using namespace arbor;
using pipeline::Json;

namespace {

constexpr std::uint64_t kSeed = 20240611;
constexpr int kCameras = 5;
constexpr int kWidth = 400, kHeight = 320;
constexpr double kFocal = 240;
constexpr int kFrames = 60;
constexpr int kVideoLag = 7;
constexpr int kVideoWidth = 48, kVideoHeight = 36;

Rgb8 render(const annotation::ImageAnnotation& ann, std::mt19937_64& rng) {
  const Gray8 mask = annotation::rasterize_mask(ann);
  std::uniform_int_distribution<int> noise(-6, 6);
  Rgb8 img(kWidth, kHeight, 3, 0);
  for (int y = 0; y < kHeight; ++y) {
    for (int x = 0; x < kWidth; ++x) {
      int r, g, b;
      if (mask.at(x, y)) {
        const int stripe = (y / 5) % 2 ? 24 : 0;
        r = 112 + stripe, g = 78 + stripe / 2, b = 48;
      } else {
        r = 150 + static_cast<int>(20 * std::sin(x / 17.0)), g = 185 + static_cast<int>(15 * std::cos(y / 23.0)), b = 225;
      }
      img.at(x, y, 0) = static_cast<std::uint8_t>(std::clamp(r + noise(rng), 0, 255));
      img.at(x, y, 1) = static_cast<std::uint8_t>(std::clamp(g + noise(rng), 0, 255));
      img.at(x, y, 2) = static_cast<std::uint8_t>(std::clamp(b + noise(rng), 0, 255));
    }
  }
  return img;
}

tree::PointCloud make_cloud(const synthetic::Tree& t, std::mt19937_64& rng) {
  tree::PointCloud c;
  std::normal_distribution<double> jitter(0.0, 0.0005);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int child = 1; child < static_cast<int>(t.nodes.size()); ++child) {
    for (int i = 0; i <= 40; ++i) {
      const double s = i / 40.0;
      const Vec3 p = t.edge_point(child, s);
      const Vec3 d = (t.edge_point(child, std::min(1.0, s + 1e-3)) - t.edge_point(child, std::max(0.0, s - 1e-3))).normalized();
      const Vec3 a = d.unitOrthogonal();
      const Vec3 b = d.cross(a);
      const double r = t.edge_radius(child, s);
      for (int k = 0; k < 24; ++k) {
        const double phi = 2 * std::numbers::pi * k / 24;
        c.points.push_back(p + (r + jitter(rng)) * (std::cos(phi) * a + std::sin(phi) * b));
        const auto shade = static_cast<std::uint8_t>(90 + 30 * ((i / 3) % 2));
        c.colors.push_back({shade, static_cast<std::uint8_t>(shade * 0.7), 40});
      }
    }
  }
  // Leaf clumps around the outermost nodes: the points no branch explains.
  std::vector<int> children(t.nodes.size(), 0);
  for (int p : t.parent)
    if (p >= 0) ++children[p];
  for (std::size_t n = 1; n < t.nodes.size(); ++n) {
    if (children[n]) continue;
    for (int k = 0; k < 60; ++k) {
      const Vec3 dir = Vec3(u(rng), u(rng), u(rng)).normalized();
      c.points.push_back(t.nodes[n] + (0.06 + 0.04 * std::abs(u(rng))) * dir);
      c.colors.push_back({60, static_cast<std::uint8_t>(140 + 40 * std::abs(u(rng))), 50});
    }
  }
  return c;
}

void write_videos(const fs::path& dir, std::mt19937_64& rng) {
  // One long sequence; b sees it kVideoLag frames later than a.
  std::uniform_int_distribution<int> px(0, 255);
  std::uniform_real_distribution<double> frac(0.0, 0.3);
  std::vector<Gray8> seq;
  Gray8 f(kVideoWidth, kVideoHeight, 1, 0);
  for (auto& v : f.data) v = static_cast<std::uint8_t>(px(rng));
  for (int i = 0; i < kFrames + kVideoLag; ++i) {
    const double p = frac(rng);
    std::bernoulli_distribution change(p);
    for (auto& v : f.data)
      if (change(rng)) v = static_cast<std::uint8_t>(px(rng));
    seq.push_back(f);
  }
  char name[32];
  for (int i = 0; i < kFrames; ++i) {
    std::snprintf(name, sizeof name, "frame_%04d.png", i);
    io::write_png(dir / "video_a" / name, seq[kVideoLag + i]);
    io::write_png(dir / "video_b" / name, seq[i]);
  }
}

Json fixture_config() {
  return {{"paths",
           {{"cameras", "cameras.json"},
            {"annotations", "annotations"},
            {"images", "images"},
            {"cloud", "cloud.ply"},
            {"video_a", "video_a"},
            {"video_b", "video_b"},
            {"pose", "pose.json"},
            {"output", "out"}}},
          {"seed", 7},
          {"sync", {{"max_lag", 20}, {"fps", 30}}},
          {"dataset", {{"crop_size", 96}, {"crops_per_image", 3}, {"min_separation", 50}, {"clusters", 2}}},
          {"flow", {{"scales", {1.0, 0.7071067811865476, 0.5}}}},
          {"triangulate", {{"clamp_alpha", 0.9}, {"n_sub", 3}}},
          {"skin", {{"samples_per_segment", 3}, {"ring_sides", 12}, {"weld", true}}},
          {"displace", {{"sample_radius", 0.015}, {"sample_height", 0.01}, {"smooth_iterations", 1}, {"smooth_lambda", 0.3}}},
          {"bind", {{"orphan_margin", 0.01}}},
          {"export", {{"density", 700}, {"stiffness", 1000}, {"damping", 10}}}};
}

// Forward kinematics: every edge turns by a small angle about its parent
// node, so each child joint stays where its parent edge carries it.
std::vector<tree::Isometry> sway_pose(const tree::Skeleton& sk) {
  const auto parent_edge = sk.parent_edge();
  std::vector<tree::Isometry> T(sk.edges.size(), tree::Isometry::Identity());
  std::vector<char> done(sk.edges.size(), 0);
  for (std::size_t pass = 0; pass < sk.edges.size(); ++pass) {
    for (std::size_t e = 0; e < sk.edges.size(); ++e) {
      if (done[e]) continue;
      const int p = sk.edges[e].first;
      const int pe = parent_edge[p];
      if (pe >= 0 && !done[pe]) continue;
      const Vec3 pivot = sk.nodes[p].position;
      tree::Isometry local = tree::Isometry::Identity();
      local.translate(pivot);
      local.rotate(Eigen::AngleAxisd(0.01, Vec3(1, 0.5, 0).normalized()));
      local.translate(-pivot);
      T[e] = (pe >= 0 ? T[pe] : tree::Isometry::Identity()) * local;
      done[e] = 1;
    }
  }
  return T;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic pipeline fixture"};
  std::string out_dir;
  bool golden = false;
  app.add_option("dir", out_dir, "fixture directory")->required();
  app.add_flag("--golden", golden, "run the pipeline and write golden.json");
  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path dir = fs::absolute(out_dir);
    std::mt19937_64 rng(kSeed);
    const auto t = synthetic::make_tree(kSeed, {.branches = 12, .trunk_height = 0.9, .bend = 0.08, .root_radius = 0.1, .min_radius = 0.02});
    auto cams = synthetic::ring_cameras(kCameras, 4.0, 0.0, {0, 0, 1.1}, kFocal, kWidth, kHeight);

    fs::create_directories(dir / "annotations");
    fs::create_directories(dir / "images");
    for (const auto& cam : cams) {
      const std::string image_id = "img" + cam.id.substr(3);
      const auto ann = synthetic::annotate(t, cam, image_id, 3);
      for (const auto& v : ann.vertices) {
        if (v.x < 0 || v.y < 0 || v.x >= kWidth || v.y >= kHeight) throw std::runtime_error("tree leaves the frame of " + cam.id);
      }
      io::write_json(dir / "annotations" / (image_id + ".json"), io::to_json(ann));
      io::write_png(dir / "images" / (image_id + ".png"), render(ann, rng));
    }
    // The last camera arrives with a poor pose estimate.
    auto& bad = cams.back();
    bad.aligned = false;
    bad.extrinsics.R = Eigen::AngleAxisd(0.03, Vec3(0.2, 1, 0).normalized()).toRotationMatrix() * bad.extrinsics.R;
    bad.extrinsics.t += Vec3(0.05, -0.02, 0.04);
    multiview::CameraMap map;
    for (const auto& c : cams) map[c.id] = c;
    io::write_json(dir / "cameras.json", io::cameras_to_json(map));
    io::write_ply(dir / "cloud.ply", make_cloud(t, rng));
    write_videos(dir, rng);
    io::write_json(dir / "config.json", fixture_config());

    // The pose must match the skeleton the pipeline builds, so build it.
    const fs::path work = fs::temp_directory_path() / ("arbor_fixture_" + std::to_string(::getpid()));
    Json cfg = fixture_config();
    cfg["paths"].erase("pose");
    cfg["paths"]["output"] = work.string();
    auto config = pipeline::parse_config(cfg, dir);
    pipeline::run(pipeline::Stage::Triangulate, config);
    pipeline::run(pipeline::Stage::Skeleton, config);
    const auto sk = io::skeleton_from_json(io::read_json(work / "skeleton.json"));
    io::write_json(dir / "pose.json", io::pose_to_json(sway_pose(sk)));
    fs::remove_all(work);

    if (golden) {
      cfg = fixture_config();
      cfg["paths"]["output"] = work.string();
      config = pipeline::parse_config(cfg, dir);
      pipeline::run(pipeline::Stage::All, config);
      Json g = Json::object();
      for (const char* f : {"skeleton.json", "textured.obj", "rigid_bodies.json"}) g[f] = io::sha256_file(work / f);
      g["sync_offset_frames"] = kVideoLag;
      io::write_json(dir / "golden.json", g);
      fs::remove_all(work);
    }
    std::cout << "fixture written to " << dir.string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "make_fixture: " << e.what() << "\n";
    return 1;
  }
}
