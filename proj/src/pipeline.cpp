#include "arbor/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>

#include "arbor/annotation.hpp"
#include "arbor/videosync.hpp"

namespace arbor::pipeline {

namespace {

constexpr std::array<std::pair<Stage, std::string_view>, 13> kNames{{
    {Stage::Sync, "sync"},
    {Stage::Rasterize, "rasterize"},
    {Stage::Dataset, "dataset"},
    {Stage::Flow, "flow"},
    {Stage::Trace, "trace"},
    {Stage::Triangulate, "triangulate"},
    {Stage::Skeleton, "skeleton"},
    {Stage::Skin, "skin"},
    {Stage::Displace, "displace"},
    {Stage::Texture, "texture"},
    {Stage::Bind, "bind"},
    {Stage::Export, "export"},
    {Stage::All, "all"},
}};

std::vector<fs::path> files_in(const fs::path& dir, std::initializer_list<std::string_view> exts) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (std::find(exts.begin(), exts.end(), ext) != exts.end()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

fs::path mask_dir(const Config& c) { return c.paths.masks.value_or(c.paths.output / "masks"); }

// Name of the mesh that texture and export start from.
std::string texture_input(const Config& c) { return stage_enabled(Stage::Displace, c) ? "displaced" : "skin"; }
std::string final_mesh(const Config& c) { return stage_enabled(Stage::Texture, c) ? "textured" : texture_input(c); }

// Everything a stage reads and every knob that changes what it writes.
struct Spec {
  std::vector<fs::path> inputs;
  Json params = Json::object();
  bool seeded = false;
};

class Context {
 public:
  Context(const Config& c, std::uint64_t seed, Stage stage) : config(c), seed(seed), stage(stage) {}

  const Config& config;
  const std::uint64_t seed;
  const Stage stage;
  std::vector<std::string> outputs;

  fs::path out(const std::string& rel) const { return config.paths.output / rel; }

  fs::path need(const fs::path& p) const {
    std::error_code ec;
    if (!fs::exists(p, ec)) {
      throw RunError("STAGE_INPUT_MISSING", std::string(to_string(stage)) + " needs " + p.string() +
                                                "; run the upstream stage first");
    }
    return p;
  }

  void write(const std::string& rel, const io::Bytes& data) {
    io::write_atomic(out(rel), data);
    outputs.push_back(rel);
  }
  void write(const std::string& rel, std::string_view data) {
    io::write_atomic(out(rel), data);
    outputs.push_back(rel);
  }
  void write_json(const std::string& rel, const Json& j) { write(rel, j.dump(2) + "\n"); }

  void write_mesh(const std::string& name, const tree::Mesh& mesh) {
    write(name + ".obj", io::encode_obj(mesh));
    write_json(name + "_rig.json", io::mesh_rig_to_json(mesh));
  }

  tree::Mesh read_mesh(const std::string& name) const {
    tree::Mesh m = io::read_obj(need(out(name + ".obj")));
    io::apply_mesh_rig(m, io::read_json(need(out(name + "_rig.json"))));
    return m;
  }
};

Gray8 to_png_mask(const Gray8& m) {
  Gray8 out = m;
  for (auto& v : out.data) v = v ? 255 : 0;
  return out;
}

Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

// ---- sync -------------------------------------------------------------------

std::vector<fs::path> frame_files(const fs::path& dir) { return files_in(dir, {".png", ".jpg", ".jpeg"}); }

Spec spec_sync(const Config& c) {
  Spec s;
  for (const auto* d : {&*c.paths.video_a, &*c.paths.video_b})
    for (const auto& f : frame_files(*d)) s.inputs.push_back(f);
  s.params = {{"max_lag", c.sync.max_lag}, {"fps", c.sync.fps}};
  return s;
}

videosync::MotionSeries motion(const fs::path& dir, double fps) {
  std::vector<GrayF> frames;
  for (const auto& f : frame_files(dir)) frames.push_back(to_gray(io::read_image(f)));
  return videosync::frame_diff_sequence(frames, fps);
}

void run_sync(Context& ctx) {
  const auto& c = ctx.config;
  const auto a = motion(*c.paths.video_a, c.sync.fps);
  const auto b = motion(*c.paths.video_b, c.sync.fps);
  const int lag = videosync::best_offset(a, b, c.sync.max_lag);
  ctx.write_json("sync.json", {{"offset_frames", lag},
                               {"offset_seconds", lag / c.sync.fps},
                               {"residual_error_seconds", videosync::residual_error_seconds(c.sync.fps)},
                               {"frames_a", a.values.size() + 1},
                               {"frames_b", b.values.size() + 1}});
}

// ---- rasterize ----------------------------------------------------------------

std::vector<fs::path> annotation_files(const Config& c) { return files_in(c.paths.annotations, {".json"}); }

Spec spec_rasterize(const Config& c) {
  Spec s;
  s.inputs = annotation_files(c);
  return s;
}

void run_rasterize(Context& ctx) {
  for (const auto& a : load_annotations(ctx.config.paths.annotations)) {
    const auto violations = annotation::validate(a);
    if (!violations.empty()) {
      throw Error(Errc::InvalidAnnotation, a.image_id + ": " + violations.front().message + " (" +
                                               std::to_string(violations.size()) + " violation(s))");
    }
    ctx.write("masks/" + a.image_id + ".png", io::encode_png(to_png_mask(annotation::rasterize_mask(a))));
  }
}

// ---- dataset ------------------------------------------------------------------

std::vector<fs::path> mask_files(const Config& c, const std::vector<annotation::ImageAnnotation>& anns) {
  std::vector<fs::path> out;
  for (const auto& a : anns) out.push_back(mask_dir(c) / (a.image_id + ".png"));
  return out;
}

Spec spec_dataset(const Config& c) {
  Spec s;
  const auto anns = load_annotations(c.paths.annotations);
  for (const auto& a : anns)
    if (auto img = find_image(*c.paths.images, a.image_id)) s.inputs.push_back(*img);
  for (const auto& m : mask_files(c, anns)) s.inputs.push_back(m);
  s.params = {{"crop_size", c.dataset.crop_size},
              {"crops_per_image", c.dataset.crops_per_image},
              {"min_separation", c.dataset.min_separation},
              {"clusters", c.dataset.clusters}};
  s.seeded = true;
  return s;
}

void run_dataset(Context& ctx) {
  const auto& c = ctx.config;
  const auto anns = load_annotations(c.paths.annotations);
  Json crops = Json::array();
  std::vector<dataset::SaturationFeature> features;
  std::vector<std::size_t> featured;
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const auto& id = anns[i].image_id;
    const auto img_path = find_image(*c.paths.images, id);
    if (!img_path) continue;
    const auto img = io::read_image(*img_path);
    const Gray8 mask = binarize(io::read_image(ctx.need(mask_dir(c) / (id + ".png"))));
    if (!img.same_shape(mask)) throw Error(Errc::DimensionMismatch, "image and mask sizes differ for " + id);
    const auto specs = dataset::gen_crops(mask, c.dataset.crops_per_image, ctx.seed + i,
                                          {c.dataset.crop_size, c.dataset.min_separation});
    for (std::size_t k = 0; k < specs.size(); ++k) {
      const std::string stem = "dataset/" + id + "_" + std::to_string(k);
      const auto ci = dataset::crop(img, specs[k]);
      ctx.write(stem + ".png", io::encode_png(ci));
      ctx.write(stem + "_mask.png", io::encode_png(to_png_mask(dataset::crop(mask, specs[k]))));
      Json e{{"image_id", id}, {"cx", specs[k].cx}, {"cy", specs[k].cy}, {"size", specs[k].size},
             {"image", stem + ".png"}, {"mask", stem + "_mask.png"}};
      if (ci.channels == 3) {
        features.push_back(dataset::saturation_features(ci));
        featured.push_back(crops.size());
        e["saturation"] = {features.back().p30, features.back().p90};
      }
      crops.push_back(std::move(e));
    }
  }
  Json doc{{"crops", crops}};
  if (!features.empty()) {
    const int k = std::min<int>(c.dataset.clusters, static_cast<int>(features.size()));
    const auto cl = dataset::cluster_features(features, k, ctx.seed);
    for (std::size_t f = 0; f < featured.size(); ++f) doc["crops"][featured[f]]["cluster"] = cl.assignments[f];
    Json centers = Json::array();
    for (const auto& ctr : cl.centers) centers.push_back({ctr[0], ctr[1]});
    doc["clusters"] = {{"centers", centers}, {"cost", cl.cost}, {"iterations", cl.iterations}};
  }
  ctx.write_json("dataset.json", doc);
}

// ---- flow ---------------------------------------------------------------------

Spec spec_flow(const Config& c) {
  Spec s;
  s.inputs = mask_files(c, load_annotations(c.paths.annotations));
  s.params = to_json(c.flow);
  return s;
}

void run_flow(Context& ctx) {
  const auto& f = ctx.config.flow;
  for (const auto& a : load_annotations(ctx.config.paths.annotations)) {
    const GrayF mask = load_mask(ctx.need(mask_dir(ctx.config) / (a.image_id + ".png")));
    const auto field = flow::compute_flow(mask, f.bank, f.threshold, f.scales);
    ctx.write("flow/" + a.image_id + ".ffld", io::encode_flow(field));
    if (f.visualize) ctx.write("flow/" + a.image_id + "_flow.png", io::encode_png(flow::visualize(field)));
  }
}

// ---- trace --------------------------------------------------------------------

Spec spec_trace(const Config& c) {
  Spec s;
  s.inputs = annotation_files(c);
  for (const auto& a : load_annotations(c.paths.annotations)) s.inputs.push_back(c.paths.output / "flow" / (a.image_id + ".ffld"));
  s.params = to_json(c.trace);
  return s;
}

void run_trace(Context& ctx) {
  for (const auto& a : load_annotations(ctx.config.paths.annotations)) {
    const auto field = io::decode_flow(io::read_bytes(ctx.need(ctx.out("flow/" + a.image_id + ".ffld"))));
    Json curves = Json::array();
    for (const auto& curve : annotation::extract_curves(a)) {
      const auto* p = a.find(curve.vertices.front());
      const auto* q = a.find(curve.vertices.back());
      Json e{{"vertices", curve.vertices}};
      try {
        e["polyline"] = io::to_json(medial::trace(field, p->pos(), q->pos(), ctx.config.trace));
      } catch (const Error& err) {
        e["error"] = {{"code", to_string(err.code())}, {"message", err.what()}};
      }
      curves.push_back(std::move(e));
    }
    ctx.write_json("traces/" + a.image_id + ".json", {{"image_id", a.image_id}, {"curves", curves}});
  }
}

// ---- triangulate --------------------------------------------------------------

Spec spec_triangulate(const Config& c) {
  Spec s;
  s.inputs = annotation_files(c);
  s.inputs.insert(s.inputs.begin(), c.paths.cameras);
  const auto& t = c.triangulate;
  s.params = {{"clamp_alpha", t.clamp_alpha},
              {"n_sub", t.n_sub},
              {"up", vec_json(t.up)},
              {"min_shared", t.reregister.min_shared},
              {"max_rms_px", t.reregister.max_rms_px},
              {"ransac", t.reregister.pnp.ransac},
              {"inlier_threshold_px", t.reregister.pnp.inlier_threshold_px}};
  s.seeded = true;
  return s;
}

void run_triangulate(Context& ctx) {
  const auto& t = ctx.config.triangulate;
  const auto anns = load_annotations(ctx.config.paths.annotations);
  auto cameras = io::cameras_from_json(io::read_json(ctx.config.paths.cameras));
  multiview::Report report;
  auto keypoints = multiview::triangulate_keypoints(anns, cameras, &report);

  Json outcomes = Json::array();
  const bool misaligned = std::any_of(anns.begin(), anns.end(), [&](const auto& a) {
    auto it = cameras.find(a.camera_id);
    return it != cameras.end() && !it->second.aligned;
  });
  if (misaligned) {
    auto opts = t.reregister;
    opts.pnp.seed = ctx.seed;
    auto rr = multiview::reregister_misaligned(keypoints, anns, cameras, opts, &report);
    cameras = std::move(rr.cameras);
    keypoints = std::move(rr.keypoints);
    for (const auto& o : rr.outcomes) {
      outcomes.push_back({{"image_id", o.image_id},
                          {"camera_id", o.camera_id},
                          {"shared_keypoints", o.shared_keypoints},
                          {"recovered", o.recovered},
                          {"rms_px", o.rms_px},
                          {"message", o.message}});
    }
  }

  auto branch = multiview::transfer_topology(anns, keypoints, &report);
  branch = multiview::subdivide_curves(branch, anns, cameras, t.n_sub, &report);
  multiview::choose_roots(branch, t.up);
  for (const auto root : branch.roots) branch = multiview::clamp_narrow_baseline(branch, root, cameras, t.clamp_alpha);

  Json kps = Json::array();
  for (const auto& k : keypoints) {
    kps.push_back({{"id", k.id},
                   {"pos", vec_json(k.position)},
                   {"radius", k.radius},
                   {"residual", k.residual},
                   {"observations", k.observations.size()}});
  }
  ctx.write_json("branches.json", io::to_json(branch));
  ctx.write_json("cameras.json", io::cameras_to_json(cameras));
  ctx.write_json("triangulation_report.json",
                 {{"keypoints", kps}, {"reregistration", outcomes}, {"entries", io::to_json(report)}});
}

// ---- skeleton, skin -------------------------------------------------------------

Spec spec_skeleton(const Config& c) {
  return {{c.paths.output / "branches.json"}, {{"samples_per_segment", c.skin.samples_per_segment}}, false};
}

void run_skeleton(Context& ctx) {
  auto branch = io::branch_from_json(io::read_json(ctx.need(ctx.out("branches.json"))));
  if (branch.roots.empty()) multiview::choose_roots(branch, ctx.config.triangulate.up);
  const auto sk = tree::skeleton_from_branches(branch, ctx.config.skin.samples_per_segment, branch.roots.front());
  ctx.write_json("skeleton.json", io::to_json(sk));
}

tree::Skeleton read_skeleton(const Context& ctx) { return io::skeleton_from_json(io::read_json(ctx.need(ctx.out("skeleton.json")))); }

Spec spec_skin(const Config& c) {
  return {{c.paths.output / "skeleton.json"},
          {{"ring_sides", c.skin.options.ring_sides}, {"weld", c.skin.options.weld}},
          false};
}

void run_skin(Context& ctx) { ctx.write_mesh("skin", tree::skin_skeleton(read_skeleton(ctx), ctx.config.skin.options)); }

// ---- displace -----------------------------------------------------------------

Spec spec_displace(const Config& c) {
  const auto& d = c.displace;
  return {{c.paths.output / "skin.obj", c.paths.output / "skin_rig.json", *c.paths.cloud},
          {{"sample_radius", d.sample_radius},
           {"sample_height", d.sample_height},
           {"smooth_iterations", d.smooth_iterations},
           {"smooth_lambda", d.smooth_lambda}},
          false};
}

void run_displace(Context& ctx) {
  const auto& d = ctx.config.displace;
  const auto skin = ctx.read_mesh("skin");
  const auto cloud = io::read_ply(*ctx.config.paths.cloud);
  auto r = tree::displace_mesh(skin, cloud, d.sample_radius, d.sample_height);
  tree::Mesh m = d.smooth_iterations > 0 ? tree::smooth(r.mesh, d.smooth_iterations, d.smooth_lambda) : r.mesh;
  tree::recompute_normals(m);
  ctx.write_mesh("displaced", m);
  Json h = {{"vertices", m.size()}, {"unknown", r.unknown}, {"unanchored", r.unanchored}, {"all_empty", r.all_empty}};
  if (!r.height.empty()) {
    const auto [lo, hi] = std::minmax_element(r.height.begin(), r.height.end());
    double sum = 0;
    for (double x : r.height) sum += x;
    h["height"] = {{"min", *lo}, {"max", *hi}, {"mean", sum / static_cast<double>(r.height.size())}};
  }
  ctx.write_json("displace.json", h);
}

// ---- texture ------------------------------------------------------------------

std::vector<fs::path> texture_images(const Config& c, const std::vector<annotation::ImageAnnotation>& anns) {
  std::vector<fs::path> out;
  if (!c.paths.images) return out;
  for (const auto& a : anns)
    if (auto p = find_image(*c.paths.images, a.image_id)) out.push_back(*p);
  return out;
}

Spec spec_texture(const Config& c) {
  Spec s;
  const auto in = texture_input(c);
  s.inputs = {c.paths.output / (in + ".obj"), c.paths.output / (in + "_rig.json"), c.paths.output / "skeleton.json"};
  if (c.paths.images) {
    s.inputs.push_back(c.paths.output / "cameras.json");
    for (const auto& f : annotation_files(c)) s.inputs.push_back(f);
    for (const auto& f : texture_images(c, load_annotations(c.paths.annotations))) s.inputs.push_back(f);
  }
  if (c.paths.cloud) s.inputs.push_back(*c.paths.cloud);
  s.params = {{"mesh", in}, {"images", c.paths.images.has_value()}, {"cloud_fallback", c.paths.cloud.has_value()}};
  return s;
}

void run_texture(Context& ctx) {
  const auto& c = ctx.config;
  tree::Mesh mesh = ctx.read_mesh(texture_input(c));
  std::vector<char> colored(mesh.size(), 0);
  std::size_t from_images = 0, from_cloud = 0;
  if (c.paths.images) {
    const auto sk = read_skeleton(ctx);
    const auto cameras = io::cameras_from_json(io::read_json(ctx.need(ctx.out("cameras.json"))));
    const auto anns = load_annotations(c.paths.annotations);
    std::map<std::string, Rgb8> images;
    for (const auto& a : anns) {
      if (auto p = find_image(*c.paths.images, a.image_id)) {
        auto img = io::read_image(*p);
        if (img.channels == 3) images.emplace(a.image_id, std::move(img));
      }
    }
    const auto tex = tree::texture_from_images(mesh, sk, anns, cameras, images);
    for (std::size_t i = 0; i < mesh.size(); ++i) {
      if (!tex.colored[i]) continue;
      mesh.colors[i] = tex.colors[i];
      colored[i] = 1;
      ++from_images;
    }
  }
  if (c.paths.cloud && from_images < mesh.size()) {
    const auto cloud = io::read_ply(*c.paths.cloud);
    if (cloud.size() > 0) {
      const auto nearest = tree::texture_nearest(mesh, cloud);
      for (std::size_t i = 0; i < mesh.size(); ++i) {
        if (colored[i]) continue;
        mesh.colors[i] = nearest[i];
        colored[i] = 1;
        ++from_cloud;
      }
    }
  }
  const std::size_t uncolored = mesh.size() - from_images - from_cloud;
  for (std::size_t i = 0; i < mesh.size(); ++i)
    if (!colored[i]) mesh.colors[i] = {128, 128, 128};
  ctx.write_mesh("textured", mesh);
  ctx.write_json("texture.json",
                 {{"vertices", mesh.size()}, {"from_images", from_images}, {"from_cloud", from_cloud}, {"uncolored", uncolored}});
}

// ---- bind ---------------------------------------------------------------------

Spec spec_bind(const Config& c) {
  return {{c.paths.output / "skeleton.json", *c.paths.cloud}, {{"orphan_margin", c.bind.orphan_margin}}, false};
}

void run_bind(Context& ctx) {
  const auto sk = read_skeleton(ctx);
  const auto cloud = io::read_ply(*ctx.config.paths.cloud);
  const auto bindings = tree::bind_orphan_points(cloud, sk);
  tree::PointCloud orphans;
  Json list = Json::array();
  for (std::size_t i = 0; i < bindings.size(); ++i) {
    const auto& b = bindings[i];
    const auto& [p, q] = sk.edges[b.edge];
    const double length = (sk.nodes[q].position - sk.nodes[p].position).norm();
    const double s = length > 0 ? std::clamp(b.local.z() / length, 0.0, 1.0) : 0.0;
    const double radius = std::lerp(sk.nodes[p].radius, sk.nodes[q].radius, s);
    if (b.distance <= radius + ctx.config.bind.orphan_margin) continue;
    orphans.points.push_back(cloud.points[i]);
    orphans.colors.push_back(cloud.colors.empty() ? tree::Rgb{255, 255, 255} : cloud.colors[i]);
    list.push_back({{"point", i}, {"edge", b.edge}, {"local", vec_json(b.local)}, {"distance", b.distance}});
  }
  ctx.write("orphans.ply", io::encode_ply(orphans));
  ctx.write_json("orphan_bindings.json", {{"cloud_points", cloud.size()}, {"orphans", list}});
}

std::vector<tree::PointBinding> orphan_bindings_from_json(const Json& j) {
  std::vector<tree::PointBinding> out;
  for (const auto& e : j.at("orphans")) {
    const auto& l = e.at("local");
    out.push_back({e.at("edge").get<int>(), Vec3(l.at(0).get<double>(), l.at(1).get<double>(), l.at(2).get<double>()),
                   e.at("distance").get<double>()});
  }
  return out;
}

// ---- export -------------------------------------------------------------------

Spec spec_export(const Config& c) {
  Spec s;
  s.inputs = {c.paths.output / "skeleton.json"};
  if (c.paths.pose) {
    const auto m = final_mesh(c);
    s.inputs.push_back(*c.paths.pose);
    s.inputs.push_back(c.paths.output / (m + ".obj"));
    s.inputs.push_back(c.paths.output / (m + "_rig.json"));
    if (stage_enabled(Stage::Bind, c)) {
      s.inputs.push_back(c.paths.output / "orphans.ply");
      s.inputs.push_back(c.paths.output / "orphan_bindings.json");
    }
  }
  s.params = {{"density", c.export_.density}, {"stiffness", c.export_.stiffness}, {"damping", c.export_.damping}};
  return s;
}

void run_export(Context& ctx) {
  const auto& c = ctx.config;
  const auto sk = read_skeleton(ctx);
  ctx.write_json("rigid_bodies.json",
                 io::to_json(tree::export_rigid_bodies(sk, c.export_.density, c.export_.stiffness, c.export_.damping)));
  if (!c.paths.pose) return;
  const auto transforms = io::pose_from_json(io::read_json(*c.paths.pose));
  const auto mesh = ctx.read_mesh(final_mesh(c));
  tree::PointCloud orphans;
  std::vector<tree::PointBinding> bindings;
  if (stage_enabled(Stage::Bind, c)) {
    orphans = io::read_ply(ctx.need(ctx.out("orphans.ply")));
    bindings = orphan_bindings_from_json(io::read_json(ctx.need(ctx.out("orphan_bindings.json"))));
  }
  const auto posed = tree::pose(sk, transforms, mesh, orphans, bindings);
  ctx.write("posed.obj", io::encode_obj(posed.mesh));
  if (stage_enabled(Stage::Bind, c)) ctx.write("posed_orphans.ply", io::encode_ply(posed.cloud));
}

// ---- driver -------------------------------------------------------------------

Spec spec_for(Stage s, const Config& c) {
  switch (s) {
    case Stage::Sync: return spec_sync(c);
    case Stage::Rasterize: return spec_rasterize(c);
    case Stage::Dataset: return spec_dataset(c);
    case Stage::Flow: return spec_flow(c);
    case Stage::Trace: return spec_trace(c);
    case Stage::Triangulate: return spec_triangulate(c);
    case Stage::Skeleton: return spec_skeleton(c);
    case Stage::Skin: return spec_skin(c);
    case Stage::Displace: return spec_displace(c);
    case Stage::Texture: return spec_texture(c);
    case Stage::Bind: return spec_bind(c);
    case Stage::Export: return spec_export(c);
    case Stage::All: break;
  }
  throw Error(Errc::InvalidParams, "no spec for stage");
}

void execute(Stage s, Context& ctx) {
  switch (s) {
    case Stage::Sync: return run_sync(ctx);
    case Stage::Rasterize: return run_rasterize(ctx);
    case Stage::Dataset: return run_dataset(ctx);
    case Stage::Flow: return run_flow(ctx);
    case Stage::Trace: return run_trace(ctx);
    case Stage::Triangulate: return run_triangulate(ctx);
    case Stage::Skeleton: return run_skeleton(ctx);
    case Stage::Skin: return run_skin(ctx);
    case Stage::Displace: return run_displace(ctx);
    case Stage::Texture: return run_texture(ctx);
    case Stage::Bind: return run_bind(ctx);
    case Stage::Export: return run_export(ctx);
    case Stage::All: break;
  }
}

std::string manifest_key(const Config& c, const fs::path& p) {
  return p.lexically_relative(c.paths.base).generic_string();
}

Json hash_inputs(const Config& c, Stage s, const std::vector<fs::path>& inputs) {
  Json h = Json::object();
  for (const auto& p : inputs) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) {
      throw RunError("STAGE_INPUT_MISSING",
                     std::string(to_string(s)) + " needs " + p.string() + "; run the upstream stage first");
    }
    h[manifest_key(c, p)] = io::sha256_file(p);
  }
  return h;
}

bool outputs_intact(const Config& c, const Json& recorded) {
  for (const auto& [rel, hash] : recorded.items()) {
    std::error_code ec;
    const fs::path p = c.paths.output / rel;
    if (!fs::is_regular_file(p, ec) || io::sha256_file(p) != hash.get<std::string>()) return false;
  }
  return true;
}

StageResult run_stage(Stage s, const Config& c, std::uint64_t seed, bool force, Json& manifest) {
  const Spec spec = spec_for(s, c);
  Json entry{{"inputs", hash_inputs(c, s, spec.inputs)}, {"params", spec.params}};
  if (spec.seeded) entry["seed"] = seed;
  const std::string name(to_string(s));
  Json& stages = manifest["stages"];
  if (!force && stages.contains(name)) {
    const Json& old = stages[name];
    const bool same = old.value("inputs", Json()) == entry["inputs"] && old.value("params", Json()) == entry["params"] &&
                      old.value("seed", Json()) == entry.value("seed", Json()) && old.contains("outputs") &&
                      outputs_intact(c, old["outputs"]);
    if (same) {
      std::vector<std::string> outs;
      for (const auto& [rel, h] : old["outputs"].items()) outs.push_back(rel);
      return {s, StageResult::Status::UpToDate, outs};
    }
  }

  Context ctx(c, seed, s);
  execute(s, ctx);
  std::sort(ctx.outputs.begin(), ctx.outputs.end());
  Json outs = Json::object();
  for (const auto& rel : ctx.outputs) outs[rel] = io::sha256_file(c.paths.output / rel);
  if (stages.contains(name) && stages[name].contains("outputs")) {
    for (const auto& [rel, h] : stages[name]["outputs"].items()) {
      if (outs.contains(rel)) continue;
      std::error_code ec;
      fs::remove(c.paths.output / rel, ec);
    }
  }
  entry["outputs"] = outs;
  stages[name] = entry;
  io::write_json(c.paths.output / "manifest.json", manifest);
  return {s, StageResult::Status::Ran, ctx.outputs};
}

}  // namespace

std::string_view to_string(Stage s) noexcept {
  for (const auto& [k, v] : kNames)
    if (k == s) return v;
  return "unknown";
}

std::optional<Stage> stage_from_string(std::string_view s) noexcept {
  for (const auto& [k, v] : kNames)
    if (v == s) return k;
  return std::nullopt;
}

const std::vector<Stage>& stage_order() {
  static const std::vector<Stage> order{Stage::Sync,     Stage::Rasterize, Stage::Dataset,  Stage::Flow,
                                        Stage::Trace,    Stage::Triangulate, Stage::Skeleton, Stage::Skin,
                                        Stage::Displace, Stage::Texture,   Stage::Bind,     Stage::Export};
  return order;
}

bool stage_enabled(Stage s, const Config& c) {
  switch (s) {
    case Stage::Sync: return c.paths.video_a && c.paths.video_b;
    case Stage::Dataset: return c.paths.images.has_value();
    case Stage::Displace:
    case Stage::Bind: return c.paths.cloud.has_value();
    case Stage::Texture: return c.paths.images || c.paths.cloud;
    default: return true;
  }
}

std::vector<StageResult> run(Stage stage, const Config& config, const RunOptions& options) {
  const std::uint64_t seed = options.seed.value_or(config.seed);
  if (stage != Stage::All && !stage_enabled(stage, config)) {
    throw ConfigError("CONFIG_PATH_MISSING", std::string(to_string(stage)) + " needs paths the config does not provide");
  }
  OutputLock lock(config.paths.output);
  Json manifest{{"tool", "arbor"}, {"version", kVersion}, {"stages", Json::object()}};
  const fs::path mpath = config.paths.output / "manifest.json";
  std::error_code ec;
  if (fs::is_regular_file(mpath, ec)) {
    try {
      Json old = io::read_json(mpath);
      if (old.value("version", "") == kVersion && old.contains("stages") && old["stages"].is_object()) {
        manifest["stages"] = old["stages"];
      }
    } catch (const Error&) {
      // A damaged manifest only costs a rerun.
    }
  }

  std::vector<StageResult> results;
  const std::vector<Stage> todo = stage == Stage::All ? stage_order() : std::vector<Stage>{stage};
  for (Stage s : todo) {
    if (!stage_enabled(s, config)) {
      results.push_back({s, StageResult::Status::Skipped, {}});
      continue;
    }
    const std::string name(to_string(s));
    try {
      results.push_back(run_stage(s, config, seed, options.force, manifest));
    } catch (const RunError& e) {
      throw RunError(e.code(), e.what(), name);
    } catch (const Error& e) {
      throw RunError(std::string(to_string(e.code())), e.what(), name);
    } catch (const fs::filesystem_error& e) {
      throw RunError("IO", e.what(), name);
    }
  }
  return results;
}

}  // namespace arbor::pipeline
