#include <omp.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstdlib>
#include <fcntl.h>
#include <set>

#include "arbor/pipeline.hpp"

namespace arbor::pipeline {

namespace {

// Reads keys from one JSON object and complains about the ones nobody asked for.
class Section {
 public:
  Section(const Json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("CONFIG_INVALID", name_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception&) {
      throw ConfigError("CONFIG_INVALID", name_ + "." + key + " has the wrong type");
    }
  }

  const Json* child(const char* key) {
    used_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      (void)v;
      if (!used_.count(k)) throw ConfigError("CONFIG_INVALID", "unknown key " + name_ + "." + k);
    }
  }

 private:
  const Json& j_;
  std::string name_;
  std::set<std::string> used_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("CONFIG_INVALID", what);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path x(p);
  return (x.is_absolute() ? x : base / x).lexically_normal();
}

fs::path existing(const fs::path& base, const std::string& key, const std::string& p, bool directory) {
  const fs::path x = resolve(base, p);
  std::error_code ec;
  const bool ok = directory ? fs::is_directory(x, ec) : fs::is_regular_file(x, ec);
  if (!ok) throw ConfigError("CONFIG_PATH_MISSING", "paths." + key + ": " + x.string() + " does not exist");
  return x;
}

void parse_paths(const Json* j, Paths& p) {
  if (!j) throw ConfigError("CONFIG_PATH_MISSING", "config has no paths section");
  Section s(*j, "paths");
  std::string cameras, annotations, output;
  std::optional<std::string> images, masks, cloud, video_a, video_b, pose;
  s.get("cameras", cameras);
  s.get("annotations", annotations);
  s.get("output", output);
  const auto opt = [&](const char* k, std::optional<std::string>& v) {
    std::string x;
    s.get(k, x);
    if (!x.empty()) v = x;
  };
  opt("images", images);
  opt("masks", masks);
  opt("cloud", cloud);
  opt("video_a", video_a);
  opt("video_b", video_b);
  opt("pose", pose);
  s.finish();
  if (cameras.empty()) throw ConfigError("CONFIG_PATH_MISSING", "paths.cameras is required");
  if (annotations.empty()) throw ConfigError("CONFIG_PATH_MISSING", "paths.annotations is required");
  if (output.empty()) throw ConfigError("CONFIG_PATH_MISSING", "paths.output is required");
  p.cameras = existing(p.base, "cameras", cameras, false);
  p.annotations = existing(p.base, "annotations", annotations, true);
  p.output = resolve(p.base, output);
  if (images) p.images = existing(p.base, "images", *images, true);
  if (masks) p.masks = existing(p.base, "masks", *masks, true);
  if (cloud) p.cloud = existing(p.base, "cloud", *cloud, false);
  if (video_a) p.video_a = existing(p.base, "video_a", *video_a, true);
  if (video_b) p.video_b = existing(p.base, "video_b", *video_b, true);
  if (pose) p.pose = existing(p.base, "pose", *pose, false);
  if (p.video_a.has_value() != p.video_b.has_value()) {
    throw ConfigError("CONFIG_PATH_MISSING", "paths.video_a and paths.video_b must be given together");
  }
}

void apply_flow(const Json& j, Config::Flow& f) {
  Section s(j, "flow");
  s.get("r", f.bank.r);
  s.get("sigma", f.bank.sigma);
  s.get("N", f.bank.N);
  s.get("falloff_radius", f.bank.falloff_radius);
  s.get("count", f.bank.count);
  s.get("clamp_falloff", f.bank.clamp_falloff);
  s.get("scales", f.scales);
  s.get("threshold", f.threshold.value);
  std::string mode = f.threshold.mode == flow::Threshold::Mode::Relative ? "relative" : "absolute";
  s.get("threshold_mode", mode);
  s.get("visualize", f.visualize);
  s.finish();
  require(mode == "relative" || mode == "absolute", "flow.threshold_mode must be relative or absolute");
  f.threshold.mode = mode == "relative" ? flow::Threshold::Mode::Relative : flow::Threshold::Mode::Absolute;
  require(f.bank.r > 0 && f.bank.sigma > 0, "flow.r and flow.sigma must be positive");
  require(f.bank.N >= 3 && f.bank.N % 2 == 1, "flow.N must be odd and at least 3");
  require(f.bank.falloff_radius > 0, "flow.falloff_radius must be positive");
  require(f.bank.count >= 1 && f.bank.count <= 180, "flow.count must lie in [1, 180]");
  require(!f.scales.empty(), "flow.scales must not be empty");
  for (double x : f.scales) require(x > 0 && x <= 1, "flow.scales must lie in (0, 1]");
  require(f.threshold.value >= 0, "flow.threshold must be non-negative");
  require(f.threshold.mode == flow::Threshold::Mode::Absolute || f.threshold.value <= 1,
          "relative flow.threshold must not exceed 1");
}

void apply_trace(const Json& j, medial::TraceParams& t) {
  Section s(j, "trace");
  s.get("step", t.step);
  s.get("cone_deg", t.cone_deg);
  s.get("max_steps", t.max_steps);
  s.get("max_probe", t.max_probe);
  s.get("probe_spacing", t.probe_spacing);
  s.get("max_gap", t.max_gap);
  s.finish();
  try {
    t.check();
  } catch (const Error& e) {
    throw ConfigError("CONFIG_INVALID", std::string("trace: ") + e.what());
  }
}

}  // namespace

Config parse_config(const Json& j, const fs::path& base) {
  if (!j.is_object()) throw ConfigError("CONFIG_INVALID", "config must be a JSON object");
  Config c;
  c.paths.base = base;
  Section top(j, "config");
  parse_paths(top.child("paths"), c.paths);
  top.get("seed", c.seed);

  if (const Json* s = top.child("sync")) {
    Section x(*s, "sync");
    x.get("max_lag", c.sync.max_lag);
    x.get("fps", c.sync.fps);
    x.finish();
    require(c.sync.max_lag >= 0, "sync.max_lag must be non-negative");
    require(c.sync.fps > 0, "sync.fps must be positive");
  }
  if (const Json* s = top.child("dataset")) {
    Section x(*s, "dataset");
    x.get("crop_size", c.dataset.crop_size);
    x.get("crops_per_image", c.dataset.crops_per_image);
    x.get("min_separation", c.dataset.min_separation);
    x.get("clusters", c.dataset.clusters);
    x.finish();
    require(c.dataset.crop_size >= 2, "dataset.crop_size must be at least 2");
    require(c.dataset.crops_per_image >= 0, "dataset.crops_per_image must be non-negative");
    require(c.dataset.min_separation >= 0, "dataset.min_separation must be non-negative");
    require(c.dataset.clusters >= 1, "dataset.clusters must be positive");
  }
  if (const Json* s = top.child("flow")) apply_flow(*s, c.flow);
  if (const Json* s = top.child("trace")) apply_trace(*s, c.trace);
  if (const Json* s = top.child("triangulate")) {
    Section x(*s, "triangulate");
    auto& t = c.triangulate;
    std::vector<double> up{t.up.x(), t.up.y(), t.up.z()};
    x.get("clamp_alpha", t.clamp_alpha);
    x.get("n_sub", t.n_sub);
    x.get("up", up);
    x.get("min_shared", t.reregister.min_shared);
    x.get("max_rms_px", t.reregister.max_rms_px);
    x.get("ransac", t.reregister.pnp.ransac);
    x.get("inlier_threshold_px", t.reregister.pnp.inlier_threshold_px);
    x.finish();
    require(t.clamp_alpha >= 0 && t.clamp_alpha <= 1, "triangulate.clamp_alpha must lie in [0, 1]");
    require(t.n_sub >= 0, "triangulate.n_sub must be non-negative");
    require(up.size() == 3, "triangulate.up needs three components");
    t.up = Vec3(up[0], up[1], up[2]);
    require(t.up.norm() > 0, "triangulate.up must be non-zero");
    t.up.normalize();
    require(t.reregister.min_shared >= 6, "triangulate.min_shared must be at least 6");
    require(t.reregister.max_rms_px > 0, "triangulate.max_rms_px must be positive");
  }
  if (const Json* s = top.child("skin")) {
    Section x(*s, "skin");
    x.get("samples_per_segment", c.skin.samples_per_segment);
    x.get("ring_sides", c.skin.options.ring_sides);
    x.get("weld", c.skin.options.weld);
    x.finish();
    require(c.skin.samples_per_segment >= 1, "skin.samples_per_segment must be positive");
    require(c.skin.options.ring_sides >= 3, "skin.ring_sides must be at least 3");
  }
  if (const Json* s = top.child("displace")) {
    Section x(*s, "displace");
    x.get("sample_radius", c.displace.sample_radius);
    x.get("sample_height", c.displace.sample_height);
    x.get("smooth_iterations", c.displace.smooth_iterations);
    x.get("smooth_lambda", c.displace.smooth_lambda);
    x.finish();
    require(c.displace.sample_radius > 0 && c.displace.sample_height > 0,
            "displace.sample_radius and displace.sample_height must be positive");
    require(c.displace.smooth_iterations >= 0, "displace.smooth_iterations must be non-negative");
    require(c.displace.smooth_lambda > 0 && c.displace.smooth_lambda <= 1, "displace.smooth_lambda must lie in (0, 1]");
  }
  if (const Json* s = top.child("bind")) {
    Section x(*s, "bind");
    x.get("orphan_margin", c.bind.orphan_margin);
    x.finish();
    require(c.bind.orphan_margin >= 0, "bind.orphan_margin must be non-negative");
  }
  if (const Json* s = top.child("export")) {
    Section x(*s, "export");
    x.get("density", c.export_.density);
    x.get("stiffness", c.export_.stiffness);
    x.get("damping", c.export_.damping);
    x.finish();
    require(c.export_.density > 0, "export.density must be positive");
    require(c.export_.stiffness >= 0 && c.export_.damping >= 0, "export.stiffness and export.damping must be non-negative");
  }
  top.finish();
  return c;
}

Config load_config(const fs::path& file) {
  std::error_code ec;
  if (!fs::is_regular_file(file, ec)) throw ConfigError("CONFIG_PATH_MISSING", "config file " + file.string() + " does not exist");
  Json j;
  try {
    j = Json::parse(io::read_text(file));
  } catch (const Json::exception& e) {
    throw ConfigError("CONFIG_PARSE", file.string() + ": " + e.what());
  }
  return parse_config(j, fs::absolute(file).parent_path());
}

Json to_json(const Config::Flow& f) {
  return {{"r", f.bank.r},
          {"sigma", f.bank.sigma},
          {"N", f.bank.N},
          {"falloff_radius", f.bank.falloff_radius},
          {"count", f.bank.count},
          {"clamp_falloff", f.bank.clamp_falloff},
          {"scales", f.scales},
          {"threshold", f.threshold.value},
          {"threshold_mode", f.threshold.mode == flow::Threshold::Mode::Relative ? "relative" : "absolute"},
          {"visualize", f.visualize}};
}

Config::Flow flow_params_from_json(const Json& j, const Config::Flow& defaults) {
  Config::Flow f = defaults;
  apply_flow(j, f);
  return f;
}

std::string flow_params_hash(const Config::Flow& params) {
  Json j = to_json(params);
  j.erase("visualize");
  return io::sha256_hex(j.dump());
}

Json to_json(const medial::TraceParams& t) {
  return {{"step", t.step},           {"cone_deg", t.cone_deg},           {"max_steps", t.max_steps},
          {"max_probe", t.max_probe}, {"probe_spacing", t.probe_spacing}, {"max_gap", t.max_gap}};
}

medial::TraceParams trace_params_from_json(const Json& j, const medial::TraceParams& defaults) {
  medial::TraceParams t = defaults;
  apply_trace(j, t);
  return t;
}

void apply_thread_limit() {
  const char* v = std::getenv("ARBOR_THREADS");
  if (!v || !*v) return;
  char* end = nullptr;
  errno = 0;
  const long n = std::strtol(v, &end, 10);
  if (errno || *end || n < 1 || n > 4096) {
    throw ConfigError("CONFIG_INVALID", std::string("ARBOR_THREADS must be a positive integer, got '") + v + "'");
  }
  omp_set_num_threads(static_cast<int>(n));
}

Json error_json(std::string_view code, std::string_view message, std::string_view stage) {
  return {{"error", {{"code", code}, {"message", message}, {"stage", stage}}}};
}

OutputLock::OutputLock(const fs::path& dir) : path_(dir / ".arbor.lock") {
  fs::create_directories(dir);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0644);
    if (fd >= 0) {
      const std::string pid = std::to_string(::getpid()) + "\n";
      const bool ok = ::write(fd, pid.data(), pid.size()) == static_cast<ssize_t>(pid.size());
      ::close(fd);
      if (!ok) throw RunError("IO", "cannot write " + path_.string());
      return;
    }
    if (errno != EEXIST) throw RunError("IO", "cannot create " + path_.string());
    long holder = 0;
    try {
      holder = std::stol(io::read_text(path_));
    } catch (const std::exception&) {
      holder = 0;
    }
    const bool alive = holder > 0 && (::kill(static_cast<pid_t>(holder), 0) == 0 || errno == EPERM);
    if (alive) {
      throw RunError("LOCKED", "output directory is in use by process " + std::to_string(holder));
    }
    std::error_code ec;
    fs::remove(path_, ec);
  }
  throw RunError("LOCKED", "could not take over stale lock " + path_.string());
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

std::vector<annotation::ImageAnnotation> load_annotations(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<annotation::ImageAnnotation> out;
  std::set<std::string> ids;
  for (const auto& f : files) {
    out.push_back(io::annotation_from_json(io::read_json(f)));
    if (!ids.insert(out.back().image_id).second) {
      throw Error(Errc::Parse, "image id " + out.back().image_id + " appears in more than one annotation file");
    }
  }
  return out;
}

std::optional<fs::path> find_image(const fs::path& dir, const std::string& image_id) {
  for (const char* ext : {".png", ".jpg", ".jpeg"}) {
    const fs::path p = dir / (image_id + ext);
    std::error_code ec;
    if (fs::is_regular_file(p, ec)) return p;
  }
  return std::nullopt;
}

GrayF load_mask(const fs::path& file) {
  const Gray8 b = binarize(io::read_image(file));
  GrayF m(b.width, b.height, 1, 0.0f);
  for (std::size_t i = 0; i < b.data.size(); ++i) m.data[i] = b.data[i] ? 1.0f : 0.0f;
  return m;
}

}  // namespace arbor::pipeline
