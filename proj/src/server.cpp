#include "arbor/server.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace arbor::server {

namespace {

std::vector<fs::path> json_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

Json violation_json(const annotation::Violation& v) {
  Json j{{"rule", annotation::to_string(v.rule)}, {"message", v.message}};
  if (v.vertex) j["vertex"] = *v.vertex;
  if (v.edge) j["edge"] = {v.edge->first, v.edge->second};
  return j;
}

Vec2 point_json(const Json& j, const char* name) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw pipeline::ConfigError("BAD_REQUEST", std::string(name) + " must be [x, y]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

std::string content_type_for(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" ? "image/png" : "image/jpeg";
}

}  // namespace

Response Response::error(int status, std::string_view code, std::string_view message) {
  return json(status, {{"error", {{"code", code}, {"message", message}}}});
}

// ---- store ----------------------------------------------------------------------

AnnotationStore::AnnotationStore(const pipeline::Config& config) : config_(config) {
  const fs::path registered = config_.paths.output / "cameras.json";
  std::error_code ec;
  cameras_ = io::cameras_from_json(io::read_json(fs::is_regular_file(registered, ec) ? registered : config_.paths.cameras));

  const auto slot = [&](const std::string& id) -> Entry& {
    auto& s = entries_[id];
    if (!s) s = std::make_unique<Slot>();
    return s->entry;
  };
  for (const auto& f : json_files(config_.paths.annotations)) {
    auto doc = io::annotation_from_json(io::read_json(f));
    Entry& e = slot(doc.image_id);
    if (e.document) throw Error(Errc::Parse, "image id " + doc.image_id + " appears in more than one annotation file");
    e.document_path = f;
    e.document = std::move(doc);
    e.version = 1;
  }
  if (config_.paths.images) {
    for (const auto& d : fs::directory_iterator(*config_.paths.images)) {
      if (!d.is_regular_file()) continue;
      const std::string id = d.path().stem().string();
      if (auto p = pipeline::find_image(*config_.paths.images, id); p && *p == d.path()) slot(id).image = *p;
    }
  }
  for (const auto& [id, s] : entries_) compute_locks_.emplace(id, std::make_unique<std::mutex>());

  const fs::path branches = config_.paths.output / "branches.json";
  if (fs::is_regular_file(branches, ec)) {
    model_ = std::make_shared<multiview::Branch3D>(io::branch_from_json(io::read_json(branches)));
  }
}

std::vector<std::string> AnnotationStore::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, s] : entries_) out.push_back(id);
  return out;
}

AnnotationStore::Snapshot AnnotationStore::snapshot(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw Error(Errc::UnknownId, "unknown image " + id);
  std::lock_guard lock(it->second->mutex);
  const Entry& e = it->second->entry;
  return {e.document, e.version, e.image};
}

AnnotationStore::PutResult AnnotationStore::put(const std::string& id, const annotation::ImageAnnotation& doc,
                                                std::uint64_t expected_version) {
  auto it = entries_.find(id);
  if (it == entries_.end()) return {PutStatus::Unknown, 0, {}};
  std::lock_guard lock(it->second->mutex);
  Entry& e = it->second->entry;
  if (expected_version != e.version) return {PutStatus::Stale, e.version, {}};
  auto violations = annotation::validate(doc);
  if (!violations.empty()) return {PutStatus::Invalid, e.version, std::move(violations)};
  const fs::path path = e.document_path.value_or(config_.paths.annotations / (id + ".json"));
  io::write_json(path, io::to_json(doc));
  e.document_path = path;
  e.document = doc;
  ++e.version;
  return {PutStatus::Ok, e.version, {}};
}

std::shared_ptr<const multiview::Branch3D> AnnotationStore::model() const {
  std::lock_guard lock(model_mutex_);
  return model_;
}

void AnnotationStore::set_model(std::shared_ptr<const multiview::Branch3D> model) {
  std::lock_guard lock(model_mutex_);
  model_ = std::move(model);
}

GrayF AnnotationStore::mask_for(const std::string& id) const {
  std::vector<fs::path> candidates;
  if (config_.paths.masks) candidates.push_back(*config_.paths.masks / (id + ".png"));
  candidates.push_back(config_.paths.output / "masks" / (id + ".png"));
  for (const auto& p : candidates) {
    std::error_code ec;
    if (fs::is_regular_file(p, ec)) return pipeline::load_mask(p);
  }
  const auto snap = snapshot(id);
  if (!snap.document) throw Error(Errc::EmptyMask, "image " + id + " has neither a mask nor an annotation");
  const Gray8 m = annotation::rasterize_mask(*snap.document);
  GrayF f(m.width, m.height, 1, 0.0f);
  for (std::size_t i = 0; i < m.data.size(); ++i) f.data[i] = m.data[i] ? 1.0f : 0.0f;
  return f;
}

std::shared_ptr<const flow::FlowField> AnnotationStore::flow(const std::string& id, const pipeline::Config::Flow& params) {
  if (!contains(id)) throw Error(Errc::UnknownId, "unknown image " + id);
  const GrayF mask = mask_for(id);
  std::string bytes(mask.data.size() + 8, '\0');
  for (std::size_t i = 0; i < mask.data.size(); ++i) bytes[i] = mask.data[i] >= 0.5f ? '1' : '0';
  std::memcpy(bytes.data() + mask.data.size(), &mask.width, 4);
  std::memcpy(bytes.data() + mask.data.size() + 4, &mask.height, 4);
  const std::string key = id + "_" + io::sha256_hex(pipeline::flow_params_hash(params) + io::sha256_hex(bytes)).substr(0, 16);

  std::mutex* compute = nullptr;
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) {
      ++stats_.hits;
      return it->second;
    }
    compute = compute_locks_.at(id).get();
  }
  std::lock_guard busy(*compute);
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) {
      ++stats_.hits;
      return it->second;
    }
  }
  const fs::path file = config_.paths.output / "flow_cache" / (key + ".ffld");
  std::shared_ptr<const flow::FlowField> field;
  bool from_disk = false;
  std::error_code ec;
  if (fs::is_regular_file(file, ec)) {
    try {
      field = std::make_shared<flow::FlowField>(io::decode_flow(io::read_bytes(file)));
      from_disk = field->width == mask.width && field->height == mask.height;
    } catch (const Error&) {
      from_disk = false;
    }
  }
  if (!from_disk) {
    field = std::make_shared<flow::FlowField>(flow::compute_flow(mask, params.bank, params.threshold, params.scales));
    io::write_atomic(file, io::encode_flow(*field));
  }
  std::lock_guard lock(cache_mutex_);
  ++stats_.misses;
  if (from_disk) ++stats_.disk_loads;
  cache_.emplace(key, field);
  return field;
}

AnnotationStore::CacheStats AnnotationStore::cache_stats() const {
  std::lock_guard lock(cache_mutex_);
  return stats_;
}

// ---- projection -------------------------------------------------------------------

std::vector<OverlaySegment> project_model(const multiview::Branch3D& model, const Camera& camera) {
  std::vector<OverlaySegment> out;
  const double f = std::sqrt(camera.intrinsics.fx * camera.intrinsics.fy);
  for (const auto& [ia, ib] : model.edges) {
    const auto* a = model.find(ia);
    const auto* b = model.find(ib);
    if (!a || !b) throw Error(Errc::UnknownId, "model edge references a missing vertex");
    const double za = camera.to_camera(a->position).z();
    const double zb = camera.to_camera(b->position).z();
    if (za < kNearDepth && zb < kNearDepth) continue;
    Vec3 pa = a->position, pb = b->position;
    double ra = a->thickness, rb = b->thickness;
    if (za < kNearDepth || zb < kNearDepth) {
      const double t = (kNearDepth - za) / (zb - za);
      const Vec3 cut = pa + t * (pb - pa);
      const double rc = std::lerp(ra, rb, t);
      if (za < kNearDepth) {
        pa = cut;
        ra = rc;
      } else {
        pb = cut;
        rb = rc;
      }
    }
    OverlaySegment s{ia, ib, {}, {}};
    for (const auto& [p, r] : {std::pair{pa, ra}, std::pair{pb, rb}}) {
      s.points.push_back(project(camera, p));
      s.thickness.push_back(f * r / camera.to_camera(p).z());
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---- handlers -----------------------------------------------------------------------

Response Service::list_images() const {
  Json a = Json::array();
  for (const auto& id : store_.ids()) {
    const auto s = store_.snapshot(id);
    Json e{{"id", id}, {"version", s.version}, {"has_image", s.image.has_value()}, {"has_document", s.document.has_value()}};
    if (s.document) {
      e["camera_id"] = s.document->camera_id;
      e["width"] = s.document->width;
      e["height"] = s.document->height;
    }
    a.push_back(std::move(e));
  }
  return Response::json(200, a);
}

Response Service::get_image(const std::string& id) const {
  if (!store_.contains(id)) return Response::error(404, "UnknownId", "unknown image " + id);
  const auto s = store_.snapshot(id);
  if (!s.image) return Response::error(404, "NoImage", "no image file for " + id);
  const auto bytes = io::read_bytes(*s.image);
  return {200, content_type_for(*s.image), std::string(bytes.begin(), bytes.end())};
}

Response Service::get_annotation(const std::string& id) const {
  if (!store_.contains(id)) return Response::error(404, "UnknownId", "unknown image " + id);
  const auto s = store_.snapshot(id);
  return Response::json(200, {{"id", id}, {"version", s.version}, {"document", s.document ? io::to_json(*s.document) : Json()}});
}

Response Service::put_annotation(const std::string& id, const std::string& body) {
  if (!store_.contains(id)) return Response::error(404, "UnknownId", "unknown image " + id);
  Json j;
  try {
    j = Json::parse(body);
  } catch (const Json::exception& e) {
    return Response::error(400, "BAD_REQUEST", e.what());
  }
  if (!j.is_object() || !j.contains("version") || !j["version"].is_number_unsigned() || !j.contains("document")) {
    return Response::error(400, "BAD_REQUEST", "body must be {\"version\": n, \"document\": {...}}");
  }
  annotation::ImageAnnotation doc;
  try {
    doc = io::annotation_from_json(j["document"]);
  } catch (const Error& e) {
    return Response::error(400, "BAD_REQUEST", e.what());
  }
  if (doc.image_id != id) return Response::error(422, "IdMismatch", "document image_id differs from " + id);
  const auto r = store_.put(id, doc, j["version"].get<std::uint64_t>());
  switch (r.status) {
    case AnnotationStore::PutStatus::Ok: return Response::json(200, {{"id", id}, {"version", r.version}});
    case AnnotationStore::PutStatus::Stale:
      return Response::json(409, {{"error", {{"code", "StaleVersion"}, {"message", "document changed since it was read"}}},
                                  {"current_version", r.version}});
    case AnnotationStore::PutStatus::Invalid: {
      Json v = Json::array();
      for (const auto& x : r.violations) v.push_back(violation_json(x));
      return Response::json(422, {{"error", {{"code", "InvalidAnnotation"}, {"message", "document failed validation"}}},
                                  {"violations", v}});
    }
    case AnnotationStore::PutStatus::Unknown: break;
  }
  return Response::error(404, "UnknownId", "unknown image " + id);
}

Response Service::get_epipolar(const std::string& pair, double x, double y) const {
  const auto comma = pair.find(',');
  if (comma == std::string::npos) return Response::error(400, "BAD_REQUEST", "pair must be <from>,<to>");
  const std::string from = pair.substr(0, comma), to = pair.substr(comma + 1);
  const Camera* cams[2] = {nullptr, nullptr};
  for (int k = 0; k < 2; ++k) {
    const std::string& id = k ? to : from;
    if (!store_.contains(id)) return Response::error(404, "UnknownId", "unknown image " + id);
    const auto s = store_.snapshot(id);
    if (!s.document) return Response::error(404, "UnknownCamera", "image " + id + " has no document naming its camera");
    auto it = store_.cameras().find(s.document->camera_id);
    if (it == store_.cameras().end()) return Response::error(404, "UnknownCamera", "unknown camera " + s.document->camera_id);
    if (!it->second.aligned) return Response::error(422, "NotAligned", "camera " + it->first + " is not aligned");
    cams[k] = &it->second;
  }
  try {
    const Vec3 l = epipolar_line(fundamental_matrix(*cams[0], *cams[1]), Vec2(x, y));
    return Response::json(200, {{"from", from}, {"to", to}, {"point", {x, y}}, {"line", {l.x(), l.y(), l.z()}}});
  } catch (const Error& e) {
    return Response::error(422, to_string(e.code()), e.what());
  }
}

Response Service::post_trace(const std::string& id, const std::string& body) {
  if (!store_.contains(id)) return Response::error(404, "UnknownId", "unknown image " + id);
  Vec2 p0;
  std::optional<Vec2> p1;
  medial::TraceParams params = store_.config().trace;
  pipeline::Config::Flow flow_params = store_.config().flow;
  try {
    const Json j = Json::parse(body);
    if (!j.is_object() || !j.contains("p0")) return Response::error(400, "BAD_REQUEST", "body needs p0");
    p0 = point_json(j["p0"], "p0");
    if (j.contains("p1") && !j["p1"].is_null()) p1 = point_json(j["p1"], "p1");
    if (j.contains("params")) {
      Json p = j["params"];
      if (!p.is_object()) return Response::error(400, "BAD_REQUEST", "params must be an object");
      if (p.contains("flow")) {
        flow_params = pipeline::flow_params_from_json(p["flow"], flow_params);
        p.erase("flow");
      }
      params = pipeline::trace_params_from_json(p, params);
    }
  } catch (const Json::exception& e) {
    return Response::error(400, "BAD_REQUEST", e.what());
  } catch (const pipeline::ConfigError& e) {
    return Response::error(400, "BAD_REQUEST", e.what());
  }
  try {
    const auto field = store_.flow(id, flow_params);
    return Response::json(200, io::to_json(medial::trace(*field, p0, p1, params)));
  } catch (const Error& e) {
    return Response::error(e.code() == Errc::EmptyMask ? 409 : 422, to_string(e.code()), e.what());
  }
}

Response Service::get_flow(const std::string& id) {
  if (!store_.contains(id)) return Response::error(404, "UnknownId", "unknown image " + id);
  try {
    const auto bytes = io::encode_flow(*store_.flow(id, store_.config().flow));
    return {200, "application/octet-stream", std::string(bytes.begin(), bytes.end())};
  } catch (const Error& e) {
    return Response::error(409, to_string(e.code()), e.what());
  }
}

Response Service::get_overlay(const std::string& id) const {
  if (!store_.contains(id)) return Response::error(404, "UnknownId", "unknown image " + id);
  const auto model = store_.model();
  if (!model || model->vertices.empty()) return Response::error(409, "NoModel", "no 3D model has been built yet");
  const auto s = store_.snapshot(id);
  if (!s.document) return Response::error(404, "UnknownCamera", "image " + id + " has no document naming its camera");
  auto it = store_.cameras().find(s.document->camera_id);
  if (it == store_.cameras().end()) return Response::error(404, "UnknownCamera", "unknown camera " + s.document->camera_id);
  Json segs = Json::array();
  for (const auto& seg : project_model(*model, it->second)) {
    Json pts = Json::array();
    for (const auto& p : seg.points) pts.push_back({p.x(), p.y()});
    segs.push_back({{"from", seg.from}, {"to", seg.to}, {"points", pts}, {"thickness", seg.thickness}});
  }
  return Response::json(200, {{"image_id", id}, {"camera_id", it->first}, {"segments", segs}});
}

}  // namespace arbor::server
