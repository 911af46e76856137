#include <doctest.h>

#include <thread>

#include "arbor/server.hpp"
#include "arbor/synthetic.hpp"
#include "synth.hpp"

// After Eigen (see src/server_http.cpp).
#include <httplib.h>

using namespace arbor;
using namespace arbor::server;
using annotation::ImageAnnotation;
using annotation::Vertex;

namespace {

ImageAnnotation band_doc() {
  ImageAnnotation a;
  a.image_id = "band";
  a.camera_id = "c0";
  a.width = 120;
  a.height = 60;
  a.vertices = {{1, 10, 30, 4, "left"}, {2, 60, 30, 4, {}}, {3, 110, 30, 4, "right"}};
  a.edges = {{1, 2}, {2, 3}};
  return a;
}

ImageAnnotation side_doc() {
  ImageAnnotation a;
  a.image_id = "side";
  a.camera_id = "c1";
  a.width = 120;
  a.height = 60;
  a.vertices = {{1, 20, 20, 3, {}}, {2, 90, 40, 3, {}}};
  a.edges = {{1, 2}};
  return a;
}

ImageAnnotation loose_doc() {
  ImageAnnotation a = side_doc();
  a.image_id = "loose";
  a.camera_id = "cx";
  return a;
}

GrayF to_float(const Gray8& m) {
  GrayF f(m.width, m.height, 1, 0.0f);
  for (std::size_t i = 0; i < m.data.size(); ++i) f.data[i] = m.data[i] ? 1.0f : 0.0f;
  return f;
}

struct Scene {
  synth::TempDir dir{"arbor_server_"};
  pipeline::Config config;
  multiview::CameraMap cameras;

  Scene() {
    const auto& d = dir.path;
    cameras["c0"] = synthetic::look_at("c0", {0, -4, 0}, {0, 0, 0}, 100, 120, 60);
    cameras["c1"] = synthetic::look_at("c1", {3, -3, 0.5}, {0, 0, 0}, 100, 120, 60);
    cameras["cx"] = synthetic::look_at("cx", {-3, -3, 0}, {0, 0, 0}, 100, 120, 60);
    cameras["cx"].aligned = false;
    io::write_json(d / "cameras.json", io::cameras_to_json(cameras));
    fs::create_directories(d / "annotations");
    fs::create_directories(d / "images");
    for (const auto& a : {band_doc(), side_doc(), loose_doc()}) io::write_json(d / "annotations" / (a.image_id + ".json"), io::to_json(a));
    Gray8 img(16, 8, 1, 77);
    io::write_png(d / "images" / "band.png", img);
    io::write_png(d / "images" / "blank.png", img);
    config = pipeline::parse_config({{"paths", {{"cameras", "cameras.json"}, {"annotations", "annotations"}, {"images", "images"}, {"output", "out"}}}}, d);
  }
};

Json body_of(const Response& r) { return Json::parse(r.body); }

}  // namespace

TEST_CASE("store registers documents and image-only entries") {
  Scene s;
  AnnotationStore store(s.config);
  CHECK(store.ids() == std::vector<std::string>{"band", "blank", "loose", "side"});
  CHECK(store.snapshot("band").version == 1);
  CHECK(store.snapshot("band").image.has_value());
  CHECK(store.snapshot("blank").version == 0);
  CHECK_FALSE(store.snapshot("blank").document.has_value());
  CHECK_FALSE(store.snapshot("side").image.has_value());

  Service svc(store);
  const auto list = body_of(svc.list_images());
  REQUIRE(list.size() == 4);
  CHECK(list[0]["id"] == "band");
  CHECK(list[0]["camera_id"] == "c0");
  CHECK(list[1]["has_document"] == false);
}

TEST_CASE("get_image returns the file bytes") {
  Scene s;
  AnnotationStore store(s.config);
  Service svc(store);
  const auto r = svc.get_image("band");
  CHECK(r.status == 200);
  CHECK(r.content_type == "image/png");
  const auto bytes = io::read_bytes(s.dir.path / "images" / "band.png");
  CHECK(r.body == std::string(bytes.begin(), bytes.end()));
  CHECK(svc.get_image("side").status == 404);
  CHECK(svc.get_image("nope").status == 404);
}

TEST_CASE("put_annotation versions, conflicts and validation") {
  Scene s;
  AnnotationStore store(s.config);
  Service svc(store);
  auto doc = band_doc();
  doc.vertices[1].y = 31;

  SUBCASE("valid document at the current version") {
    const auto r = svc.put_annotation("band", Json{{"version", 1}, {"document", io::to_json(doc)}}.dump());
    CHECK(r.status == 200);
    CHECK(body_of(r)["version"] == 2);
    CHECK(body_of(svc.get_annotation("band"))["version"] == 2);
    const auto on_disk = io::annotation_from_json(io::read_json(s.dir.path / "annotations" / "band.json"));
    CHECK(on_disk.vertices[1].y == 31);
  }

  SUBCASE("stale version leaves the stored document alone") {
    REQUIRE(svc.put_annotation("band", Json{{"version", 1}, {"document", io::to_json(doc)}}.dump()).status == 200);
    const std::string before = svc.get_annotation("band").body;
    const auto disk_before = io::read_text(s.dir.path / "annotations" / "band.json");
    auto other = band_doc();
    other.vertices[0].x = 12;
    const auto r = svc.put_annotation("band", Json{{"version", 1}, {"document", io::to_json(other)}}.dump());
    CHECK(r.status == 409);
    CHECK(body_of(r)["error"]["code"] == "StaleVersion");
    CHECK(body_of(r)["current_version"] == 2);
    CHECK(svc.get_annotation("band").body == before);
    CHECK(io::read_text(s.dir.path / "annotations" / "band.json") == disk_before);
  }

  SUBCASE("degree-4 vertex") {
    ImageAnnotation star = band_doc();
    star.vertices = {{0, 60, 30, 3, {}}, {1, 40, 30, 3, {}}, {2, 80, 30, 3, {}}, {3, 60, 10, 3, {}}, {4, 60, 50, 3, {}}};
    star.edges = {{0, 1}, {0, 2}, {0, 3}, {0, 4}};
    const auto r = svc.put_annotation("band", Json{{"version", 1}, {"document", io::to_json(star)}}.dump());
    CHECK(r.status == 422);
    const auto j = body_of(r);
    CHECK(j["error"]["code"] == "InvalidAnnotation");
    bool degree = false;
    for (const auto& v : j["violations"]) degree = degree || (v["rule"] == "DegreeViolation" && v["vertex"] == 0);
    CHECK(degree);
    CHECK(store.snapshot("band").version == 1);
  }

  SUBCASE("first document for an image-only entry") {
    auto fresh = band_doc();
    fresh.image_id = "blank";
    const auto r = svc.put_annotation("blank", Json{{"version", 0}, {"document", io::to_json(fresh)}}.dump());
    CHECK(r.status == 200);
    CHECK(body_of(r)["version"] == 1);
    CHECK(fs::is_regular_file(s.dir.path / "annotations" / "blank.json"));
  }

  SUBCASE("malformed requests") {
    CHECK(svc.put_annotation("band", "{").status == 400);
    CHECK(svc.put_annotation("band", Json{{"document", io::to_json(doc)}}.dump()).status == 400);
    CHECK(svc.put_annotation("band", Json{{"version", -1}, {"document", io::to_json(doc)}}.dump()).status == 400);
    CHECK(svc.put_annotation("side", Json{{"version", 1}, {"document", io::to_json(doc)}}.dump()).status == 422);
    CHECK(svc.put_annotation("nope", Json{{"version", 1}, {"document", io::to_json(doc)}}.dump()).status == 404);
  }
}

TEST_CASE("concurrent writers to one image: exactly one wins per version") {
  Scene s;
  AnnotationStore store(s.config);
  Service svc(store);
  constexpr int kThreads = 8;
  std::vector<int> status(kThreads);
  std::vector<std::thread> ts;
  for (int i = 0; i < kThreads; ++i) {
    ts.emplace_back([&, i] {
      auto d = band_doc();
      d.vertices[1].y = 30 + i * 0.1;
      status[i] = svc.put_annotation("band", Json{{"version", 1}, {"document", io::to_json(d)}}.dump()).status;
    });
  }
  for (auto& t : ts) t.join();
  CHECK(std::count(status.begin(), status.end(), 200) == 1);
  CHECK(std::count(status.begin(), status.end(), 409) == kThreads - 1);
  CHECK(store.snapshot("band").version == 2);
}

TEST_CASE("trace matches the library call and is served from cache") {
  Scene s;
  AnnotationStore store(s.config);
  Service svc(store);
  const std::string req = Json{{"p0", {12, 30}}, {"p1", {108, 30}}}.dump();
  const auto r = svc.post_trace("band", req);
  REQUIRE(r.status == 200);

  const auto& fp = s.config.flow;
  const auto field = flow::compute_flow(to_float(annotation::rasterize_mask(band_doc())), fp.bank, fp.threshold, fp.scales);
  const auto direct = medial::trace(field, {12, 30}, Vec2(108, 30), s.config.trace);
  CHECK(r.body == io::to_json(direct).dump());
  CHECK(direct.points.size() > 10);

  auto st = store.cache_stats();
  CHECK(st.misses == 1);
  CHECK(st.hits == 0);
  const auto again = svc.post_trace("band", req);
  CHECK(again.body == r.body);
  st = store.cache_stats();
  CHECK(st.misses == 1);
  CHECK(st.hits == 1);

  // The field was written to disk; a new store loads it instead of recomputing.
  AnnotationStore reopened(s.config);
  Service svc2(reopened);
  CHECK(svc2.post_trace("band", req).body == r.body);
  CHECK(reopened.cache_stats().disk_loads == 1);

  // Different parameters are a different cache entry.
  const auto other = svc.post_trace("band", Json{{"p0", {12, 30}}, {"params", {{"flow", {{"scales", {1.0}}}}}}}.dump());
  CHECK(other.status == 200);
  CHECK(store.cache_stats().misses == 2);
}

TEST_CASE("trace errors") {
  Scene s;
  AnnotationStore store(s.config);
  Service svc(store);
  const auto empty = svc.post_trace("band", Json{{"p0", {5, 5}}}.dump());
  CHECK(empty.status == 422);
  CHECK(body_of(empty)["error"]["code"] == "NoFlowAtStart");
  CHECK(svc.post_trace("nope", Json{{"p0", {5, 5}}}.dump()).status == 404);
  CHECK(svc.post_trace("blank", Json{{"p0", {5, 5}}}.dump()).status == 409);
  CHECK(svc.post_trace("band", Json{{"p1", {5, 5}}}.dump()).status == 400);
  CHECK(svc.post_trace("band", Json{{"p0", {5}}}.dump()).status == 400);
  CHECK(svc.post_trace("band", Json{{"p0", {12, 30}}, {"params", {{"cone_deg", 120}}}}.dump()).status == 400);
  CHECK(svc.post_trace("band", Json{{"p0", {12, 30}}, {"params", {{"bogus", 1}}}}.dump()).status == 400);
}

TEST_CASE("get_flow serves FFLD bytes") {
  Scene s;
  AnnotationStore store(s.config);
  Service svc(store);
  const auto r = svc.get_flow("band");
  REQUIRE(r.status == 200);
  CHECK(r.content_type == "application/octet-stream");
  const auto f = io::decode_flow(io::Bytes(r.body.begin(), r.body.end()));
  CHECK(f.width == 120);
  CHECK(f.height == 60);
  CHECK(svc.get_flow("blank").status == 409);
}

TEST_CASE("epipolar line through the partner view") {
  Scene s;
  AnnotationStore store(s.config);
  Service svc(store);
  const Vec3 X(0.2, 0.1, -0.15);
  const Vec2 x0 = project(s.cameras["c0"], X);
  const Vec2 x1 = project(s.cameras["c1"], X);
  const auto r = svc.get_epipolar("band,side", x0.x(), x0.y());
  REQUIRE(r.status == 200);
  const auto j = body_of(r);
  const Vec3 l(j["line"][0], j["line"][1], j["line"][2]);
  CHECK(std::abs(l.x() * x1.x() + l.y() * x1.y() + l.z()) < 1e-9);
  CHECK(std::hypot(l.x(), l.y()) == doctest::Approx(1));

  CHECK(svc.get_epipolar("band,nope", 1, 1).status == 404);
  CHECK(svc.get_epipolar("band,blank", 1, 1).status == 404);
  CHECK(svc.get_epipolar("band", 1, 1).status == 400);
  const auto na = svc.get_epipolar("band,loose", 1, 1);
  CHECK(na.status == 422);
  CHECK(body_of(na)["error"]["code"] == "NotAligned");
}

TEST_CASE("overlay is the projected model") {
  Scene s;
  AnnotationStore store(s.config);
  Service svc(store);
  CHECK(svc.get_overlay("band").status == 409);
  store.set_model(std::make_shared<multiview::Branch3D>());
  CHECK(svc.get_overlay("band").status == 409);

  const auto& cam = s.cameras["c0"];
  auto model = std::make_shared<multiview::Branch3D>(synth::segment_branch({-0.5, 0, 0}, {0.5, 0.2, 0.3}, 0.05, 0.03));
  store.set_model(model);
  const auto r = svc.get_overlay("band");
  REQUIRE(r.status == 200);
  const auto j = body_of(r);
  CHECK(j["camera_id"] == "c0");
  REQUIRE(j["segments"].size() == 1);
  const auto& seg = j["segments"][0];
  for (int k = 0; k < 2; ++k) {
    const auto& v = model->vertices[k];
    const Vec2 p = project(cam, v.position);
    CHECK(std::abs(seg["points"][k][0].get<double>() - p.x()) < 1e-6);
    CHECK(std::abs(seg["points"][k][1].get<double>() - p.y()) < 1e-6);
    const double thick = cam.intrinsics.fx * v.thickness / cam.to_camera(v.position).z();
    CHECK(std::abs(seg["thickness"][k].get<double>() - thick) < 1e-6);
  }
  CHECK(svc.get_overlay("nope").status == 404);
  CHECK(svc.get_overlay("blank").status == 404);
}

TEST_CASE("overlay clips geometry behind the camera") {
  const auto cam = synthetic::look_at("c", {0, -4, 0}, {0, 0, 0}, 100, 120, 60);
  multiview::Branch3D b;
  b.vertices = {{0, {0, 0, 0}, 0.1, {}, {}}, {1, {0, -6, 0}, 0.1, {}, {}}, {2, {0.5, -7, 0}, 0.1, {}, {}}};
  b.edges = {{0, 1}, {1, 2}};
  b.roots = {0};
  const auto segs = project_model(b, cam);
  REQUIRE(segs.size() == 1);  // the edge entirely behind the camera is gone
  CHECK(segs[0].from == 0);
  CHECK(segs[0].to == 1);
  const Vec2 p0 = project(cam, b.vertices[0].position);
  CHECK((segs[0].points[0] - p0).norm() < 1e-9);
  // The cut end sits at the near plane, so it projects far from the center.
  CHECK(segs[0].points[1].allFinite());
  CHECK(segs[0].thickness[1] > segs[0].thickness[0]);
}

TEST_CASE("store picks up the registered cameras and the model from the output directory") {
  Scene s;
  fs::create_directories(s.config.paths.output);
  auto cams = s.cameras;
  cams["cx"].aligned = true;
  io::write_json(s.config.paths.output / "cameras.json", io::cameras_to_json(cams));
  io::write_json(s.config.paths.output / "branches.json", io::to_json(synth::segment_branch({0, 0, 0}, {0, 0, 1}, 0.1, 0.1)));
  AnnotationStore store(s.config);
  CHECK(store.cameras().at("cx").aligned);
  REQUIRE(store.model());
  CHECK(store.model()->vertices.size() == 2);
  Service svc(store);
  CHECK(svc.get_epipolar("band,loose", 60, 30).status == 200);
  CHECK(svc.get_overlay("band").status == 200);
}

TEST_CASE("http routes on a local port") {
  Scene s;
  AnnotationStore store(s.config);
  Service svc(store);
  HttpServer http(svc);
  const int port = http.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread th([&] { http.listen(); });

  httplib::Client cli("127.0.0.1", port);
  auto list = cli.Get("/images");
  REQUIRE(list);
  CHECK(list->status == 200);
  CHECK(Json::parse(list->body).size() == 4);

  auto img = cli.Get("/images/band");
  REQUIRE(img);
  CHECK(img->status == 200);
  CHECK(img->get_header_value("Content-Type") == "image/png");

  auto doc = band_doc();
  doc.vertices[0].thickness = 5;
  auto put = cli.Put("/annotations/band", Json{{"version", 1}, {"document", io::to_json(doc)}}.dump(), "application/json");
  REQUIRE(put);
  CHECK(put->status == 200);
  auto stale = cli.Put("/annotations/band", Json{{"version", 1}, {"document", io::to_json(doc)}}.dump(), "application/json");
  REQUIRE(stale);
  CHECK(stale->status == 409);
  auto got = cli.Get("/annotations/band");
  REQUIRE(got);
  CHECK(Json::parse(got->body)["version"] == 2);

  auto epi = cli.Get("/epipolar/band,side/60.5/30");
  REQUIRE(epi);
  CHECK(epi->status == 200);
  CHECK(Json::parse(epi->body)["point"][0] == 60.5);
  auto bad = cli.Get("/epipolar/band,side/abc/30");
  REQUIRE(bad);
  CHECK(bad->status == 400);

  auto tr = cli.Post("/trace/band", Json{{"p0", {12, 30}}, {"p1", {108, 30}}}.dump(), "application/json");
  REQUIRE(tr);
  CHECK(tr->status == 200);
  CHECK(tr->body == svc.post_trace("band", Json{{"p0", {12, 30}}, {"p1", {108, 30}}}.dump()).body);

  auto fl = cli.Get("/flow/band");
  REQUIRE(fl);
  CHECK(fl->status == 200);
  auto ov = cli.Get("/overlay/band");
  REQUIRE(ov);
  CHECK(ov->status == 409);
  auto missing = cli.Get("/annotations/nope");
  REQUIRE(missing);
  CHECK(missing->status == 404);

  http.stop();
  th.join();
}
