#include "arbor/io.hpp"

namespace arbor::io {

namespace {

// Rethrows nlohmann type and key errors as Parse errors naming the document.
template <typename F>
auto parsing(const char* what, F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw Error(Errc::Parse, std::string(what) + ": " + e.what());
  }
}

Json vec(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(Errc::Parse, "expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Json mat(const Mat3& m) {
  Json a = Json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
  return a;
}

}  // namespace

Json cameras_to_json(const multiview::CameraMap& cameras) {
  Json a = Json::array();
  for (const auto& [id, c] : cameras) {
    const auto& in = c.intrinsics;
    a.push_back({{"id", id},
                 {"fx", in.fx},
                 {"fy", in.fy},
                 {"cx", in.cx},
                 {"cy", in.cy},
                 {"width", in.width},
                 {"height", in.height},
                 {"R", mat(c.extrinsics.R)},
                 {"t", vec(c.extrinsics.t)},
                 {"aligned", c.aligned}});
  }
  return a;
}

multiview::CameraMap cameras_from_json(const Json& j) {
  return parsing("cameras", [&] {
    if (!j.is_array()) throw Error(Errc::Parse, "cameras: expected an array");
    multiview::CameraMap out;
    for (const auto& e : j) {
      Camera c;
      c.id = e.at("id").get<std::string>();
      c.intrinsics.fx = e.at("fx").get<double>();
      c.intrinsics.fy = e.at("fy").get<double>();
      c.intrinsics.cx = e.at("cx").get<double>();
      c.intrinsics.cy = e.at("cy").get<double>();
      c.intrinsics.width = e.at("width").get<int>();
      c.intrinsics.height = e.at("height").get<int>();
      const auto& R = e.at("R");
      if (!R.is_array() || R.size() != 9) throw Error(Errc::Parse, "cameras: R needs 9 numbers");
      for (int k = 0; k < 9; ++k) c.extrinsics.R(k / 3, k % 3) = R[k].get<double>();
      c.extrinsics.t = vec3(e.at("t"));
      c.aligned = e.value("aligned", true);
      if (!c.intrinsics.valid()) throw Error(Errc::Parse, "cameras: invalid intrinsics for " + c.id);
      if (!c.extrinsics.valid(1e-6)) throw Error(Errc::Parse, "cameras: R is not a rotation for " + c.id);
      if (!out.emplace(c.id, c).second) throw Error(Errc::Parse, "cameras: duplicate id " + c.id);
    }
    return out;
  });
}

Json to_json(const annotation::ImageAnnotation& a) {
  Json verts = Json::array();
  for (const auto& v : a.vertices) {
    Json o{{"id", v.id}, {"x", v.x}, {"y", v.y}, {"thickness", v.thickness}};
    if (v.keypoint) o["keypoint"] = *v.keypoint;
    verts.push_back(std::move(o));
  }
  Json edges = Json::array();
  for (const auto& [p, q] : a.edges) edges.push_back({p, q});
  return {{"image_id", a.image_id}, {"camera_id", a.camera_id}, {"width", a.width},
          {"height", a.height},     {"vertices", verts},         {"edges", edges}};
}

annotation::ImageAnnotation annotation_from_json(const Json& j) {
  return parsing("annotation", [&] {
    annotation::ImageAnnotation a;
    a.image_id = j.at("image_id").get<std::string>();
    a.camera_id = j.at("camera_id").get<std::string>();
    a.width = j.at("width").get<int>();
    a.height = j.at("height").get<int>();
    for (const auto& v : j.at("vertices")) {
      annotation::Vertex x;
      x.id = v.at("id").get<annotation::VertexId>();
      x.x = v.at("x").get<double>();
      x.y = v.at("y").get<double>();
      x.thickness = v.at("thickness").get<double>();
      if (v.contains("keypoint") && !v["keypoint"].is_null()) x.keypoint = v["keypoint"].get<std::string>();
      a.vertices.push_back(std::move(x));
    }
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw Error(Errc::Parse, "annotation: edges are [id, id] pairs");
      a.edges.emplace_back(e[0].get<annotation::VertexId>(), e[1].get<annotation::VertexId>());
    }
    return a;
  });
}

Json to_json(const medial::MedialAxisPolyline& p) {
  Json pts = Json::array();
  for (const auto& q : p.points) pts.push_back({q.x(), q.y()});
  return {{"points", pts}, {"thicknesses", p.thicknesses}, {"termination", std::string(medial::to_string(p.termination))}};
}

medial::MedialAxisPolyline polyline_from_json(const Json& j) {
  return parsing("polyline", [&] {
    medial::MedialAxisPolyline p;
    for (const auto& q : j.at("points")) p.points.emplace_back(q.at(0).get<double>(), q.at(1).get<double>());
    p.thicknesses = j.at("thicknesses").get<std::vector<double>>();
    p.termination = medial::termination_from_string(j.at("termination").get<std::string>());
    if (p.thicknesses.size() != p.points.size()) throw Error(Errc::Parse, "polyline: one thickness per point");
    return p;
  });
}

Json to_json(const multiview::Branch3D& b) {
  Json verts = Json::array();
  for (const auto& v : b.vertices) {
    Json o{{"id", v.id}, {"pos", vec(v.position)}, {"thickness", v.thickness}};
    if (v.keypoint) o["keypoint"] = *v.keypoint;
    verts.push_back(std::move(o));
  }
  Json edges = Json::array();
  for (const auto& [p, q] : b.edges) edges.push_back({p, q});
  return {{"vertices", verts}, {"edges", edges}, {"roots", b.roots}};
}

multiview::Branch3D branch_from_json(const Json& j) {
  return parsing("branches", [&] {
    multiview::Branch3D b;
    for (const auto& v : j.at("vertices")) {
      multiview::BranchVertex x;
      x.id = v.at("id").get<multiview::VertexId>();
      x.position = vec3(v.at("pos"));
      x.thickness = v.at("thickness").get<double>();
      if (v.contains("keypoint") && !v["keypoint"].is_null()) x.keypoint = v["keypoint"].get<std::string>();
      b.vertices.push_back(std::move(x));
    }
    for (const auto& e : j.at("edges")) b.edges.emplace_back(e.at(0).get<multiview::VertexId>(), e.at(1).get<multiview::VertexId>());
    b.roots = j.value("roots", std::vector<multiview::VertexId>{});
    return b;
  });
}

Json to_json(const multiview::Report& r) {
  Json a = Json::array();
  for (const auto& e : r.entries)
    a.push_back({{"kind", std::string(multiview::to_string(e.kind))}, {"subject", e.subject}, {"message", e.message}});
  return a;
}

Json to_json(const tree::Skeleton& s) {
  Json nodes = Json::array();
  for (std::size_t i = 0; i < s.nodes.size(); ++i) {
    const auto& n = s.nodes[i];
    Json o{{"id", i}, {"pos", vec(n.position)}, {"radius", n.radius}};
    if (n.anchor) o["anchor"] = {{"from", n.anchor->from}, {"to", n.anchor->to}, {"fraction", n.anchor->fraction}};
    nodes.push_back(std::move(o));
  }
  Json edges = Json::array();
  for (const auto& [p, c] : s.edges) edges.push_back({p, c});
  return {{"nodes", nodes}, {"edges", edges}, {"root", s.root}};
}

tree::Skeleton skeleton_from_json(const Json& j) {
  return parsing("skeleton", [&] {
    tree::Skeleton s;
    const auto& nodes = j.at("nodes");
    s.nodes.resize(nodes.size());
    for (const auto& n : nodes) {
      const auto id = n.at("id").get<std::size_t>();
      if (id >= s.nodes.size()) throw Error(Errc::Parse, "skeleton: node ids must be 0..n-1");
      auto& x = s.nodes[id];
      x.position = vec3(n.at("pos"));
      x.radius = n.at("radius").get<double>();
      if (n.contains("anchor")) {
        const auto& a = n["anchor"];
        x.anchor = tree::Anchor{a.at("from").get<std::string>(), a.at("to").get<std::string>(), a.at("fraction").get<double>()};
      }
    }
    for (const auto& e : j.at("edges")) s.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    s.root = j.at("root").get<int>();
    s.validate();
    return s;
  });
}

Json to_json(const tree::RigidBodyModel& m) {
  Json bodies = Json::array();
  for (const auto& b : m.bodies) {
    bodies.push_back({{"edge", b.edge},
                      {"r1", b.r1},
                      {"r2", b.r2},
                      {"length", b.length},
                      {"mass", b.mass},
                      {"center_of_mass", vec(b.center_of_mass)},
                      {"rotation", mat(b.rotation)},
                      {"inertia_body", mat(b.inertia_body)},
                      {"inertia_world", mat(b.inertia_world())}});
  }
  Json joints = Json::array();
  for (const auto& jt : m.joints) {
    joints.push_back({{"parent_body", jt.parent_body},
                      {"child_body", jt.child_body},
                      {"position", vec(jt.position)},
                      {"stiffness", jt.stiffness},
                      {"damping", jt.damping}});
  }
  return {{"bodies", bodies}, {"joints", joints}};
}

std::vector<tree::Isometry> pose_from_json(const Json& j) {
  return parsing("pose", [&] {
    std::vector<tree::Isometry> out;
    for (const auto& t : j.at("transforms")) {
      if (!t.is_array() || t.size() != 12) throw Error(Errc::Parse, "pose: each transform needs 12 numbers");
      tree::Isometry T = tree::Isometry::Identity();
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) T.linear()(r, c) = t[r * 4 + c].get<double>();
        T.translation()[r] = t[r * 4 + 3].get<double>();
      }
      if ((T.linear().transpose() * T.linear() - Mat3::Identity()).norm() > 1e-6 || T.linear().determinant() < 0) {
        throw Error(Errc::Parse, "pose: transform " + std::to_string(out.size()) + " is not rigid");
      }
      out.push_back(T);
    }
    return out;
  });
}

Json pose_to_json(const std::vector<tree::Isometry>& transforms) {
  Json a = Json::array();
  for (const auto& T : transforms) {
    Json row = Json::array();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) row.push_back(T.linear()(r, c));
      row.push_back(T.translation()[r]);
    }
    a.push_back(std::move(row));
  }
  return {{"transforms", a}};
}

Json mesh_rig_to_json(const tree::Mesh& mesh) {
  Json b = Json::array();
  for (const auto& x : mesh.bindings) b.push_back({x[0].edge, x[0].weight, x[1].edge, x[1].weight});
  return {{"bindings", b}, {"ring_node", mesh.ring_node}};
}

void apply_mesh_rig(tree::Mesh& mesh, const Json& j) {
  parsing("mesh rig", [&] {
    const auto& b = j.at("bindings");
    const auto ring = j.at("ring_node").get<std::vector<int>>();
    if (b.size() != mesh.size() || ring.size() != mesh.size()) {
      throw Error(Errc::DimensionMismatch, "mesh rig does not match the mesh vertex count");
    }
    mesh.bindings.clear();
    for (const auto& x : b) {
      mesh.bindings.push_back({tree::BoneBinding{x.at(0).get<int>(), x.at(1).get<double>()},
                               tree::BoneBinding{x.at(2).get<int>(), x.at(3).get<double>()}});
    }
    mesh.ring_node = ring;
    return 0;
  });
}

}  // namespace arbor::io
