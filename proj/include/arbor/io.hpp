#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "arbor/annotation.hpp"
#include "arbor/camera.hpp"
#include "arbor/flowfield.hpp"
#include "arbor/image.hpp"
#include "arbor/medialaxis.hpp"
#include "arbor/multiview.hpp"
#include "arbor/treegeom.hpp"

namespace arbor::io {

namespace fs = std::filesystem;
using Json = nlohmann::json;
using Bytes = std::vector<std::uint8_t>;

Bytes read_bytes(const fs::path& path);
std::string read_text(const fs::path& path);

/// Writes to a temporary sibling and renames it over `path`, creating parent
/// directories as needed.
void write_atomic(const fs::path& path, std::string_view data);
void write_atomic(const fs::path& path, const Bytes& data);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const fs::path& path);

Json read_json(const fs::path& path);
/// Two-space indented JSON with a trailing newline.
void write_json(const fs::path& path, const Json& j);

// Images: 8-bit PNG or JPEG. Color images are returned in RGB order; alpha is dropped.
Image<std::uint8_t> read_image(const fs::path& path);
Bytes encode_png(const Image<std::uint8_t>& img);
void write_png(const fs::path& path, const Image<std::uint8_t>& img);
/// Decodes a PNG or JPEG held in memory.
Image<std::uint8_t> decode_image(const Bytes& data);

// Cameras file: array of {id, fx, fy, cx, cy, width, height, R (9, row-major), t (3), aligned}.
Json cameras_to_json(const multiview::CameraMap& cameras);
multiview::CameraMap cameras_from_json(const Json& j);

Json to_json(const annotation::ImageAnnotation& a);
annotation::ImageAnnotation annotation_from_json(const Json& j);

Json to_json(const medial::MedialAxisPolyline& p);
medial::MedialAxisPolyline polyline_from_json(const Json& j);

Json to_json(const multiview::Branch3D& b);
multiview::Branch3D branch_from_json(const Json& j);

Json to_json(const multiview::Report& r);

Json to_json(const tree::Skeleton& s);
tree::Skeleton skeleton_from_json(const Json& j);

Json to_json(const tree::RigidBodyModel& m);

/// Pose file: {"transforms": [[12 numbers, 3x4 row-major], ...]}, one per edge.
std::vector<tree::Isometry> pose_from_json(const Json& j);
Json pose_to_json(const std::vector<tree::Isometry>& transforms);

// Flow-field file: "FFLD", u32 version 1, u32 width, u32 height, then per
// pixel u8 count and count x (f32 dx, f32 dy), all little-endian.
Bytes encode_flow(const flow::FlowField& f);
flow::FlowField decode_flow(const Bytes& data);

// Point cloud PLY: binary little-endian, float x y z and uchar red green blue.
// Reading also accepts ASCII files and double coordinates; unknown vertex
// properties are skipped.
tree::PointCloud read_ply(const fs::path& path);
Bytes encode_ply(const tree::PointCloud& cloud);
void write_ply(const fs::path& path, const tree::PointCloud& cloud);

// Mesh OBJ with vertex colors as `v x y z r g b` (r, g, b in [0, 1]), vertex
// normals as `vn`, and faces as `f a//a b//b c//c`.
std::string encode_obj(const tree::Mesh& mesh);
void write_obj(const fs::path& path, const tree::Mesh& mesh);
/// Positions, normals, colors and triangles; bindings and ring nodes are left empty.
tree::Mesh read_obj(const fs::path& path);

/// Skinning data that OBJ cannot carry: {"bindings": [[e0, w0, e1, w1], ...], "ring_node": [...]}.
Json mesh_rig_to_json(const tree::Mesh& mesh);
void apply_mesh_rig(tree::Mesh& mesh, const Json& j);

}  // namespace arbor::io
