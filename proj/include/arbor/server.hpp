#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "arbor/pipeline.hpp"

namespace arbor::server {

using pipeline::Json;
namespace fs = std::filesystem;

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;

  static Response json(int status, const Json& j) { return {status, "application/json", j.dump()}; }
  static Response error(int status, std::string_view code, std::string_view message);
};

/// Annotation documents with per-image versions, the image and camera
/// registries, the current 3D model, and the flow-field cache.
///
/// Documents found on disk start at version 1; registered images without a
/// document are at version 0. Writes to one image serialize on that image's
/// mutex; distinct images proceed independently.
class AnnotationStore {
 public:
  struct Entry {
    std::optional<fs::path> image;          ///< source image file
    std::optional<fs::path> document_path;  ///< where the document persists
    std::optional<annotation::ImageAnnotation> document;
    std::uint64_t version = 0;
  };

  struct Snapshot {
    std::optional<annotation::ImageAnnotation> document;
    std::uint64_t version = 0;
    std::optional<fs::path> image;
  };

  enum class PutStatus { Ok, Stale, Invalid, Unknown };
  struct PutResult {
    PutStatus status;
    std::uint64_t version = 0;  ///< new version on success, current version otherwise
    std::vector<annotation::Violation> violations;
  };

  explicit AnnotationStore(const pipeline::Config& config);

  std::vector<std::string> ids() const;
  bool contains(const std::string& id) const { return entries_.count(id) > 0; }
  Snapshot snapshot(const std::string& id) const;
  /// Checks the version and the document, then writes it to disk atomically.
  PutResult put(const std::string& id, const annotation::ImageAnnotation& doc, std::uint64_t expected_version);

  const multiview::CameraMap& cameras() const { return cameras_; }
  const pipeline::Config& config() const { return config_; }

  std::shared_ptr<const multiview::Branch3D> model() const;
  void set_model(std::shared_ptr<const multiview::Branch3D> model);

  /// Flow field of an image's mask under the given parameters. Computed on
  /// a miss and cached in memory and on disk (`<output>/flow_cache`, FFLD)
  /// under a key derived from the parameters and the mask content.
  std::shared_ptr<const flow::FlowField> flow(const std::string& id, const pipeline::Config::Flow& params);

  struct CacheStats {
    std::size_t hits = 0, misses = 0, disk_loads = 0;
  };
  CacheStats cache_stats() const;

 private:
  struct Slot {
    mutable std::mutex mutex;
    Entry entry;
  };

  GrayF mask_for(const std::string& id) const;

  pipeline::Config config_;
  multiview::CameraMap cameras_;
  std::map<std::string, std::unique_ptr<Slot>> entries_;

  mutable std::mutex model_mutex_;
  std::shared_ptr<const multiview::Branch3D> model_;

  mutable std::mutex cache_mutex_;
  std::map<std::string, std::shared_ptr<const flow::FlowField>> cache_;
  std::map<std::string, std::unique_ptr<std::mutex>> compute_locks_;  ///< per image id
  CacheStats stats_;
};

/// HTTP-independent request handlers. Every coordinate is in source-image
/// pixels.
class Service {
 public:
  explicit Service(AnnotationStore& store) : store_(store) {}

  Response list_images() const;
  Response get_image(const std::string& id) const;
  Response get_annotation(const std::string& id) const;
  /// Body: {"version": expected, "document": {...}}.
  Response put_annotation(const std::string& id, const std::string& body);
  /// `pair` is "<from>,<to>"; returns the line in image `to` of pixel (x, y) in image `from`.
  Response get_epipolar(const std::string& pair, double x, double y) const;
  /// Body: {"p0": [x, y], "p1": [x, y] (optional), "params": {trace keys, "flow": {flow keys}}}.
  Response post_trace(const std::string& id, const std::string& body);
  Response get_flow(const std::string& id);
  Response get_overlay(const std::string& id) const;

 private:
  AnnotationStore& store_;
};

/// One projected model edge, clipped to the part in front of the camera.
struct OverlaySegment {
  multiview::VertexId from = 0, to = 0;
  std::vector<Vec2> points;
  std::vector<double> thickness;  ///< radius in pixels at each point
};

/// Distance in front of the optical center below which geometry is clipped.
inline constexpr double kNearDepth = 1e-6;

std::vector<OverlaySegment> project_model(const multiview::Branch3D& model, const Camera& camera);

/// Serves the routes on host:port until stop() is called from another thread.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  /// Binds; port 0 picks a free port. Returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Blocks serving requests.
  bool listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace arbor::server
