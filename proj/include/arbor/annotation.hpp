#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "arbor/camera.hpp"
#include "arbor/image.hpp"

namespace arbor::annotation {

using VertexId = std::int64_t;

/// One annotated vertex. `thickness` is the branch radius in pixels; the full
/// drawn width is twice that.
struct Vertex {
  VertexId id = 0;
  double x = 0, y = 0;
  double thickness = 1;
  std::optional<std::string> keypoint;

  Vec2 pos() const { return {x, y}; }
};

struct ImageAnnotation {
  std::string image_id;
  std::string camera_id;
  int width = 0, height = 0;
  std::vector<Vertex> vertices;
  std::vector<std::pair<VertexId, VertexId>> edges;

  const Vertex* find(VertexId id) const;
  const Vertex* find_keypoint(const std::string& key) const;
};

enum class Rule {
  DanglingEdge,
  SelfLoop,
  DuplicateEdge,
  DegreeViolation,
  DuplicateKeypoint,
  DuplicateVertexId,
  NonPositiveThickness,
  OutOfBounds,
};

std::string_view to_string(Rule rule) noexcept;

struct Violation {
  Rule rule;
  std::optional<VertexId> vertex;
  std::optional<std::pair<VertexId, VertexId>> edge;
  std::string message;
};

/// Every broken data-model rule; empty when the annotation is well formed.
std::vector<Violation> validate(const ImageAnnotation& annotation);

/// Binary {0, 1} mask: each edge is a capsule whose radius at the closest
/// point of the segment lerps between the endpoint thicknesses. A pixel is
/// set when its center lies at distance <= that radius (closed rule).
Gray8 rasterize_mask(const ImageAnnotation& annotation);

/// Draws one edge into an existing mask using the same coverage rule.
void rasterize_edge(Gray8& mask, const Vertex& a, const Vertex& b);

/// A maximal vertex path whose interior vertices are unlabeled degree-2
/// vertices. Ends are keypoints, junctions or curve endpoints.
struct Curve {
  std::vector<VertexId> vertices;

  VertexId front() const { return vertices.front(); }
  VertexId back() const { return vertices.back(); }
};

/// Splits the annotation graph into curves. Closed loops of degree-2
/// vertices without keypoints are not reported.
std::vector<Curve> extract_curves(const ImageAnnotation& annotation);

/// Curve polyline in pixels with per-vertex thickness.
struct CurveGeometry {
  std::vector<Vec2> points;
  std::vector<double> thickness;

  double length() const;
  /// Point, thickness and unit tangent at a fraction of the arc length.
  struct Sample {
    Vec2 point;
    double thickness;
    Vec2 tangent;
  };
  Sample at_fraction(double f) const;
};

CurveGeometry curve_geometry(const ImageAnnotation& annotation, const Curve& curve);

/// Curve running from keypoint `from` to keypoint `to`, if the annotation has one.
std::optional<CurveGeometry> keypoint_curve(const ImageAnnotation& annotation, const std::string& from,
                                            const std::string& to);

/// Copy of an annotation for the partner image of a stereo pair, with every
/// vertex snapped to its epipolar line.
struct EpipolarDraft {
  ImageAnnotation annotation;
  std::vector<Vec3> lines;  ///< per vertex, a*x + b*y + c = 0 with a^2 + b^2 = 1
};

EpipolarDraft epipolar_transfer(const ImageAnnotation& annotation, const Camera& cam1, const Camera& cam2,
                                const std::string& target_image_id = {});

/// Closest point on a normalized line to `p`.
Vec2 closest_point_on_line(const Vec3& line, const Vec2& p);

/// Point on a normalized line reached by sliding `s` pixels from `p`'s foot.
Vec2 slide_along_line(const Vec3& line, const Vec2& p, double s);

}  // namespace arbor::annotation
