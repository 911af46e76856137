#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "arbor/annotation.hpp"
#include "arbor/camera.hpp"

/// Procedural scenes with known ground truth, used by the fixture generator,
/// the acceptance checks and the tests.
namespace arbor::synthetic {

/// Tree whose edges are quadratic Bezier curves from parent to child node.
struct Tree {
  std::vector<Vec3> nodes;
  std::vector<double> radii;
  std::vector<int> parent;     ///< -1 for the root
  std::vector<Vec3> controls;  ///< per node, Bezier control point of the edge to its parent

  std::size_t branch_count() const { return nodes.empty() ? 0 : nodes.size() - 1; }
  /// Point on the edge from parent(child) (t = 0) to child (t = 1).
  Vec3 edge_point(int child, double t) const;
  double edge_radius(int child, double t) const;
  /// Keypoint identifier of a node.
  static std::string key(int node);
};

struct TreeOptions {
  int branches = 50;
  double trunk_height = 1.0;
  double spread = 0.6;
  double bend = 0.0;  ///< control point offset relative to edge length
  double root_radius = 0.05;
  double min_radius = 0.005;
};

/// Binary-branching tree rooted at the origin and growing along +z, so no
/// node has more than three incident edges.
Tree make_tree(std::uint64_t seed, const TreeOptions& opt = {});

/// Cameras on a horizontal ring around `target`, looking at it.
std::vector<Camera> ring_cameras(int count, double radius, double height, const Vec3& target, double focal = 800,
                                 int width = 1024, int height_px = 768, double arc_deg = 360);

/// Camera at `eye` looking at `target` with square pixels and a centered
/// principal point.
Camera look_at(const std::string& id, const Vec3& eye, const Vec3& target, double focal = 800, int width = 1024,
               int height = 768);

/// Exact annotation of the tree as seen by `camera`: keypoints at every node
/// and `interior` unlabeled vertices per edge. Radii are focal * r / depth.
annotation::ImageAnnotation annotate(const Tree& tree, const Camera& camera, const std::string& image_id,
                                     int interior = 0);

/// Keeps only the edges whose child index is in `children` (and the vertices they use).
annotation::ImageAnnotation restrict_to(const annotation::ImageAnnotation& ann, const Tree& tree,
                                        const std::vector<int>& children);

}  // namespace arbor::synthetic
