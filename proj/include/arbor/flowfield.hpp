#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "arbor/image.hpp"

namespace arbor::flow {

using Vec2f = Eigen::Vector2f;

/// Piecewise-sinusoidal line detector sampled on an N x N grid centered on
/// the origin. Weight at offset p (x right, y down):
///
///   d = |p - (p.v)v| / r,  v = (cos theta, sin theta)
///   w = 1 - |p| / falloff_radius   (optionally clamped at 0)
///   k = w cos(d pi / 2)                      d < 1
///     = -(w / sigma) sin((d - 1) pi / sigma) 1 <= d < 1 + sigma
///     = 0                                    otherwise
struct DirectionalKernel {
  double theta = 0;
  double r = 4;
  double sigma = 1.8;
  int N = 35;
  double falloff_radius = 4;
  bool clamp_falloff = false;
  std::vector<float> weights;  ///< row-major, index (dy + N/2) * N + (dx + N/2)

  int half() const { return N / 2; }
  float at(int dx, int dy) const { return weights[static_cast<std::size_t>(dy + half()) * N + dx + half()]; }
};

/// Continuous kernel value at an arbitrary offset.
double kernel_weight(double px, double py, double theta, double r, double sigma, double falloff_radius,
                     bool clamp_falloff = false);

/// Samples one kernel. `falloff_radius` defaults to `r`, the literal linear
/// falloff; N must be odd.
DirectionalKernel make_kernel(double theta, double r, double sigma, int N,
                              std::optional<double> falloff_radius = std::nullopt, bool clamp_falloff = false);

struct BankParams {
  double r = 4.0;
  double sigma = 1.8;
  int N = 35;
  double falloff_radius = 17.5;  ///< N / 2: weights reach zero at the grid edge
  int count = 18;                ///< angles 0, 180/count, ... < 180 degrees
  bool clamp_falloff = true;     ///< w >= 0, so every kernel has the same disk support

  /// r = 4, sigma = 1.8, N = 35, falloff normalized to the grid half-extent
  /// and clamped at zero.
  static BankParams standard() { return {}; }
  /// Same parameters with the unnormalized, unclamped falloff w = 1 - |p| / r.
  static BankParams literal() { return {4.0, 1.8, 35, 4.0, 18, false}; }
  /// r = 3.8, sigma = 0.8 with the normalized, clamped falloff.
  static BankParams fine() { return {3.8, 0.8, 35, 17.5, 18, true}; }
};

std::vector<DirectionalKernel> make_bank(const BankParams& params = {});

/// Default resize factors: 1, 1/sqrt2, 1/2, 1/(2 sqrt2), 1/4.
std::vector<double> default_scales();

/// Per-scale, per-angle filter responses. Grids are stored at the scaled
/// resolution and read back at reference resolution by nearest lookup.
struct ActivationStack {
  struct Level {
    double scale = 1;
    int width = 0, height = 0;
    std::vector<GrayF> maps;  ///< one per angle
  };

  int width = 0, height = 0;
  std::vector<double> angles;  ///< radians
  std::vector<Level> levels;
  Gray8 support;  ///< 1 where the source mask is at least 0.5

  float value(std::size_t level, std::size_t angle, int x, int y) const;
  float global_max() const;
};

/// Filters `mask` (values in [0, 1]) at every scale with every kernel.
/// Downsampling is bilinear; zero padding at borders.
ActivationStack directional_activations(const GrayF& mask, std::span<const DirectionalKernel> bank,
                                        std::span<const double> scales);

struct Threshold {
  enum class Mode { Relative, Absolute };
  Mode mode = Mode::Relative;
  double value = 0.40;  ///< relative: fraction of the stack's global maximum

  double resolve(const ActivationStack& stack) const;
};

/// Per-pixel 0-2 principal directions; magnitude is the summed activation.
struct FlowField {
  int width = 0, height = 0;
  std::vector<std::uint8_t> count;
  std::vector<std::array<Vec2f, 2>> dirs;

  FlowField() = default;
  FlowField(int w, int h)
      : width(w), height(h), count(static_cast<std::size_t>(w) * h, 0),
        dirs(static_cast<std::size_t>(w) * h, {Vec2f::Zero(), Vec2f::Zero()}) {}

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  int count_at(int x, int y) const { return contains(x, y) ? count[index(x, y)] : 0; }
  std::span<const Vec2f> at(int x, int y) const {
    return contains(x, y) ? std::span<const Vec2f>(dirs[index(x, y)].data(), count[index(x, y)])
                          : std::span<const Vec2f>();
  }
  void set(int x, int y, std::span<const Vec2f> v);
  std::size_t nonzero_pixels() const;
};

/// Block vectors of one thresholded angular histogram, largest first, at most
/// two. Empty when every bin is zero or more than half are nonzero. Blocks are
/// the basins of the circular histogram between local minima; angles inside a
/// block are unwrapped to within 90 degrees of its peak before summing.
std::vector<Vec2f> histogram_directions(std::span<const float> hist, std::span<const double> angles);

/// Threshold, reduce over scales by max, and cluster each supported pixel.
FlowField extract_flow(const ActivationStack& stack, const Threshold& threshold = {});

/// Convenience: bank + activations + extraction with default scales.
FlowField compute_flow(const GrayF& mask, const BankParams& bank = {}, const Threshold& threshold = {},
                       std::span<const double> scales = {});

/// HSV rendering of primary directions: hue = angle mod 180, value = magnitude
/// relative to the field's maximum.
Rgb8 visualize(const FlowField& field);

}  // namespace arbor::flow
