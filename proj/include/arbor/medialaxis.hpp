#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "arbor/camera.hpp"
#include "arbor/flowfield.hpp"

namespace arbor::medial {

struct TraceParams {
  double step = 2.0;          ///< advection step t, pixels
  double cone_deg = 15.0;     ///< tolerance between a stored direction and n (either sign)
  int max_steps = 10000;
  double max_probe = 16.0;    ///< half-extent of the search along L, pixels
  double probe_spacing = 0.5; ///< sample spacing along L, pixels
  int max_gap = 2;            ///< consecutive steps allowed to advect without a valid projection

  void check() const;
};

enum class Termination { ZeroFlow, ReachedEndpoint, MaxSteps };

std::string_view to_string(Termination t) noexcept;
Termination termination_from_string(std::string_view s);

/// Traced medial axis. `thicknesses` are full widths |AB| in pixels.
struct MedialAxisPolyline {
  std::vector<Vec2> points;
  std::vector<double> thicknesses;
  Termination termination = Termination::ZeroFlow;
};

/// Bilinear blend over the four surrounding pixels of a 0/1 indicator that is
/// 1 where some stored direction lies within the cone around +-n.
double cone_indicator(const flow::FlowField& flow, const Vec2& p, const Vec2& n, double cone_deg);

struct Projection {
  Vec2 point;        ///< midpoint of AB
  double thickness;  ///< |AB|
  Vec2 a, b;
};

/// Finds the maximal run AB through p on the line perpendicular to n along
/// which the cone indicator stays >= 1/2, sampled every `probe_spacing` and
/// refined by linear interpolation at both ends. The run is strictly
/// contiguous: a single failing sample ends it.
Projection project_to_axis(const Vec2& p, const Vec2& n, const flow::FlowField& flow, const TraceParams& params);

struct Targets {
  Vec2 p0, p1;
};

struct Advection {
  Vec2 direction;       ///< step direction n' after any target blending
  Vec2 flow_direction;  ///< n_f, the interpolated flow direction alone
  Vec2 next;
};

/// Picks the stored direction closest to n_prev at each of the four pixels
/// around p (signs flipped toward n_prev), blends them bilinearly and, with
/// targets, mixes in the pull toward p1 with weight 1 - w where
/// w = clamp(|p - p1| / |p0 - p1|, 0, 1). Throws ZeroFlow when no
/// surrounding pixel has flow.
Advection advect_step(const Vec2& p, const Vec2& n_prev, const flow::FlowField& flow, const TraceParams& params,
                      const std::optional<Targets>& targets = std::nullopt);

/// Alternates projection and advection from p0 until the flow runs out, the
/// trace comes within one step of p1, or max_steps iterations ran. Each
/// projection uses the flow direction at the current point; the pull toward
/// p1 only bends the step. Where flow exists but no direction passes the
/// cone test, the tracer advects without emitting a point, at most `max_gap`
/// times in a row.
MedialAxisPolyline trace(const flow::FlowField& flow, const Vec2& p0, const std::optional<Vec2>& p1,
                         const TraceParams& params = {});

}  // namespace arbor::medial
