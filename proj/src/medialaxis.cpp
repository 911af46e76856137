#include "arbor/medialaxis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace arbor::medial {

namespace {

struct Corner {
  int x, y;
  double w;
};

std::array<Corner, 4> corners(const Vec2& p) {
  const double fx = std::floor(p.x()), fy = std::floor(p.y());
  const double tx = p.x() - fx, ty = p.y() - fy;
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  return {{{x0, y0, (1 - tx) * (1 - ty)},
           {x0 + 1, y0, tx * (1 - ty)},
           {x0, y0 + 1, (1 - tx) * ty},
           {x0 + 1, y0 + 1, tx * ty}}};
}

bool any_flow(const flow::FlowField& f, const Vec2& p) {
  for (const auto& c : corners(p))
    if (c.w > 0 && f.count_at(c.x, c.y) > 0) return true;
  return false;
}

bool in_cone(std::span<const flow::Vec2f> dirs, const Vec2& n, double cos_cone) {
  for (const auto& d : dirs) {
    const double len = d.norm();
    if (len > 0 && std::abs((d.x() * n.x() + d.y() * n.y()) / len) >= cos_cone) return true;
  }
  return false;
}

double cone_at(const flow::FlowField& f, const Vec2& p, const Vec2& n, double cos_cone) {
  double v = 0;
  for (const auto& c : corners(p))
    if (c.w > 0 && in_cone(f.at(c.x, c.y), n, cos_cone)) v += c.w;
  return v;
}

// Direction at one pixel closest to `ref` as a line, flipped to agree with it.
std::optional<Vec2> closest_direction(std::span<const flow::Vec2f> dirs, const Vec2& ref) {
  std::optional<Vec2> best;
  double best_cos = -1;
  for (const auto& d : dirs) {
    Vec2 u(d.x(), d.y());
    const double len = u.norm();
    if (len == 0) continue;
    u /= len;
    double c = u.dot(ref);
    if (c < 0) u = -u, c = -c;
    if (c > best_cos) best_cos = c, best = u;
  }
  return best;
}

}  // namespace

void TraceParams::check() const {
  if (!(step > 0) || !(cone_deg > 0 && cone_deg < 90) || max_steps <= 0 || !(max_probe > 0) || !(probe_spacing > 0) ||
      max_gap < 0) {
    throw Error(Errc::InvalidParams, "trace needs step > 0, 0 < cone < 90, max_steps > 0 and positive probe sizes");
  }
}

std::string_view to_string(Termination t) noexcept {
  switch (t) {
    case Termination::ZeroFlow: return "zero-flow";
    case Termination::ReachedEndpoint: return "reached-endpoint";
    case Termination::MaxSteps: return "max-steps";
  }
  return "zero-flow";
}

Termination termination_from_string(std::string_view s) {
  if (s == "zero-flow") return Termination::ZeroFlow;
  if (s == "reached-endpoint") return Termination::ReachedEndpoint;
  if (s == "max-steps") return Termination::MaxSteps;
  throw Error(Errc::Parse, "unknown termination '" + std::string(s) + "'");
}

double cone_indicator(const flow::FlowField& flow, const Vec2& p, const Vec2& n, double cone_deg) {
  return cone_at(flow, p, n.normalized(), std::cos(cone_deg * std::numbers::pi / 180));
}

Projection project_to_axis(const Vec2& p, const Vec2& n_in, const flow::FlowField& flow, const TraceParams& params) {
  params.check();
  if (!any_flow(flow, p)) throw Error(Errc::NoFlowAtPoint, "no flow around the query point");
  const Vec2 n = n_in.normalized();
  const double cos_cone = std::cos(params.cone_deg * std::numbers::pi / 180);
  const double at_p = cone_at(flow, p, n, cos_cone);
  if (at_p < 0.5) throw Error(Errc::ConeMismatch, "no flow direction within the cone at the query point");

  const Vec2 perp(-n.y(), n.x());
  const double h = params.probe_spacing;
  const int max_k = static_cast<int>(std::floor(params.max_probe / h));
  // Walks outward until the first failing sample and returns the signed
  // offset where the indicator crosses 1/2.
  const auto edge = [&](double sign) {
    double prev_s = 0, prev_v = at_p;
    for (int k = 1; k <= max_k; ++k) {
      const double s = k * h;
      const double v = cone_at(flow, p + sign * s * perp, n, cos_cone);
      if (v < 0.5) return sign * (prev_s + (prev_v - 0.5) / (prev_v - v) * (s - prev_s));
      prev_s = s, prev_v = v;
    }
    return sign * prev_s;
  };
  const double sa = edge(-1.0), sb = edge(1.0);
  Projection out;
  out.a = p + sa * perp;
  out.b = p + sb * perp;
  out.point = p + 0.5 * (sa + sb) * perp;
  out.thickness = sb - sa;
  return out;
}

Advection advect_step(const Vec2& p, const Vec2& n_prev_in, const flow::FlowField& flow, const TraceParams& params,
                      const std::optional<Targets>& targets) {
  params.check();
  const Vec2 n_prev = n_prev_in.normalized();
  Vec2 nf = Vec2::Zero();
  for (const auto& c : corners(p)) {
    if (c.w <= 0) continue;
    if (const auto d = closest_direction(flow.at(c.x, c.y), n_prev)) nf += c.w * *d;
  }
  if (nf.norm() == 0) throw Error(Errc::ZeroFlow, "flow vanishes at the advected point");
  nf.normalize();

  Vec2 dir = nf;
  if (targets) {
    const double span = (targets->p0 - targets->p1).norm();
    const Vec2 to_target = targets->p1 - p;
    const double w = span > 0 ? std::clamp(to_target.norm() / span, 0.0, 1.0) : 0.0;
    const Vec2 nd = to_target.norm() > 0 ? Vec2(to_target.normalized()) : nf;
    dir = w * nf + (1 - w) * nd;
    // Opposing pulls cancel exactly only when the flow points straight away
    // from the target; follow the target then.
    dir = dir.norm() > 0 ? Vec2(dir.normalized()) : nd;
  }
  return {dir, nf, p + params.step * dir};
}

MedialAxisPolyline trace(const flow::FlowField& flow, const Vec2& p0, const std::optional<Vec2>& p1,
                         const TraceParams& params) {
  params.check();
  if (!any_flow(flow, p0)) throw Error(Errc::NoFlowAtStart, "no flow at the start point");

  // Reference for picking among stored directions: toward the target, or the
  // strongest direction at the heaviest flowing corner.
  Vec2 ref = Vec2::Zero();
  if (p1 && (*p1 - p0).norm() > 0) {
    ref = (*p1 - p0).normalized();
  } else {
    double best = -1;
    for (const auto& c : corners(p0)) {
      const auto d = flow.at(c.x, c.y);
      if (c.w > best && !d.empty()) best = c.w, ref = Vec2(d[0].x(), d[0].y()).normalized();
    }
  }
  const std::optional<Targets> targets = p1 ? std::optional<Targets>(Targets{p0, *p1}) : std::nullopt;

  MedialAxisPolyline out;
  Vec2 p = p0;
  int gap = 0;
  for (int i = 0; i < params.max_steps; ++i) {
    Vec2 n;
    try {
      n = advect_step(p, ref, flow, params).flow_direction;
    } catch (const Error&) {
      out.termination = Termination::ZeroFlow;
      return out;
    }
    Vec2 here = p;
    try {
      const Projection pr = project_to_axis(p, n, flow, params);
      here = pr.point;
      out.points.push_back(pr.point);
      out.thicknesses.push_back(pr.thickness);
      gap = 0;
    } catch (const Error& e) {
      if (e.code() != Errc::ConeMismatch || ++gap > params.max_gap) {
        out.termination = Termination::ZeroFlow;
        return out;
      }
    }

    if (p1 && (here - *p1).norm() <= params.step) {
      try {
        const Vec2 n1 = advect_step(*p1, n, flow, params).flow_direction;
        const Projection last = project_to_axis(*p1, n1, flow, params);
        if (out.points.empty() || (last.point - out.points.back()).norm() > 0) {
          out.points.push_back(last.point);
          out.thicknesses.push_back(last.thickness);
        }
      } catch (const Error&) {
      }
      out.termination = Termination::ReachedEndpoint;
      return out;
    }
    try {
      const Advection adv = advect_step(here, n, flow, params, targets);
      ref = adv.flow_direction;
      p = adv.next;
    } catch (const Error&) {
      out.termination = Termination::ZeroFlow;
      return out;
    }
  }
  out.termination = Termination::MaxSteps;
  return out;
}

}  // namespace arbor::medial
