#include "arbor/flowfield.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "arbor/flow_kernels.hpp"

namespace arbor::flow {

using std::numbers::pi;

double kernel_weight(double px, double py, double theta, double r, double sigma, double falloff_radius,
                     bool clamp_falloff) {
  const double vx = std::cos(theta), vy = std::sin(theta);
  const double along = px * vx + py * vy;
  const double d = std::hypot(px - along * vx, py - along * vy) / r;
  double w = 1.0 - std::hypot(px, py) / falloff_radius;
  if (clamp_falloff) w = std::max(w, 0.0);
  if (d < 1.0) return w * std::cos(d * pi / 2.0);
  if (d < 1.0 + sigma) return -w / sigma * std::sin((d - 1.0) * pi / sigma);
  return 0.0;
}

DirectionalKernel make_kernel(double theta, double r, double sigma, int N, std::optional<double> falloff_radius,
                              bool clamp_falloff) {
  const double falloff = falloff_radius.value_or(r);
  if (!(r > 0) || !(sigma > 0) || N < 1 || N % 2 == 0 || !(falloff > 0)) {
    throw Error(Errc::InvalidParams, "kernel needs r > 0, sigma > 0, odd N and positive falloff radius");
  }
  DirectionalKernel k{theta, r, sigma, N, falloff, clamp_falloff, {}};
  k.weights.resize(static_cast<std::size_t>(N) * N);
  const int h = N / 2;
  for (int dy = -h; dy <= h; ++dy)
    for (int dx = -h; dx <= h; ++dx)
      k.weights[static_cast<std::size_t>(dy + h) * N + dx + h] =
          static_cast<float>(kernel_weight(dx, dy, theta, r, sigma, falloff, clamp_falloff));
  return k;
}

std::vector<DirectionalKernel> make_bank(const BankParams& p) {
  if (p.count < 1) throw Error(Errc::InvalidParams, "bank needs at least one kernel");
  std::vector<DirectionalKernel> bank;
  bank.reserve(p.count);
  for (int i = 0; i < p.count; ++i) bank.push_back(make_kernel(pi * i / p.count, p.r, p.sigma, p.N, p.falloff_radius, p.clamp_falloff));
  return bank;
}

std::vector<double> default_scales() {
  const double s2 = std::sqrt(2.0);
  return {1.0, 1.0 / s2, 0.5, 1.0 / (2.0 * s2), 0.25};
}

float ActivationStack::value(std::size_t level, std::size_t angle, int x, int y) const {
  const Level& L = levels[level];
  const int sx = std::min(L.width - 1, static_cast<int>((x + 0.5) * L.width / width));
  const int sy = std::min(L.height - 1, static_cast<int>((y + 0.5) * L.height / height));
  return L.maps[angle].at(sx, sy);
}

float ActivationStack::global_max() const {
  float m = -std::numeric_limits<float>::infinity();
  for (const auto& L : levels)
    for (const auto& g : L.maps)
      for (float v : g.data) m = std::max(m, v);
  return m;
}

ActivationStack directional_activations(const GrayF& mask, std::span<const DirectionalKernel> bank,
                                        std::span<const double> scales) {
  if (mask.empty()) throw Error(Errc::EmptyMask, "activation of an empty mask");
  if (bank.empty() || scales.empty()) throw Error(Errc::InvalidParams, "need kernels and scales");
  for (double s : scales)
    if (!(s > 0 && s <= 1)) throw Error(Errc::InvalidParams, "scale factors must lie in (0, 1]");

  ActivationStack st;
  st.width = mask.width;
  st.height = mask.height;
  for (const auto& k : bank) st.angles.push_back(k.theta);
  st.support = Gray8(mask.width, mask.height);
  for (std::size_t i = 0; i < mask.data.size(); ++i) st.support.data[i] = mask.data[i] >= 0.5f ? 1 : 0;

  for (double s : scales) {
    ActivationStack::Level L;
    L.scale = s;
    L.width = std::max(1, static_cast<int>(std::lround(mask.width * s)));
    L.height = std::max(1, static_cast<int>(std::lround(mask.height * s)));
    const GrayF scaled = resize_bilinear(mask, L.width, L.height);
    L.maps.reserve(bank.size());
    for (const auto& k : bank) L.maps.push_back(convolve(scaled, k));
    st.levels.push_back(std::move(L));
  }
  return st;
}

double Threshold::resolve(const ActivationStack& stack) const {
  if (mode == Mode::Absolute) return value;
  return value * static_cast<double>(stack.global_max());
}

void FlowField::set(int x, int y, std::span<const Vec2f> v) {
  const auto i = index(x, y);
  count[i] = static_cast<std::uint8_t>(std::min<std::size_t>(v.size(), 2));
  dirs[i] = {Vec2f::Zero(), Vec2f::Zero()};
  for (std::size_t k = 0; k < count[i]; ++k) dirs[i][k] = v[k];
}

std::size_t FlowField::nonzero_pixels() const {
  return static_cast<std::size_t>(std::count_if(count.begin(), count.end(), [](auto c) { return c > 0; }));
}

std::vector<Vec2f> histogram_directions(std::span<const float> hist, std::span<const double> angles) {
  const int n = static_cast<int>(hist.size());
  const int nonzero = static_cast<int>(std::count_if(hist.begin(), hist.end(), [](float v) { return v > 0; }));
  if (nonzero == 0 || 2 * nonzero > n) return {};

  // Each nonzero bin climbs to a local maximum; bins sharing a peak form a block.
  std::vector<int> peak_of(n, -1);
  for (int i = 0; i < n; ++i) {
    if (!(hist[i] > 0)) continue;
    int j = i;
    while (true) {
      const int l = (j + n - 1) % n, r = (j + 1) % n;
      const bool up_l = hist[l] > hist[j], up_r = hist[r] > hist[j];
      if (!up_l && !up_r) break;
      j = (up_r && (!up_l || hist[r] > hist[l])) ? r : l;
    }
    peak_of[i] = j;
  }
  // Flat tops split across adjacent equal peaks belong to one block.
  for (int i = 0; i < n; ++i) {
    if (peak_of[i] < 0) continue;
    int p = peak_of[i];
    for (int guard = 0; guard < n; ++guard) {
      const int q = (p + n - 1) % n;
      if (q == peak_of[i] || !(hist[q] > 0) || hist[q] != hist[p] || peak_of[q] != q) break;
      p = q;
    }
    peak_of[i] = p;
  }

  struct Block {
    int peak;
    Vec2f v;
  };
  std::vector<Block> blocks;
  for (int i = 0; i < n; ++i) {
    if (peak_of[i] < 0) continue;
    const int p = peak_of[i];
    auto it = std::find_if(blocks.begin(), blocks.end(), [&](const Block& b) { return b.peak == p; });
    if (it == blocks.end()) {
      blocks.push_back({p, Vec2f::Zero()});
      it = blocks.end() - 1;
    }
    double delta = std::remainder(angles[i] - angles[p], pi);  // in [-pi/2, pi/2]
    const double a = angles[p] + delta;
    it->v += static_cast<float>(hist[i]) * Vec2f(static_cast<float>(std::cos(a)), static_cast<float>(std::sin(a)));
  }
  std::stable_sort(blocks.begin(), blocks.end(),
                   [](const Block& a, const Block& b) { return a.v.squaredNorm() > b.v.squaredNorm(); });
  std::vector<Vec2f> out;
  for (const auto& b : blocks) {
    if (out.size() == 2) break;
    if (b.v.squaredNorm() > 0) out.push_back(b.v);
  }
  return out;
}

FlowField extract_flow(const ActivationStack& stack, const Threshold& threshold) {
  FlowField field(stack.width, stack.height);
  const double thr = threshold.resolve(stack);
  if (!(thr > 0)) return field;  // nothing can pass a non-positive relative cut
  const std::size_t na = stack.angles.size();
#pragma omp parallel for schedule(static)
  for (int y = 0; y < stack.height; ++y) {
    std::vector<float> hist(na);
    for (int x = 0; x < stack.width; ++x) {
      if (!stack.support.at(x, y)) continue;
      for (std::size_t a = 0; a < na; ++a) {
        float best = 0;
        for (std::size_t l = 0; l < stack.levels.size(); ++l) {
          const float v = stack.value(l, a, x, y);
          if (v >= thr) best = std::max(best, v);
        }
        hist[a] = best;
      }
      const auto dirs = histogram_directions(hist, stack.angles);
      field.set(x, y, dirs);
    }
  }
  return field;
}

FlowField compute_flow(const GrayF& mask, const BankParams& bank, const Threshold& threshold,
                       std::span<const double> scales) {
  const auto kernels = make_bank(bank);
  const auto defaults = default_scales();
  const auto stack = directional_activations(mask, kernels, scales.empty() ? std::span<const double>(defaults) : scales);
  return extract_flow(stack, threshold);
}

Rgb8 visualize(const FlowField& f) {
  Rgb8 img(f.width, f.height, 3, 0);
  float vmax = 0;
  for (std::size_t i = 0; i < f.count.size(); ++i)
    if (f.count[i]) vmax = std::max(vmax, f.dirs[i][0].norm());
  if (vmax <= 0) return img;
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      const auto d = f.at(x, y);
      if (d.empty()) continue;
      double ang = std::atan2(d[0].y(), d[0].x());
      if (ang < 0) ang += pi;
      if (ang >= pi) ang -= pi;
      const double hue = ang / pi * 6.0;  // full hue circle spans 180 degrees
      const double val = std::min(1.0, static_cast<double>(d[0].norm() / vmax));
      const int sector = static_cast<int>(hue) % 6;
      const double frac = hue - std::floor(hue);
      const double p = 0, q = val * (1 - frac), t = val * frac;
      double r = 0, g = 0, b = 0;
      switch (sector) {
        case 0: r = val, g = t, b = p; break;
        case 1: r = q, g = val, b = p; break;
        case 2: r = p, g = val, b = t; break;
        case 3: r = p, g = q, b = val; break;
        case 4: r = t, g = p, b = val; break;
        default: r = val, g = p, b = q; break;
      }
      img.at(x, y, 0) = static_cast<std::uint8_t>(std::lround(255 * r));
      img.at(x, y, 1) = static_cast<std::uint8_t>(std::lround(255 * g));
      img.at(x, y, 2) = static_cast<std::uint8_t>(std::lround(255 * b));
    }
  }
  return img;
}

}  // namespace arbor::flow
