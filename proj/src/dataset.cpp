#include "arbor/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace arbor::dataset {

namespace {

// Summed-area table with one row/column of zero padding.
std::vector<std::int64_t> integral(const Gray8& m) {
  const std::size_t w = m.width + 1;
  std::vector<std::int64_t> s(w * (m.height + 1), 0);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      s[(y + 1) * w + x + 1] = (m.at(x, y) ? 1 : 0) + s[y * w + x + 1] + s[(y + 1) * w + x] - s[y * w + x];
  return s;
}

}  // namespace

std::vector<CropSpec> gen_crops(const Gray8& mask, int count, std::uint64_t seed, const CropOptions& opt) {
  if (mask.width < opt.size || mask.height < opt.size) {
    throw Error(Errc::ImageTooSmall, "image must be at least " + std::to_string(opt.size) + " pixels square");
  }
  const auto sat = integral(mask);
  const std::size_t w = mask.width + 1;
  const auto ones = [&](const CropSpec& c) {
    const int x0 = c.left(), y0 = c.top(), x1 = x0 + c.size, y1 = y0 + c.size;
    return sat[y1 * w + x1] - sat[y0 * w + x1] - sat[y1 * w + x0] + sat[y0 * w + x0];
  };
  const std::int64_t area = static_cast<std::int64_t>(opt.size) * opt.size;
  const int half = opt.size / 2;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ux(half, mask.width - opt.size + half);
  std::uniform_int_distribution<int> uy(half, mask.height - opt.size + half);
  std::vector<CropSpec> out;
  const long budget = static_cast<long>(count) * opt.attempts_per_crop;
  for (long attempt = 0; attempt < budget && static_cast<int>(out.size()) < count; ++attempt) {
    CropSpec c{ux(rng), uy(rng), opt.size};
    const auto n = ones(c);
    if (n == 0 || n == area) continue;
    const bool far = std::all_of(out.begin(), out.end(), [&](const CropSpec& o) {
      return std::hypot(o.cx - c.cx, o.cy - c.cy) >= opt.min_separation;
    });
    if (far) out.push_back(c);
  }
  return out;
}

double saturation(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const int mx = std::max({r, g, b});
  const int mn = std::min({r, g, b});
  return mx == 0 ? 0.0 : static_cast<double>(mx - mn) / mx;
}

double percentile(std::vector<double>& values, double q) {
  if (values.empty()) throw Error(Errc::EmptyImage, "percentile of no values");
  std::sort(values.begin(), values.end());
  const double rank = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double t = rank - static_cast<double>(lo);
  return values[lo] + t * (values[hi] - values[lo]);
}

SaturationFeature saturation_features(const Rgb8& img) {
  if (img.empty()) throw Error(Errc::EmptyImage, "saturation of an empty image");
  if (img.channels < 3) throw Error(Errc::InvalidParams, "saturation needs an RGB image");
  std::vector<double> s;
  s.reserve(img.pixel_count());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) s.push_back(saturation(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)));
  SaturationFeature f;
  f.p30 = percentile(s, 0.30);
  f.p90 = percentile(s, 0.90);
  return f;
}

namespace {

double dist2(const SaturationFeature& f, const std::array<double, 2>& c) {
  const double a = f.p30 - c[0], b = f.p90 - c[1];
  return a * a + b * b;
}

}  // namespace

Clustering cluster_features(std::span<const SaturationFeature> features, int k, std::uint64_t seed) {
  if (k < 1) throw Error(Errc::InvalidParams, "k must be positive");
  std::vector<std::array<double, 2>> distinct;
  for (const auto& f : features) {
    const std::array<double, 2> p{f.p30, f.p90};
    if (std::find(distinct.begin(), distinct.end(), p) == distinct.end()) distinct.push_back(p);
    if (static_cast<int>(distinct.size()) >= k) break;
  }
  if (static_cast<int>(distinct.size()) < k) {
    throw Error(Errc::InsufficientPoints, "k-means needs at least k distinct points");
  }

  std::mt19937_64 rng(seed);
  Clustering out;
  const std::size_t n = features.size();
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const auto& first = features[pick(rng)];
  out.centers.push_back({first.p30, first.p90});
  std::vector<double> d2(n);
  while (static_cast<int>(out.centers.size()) < k) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : out.centers) best = std::min(best, dist2(features[i], c));
      d2[i] = best;
      total += best;
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng), acc = 0;
    std::size_t chosen = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (d2[i] > 0 && acc >= target) {
        chosen = i;
        break;
      }
    }
    // Fall back to the farthest point if rounding left us on a duplicate.
    if (d2[chosen] == 0) chosen = static_cast<std::size_t>(std::max_element(d2.begin(), d2.end()) - d2.begin());
    out.centers.push_back({features[chosen].p30, features[chosen].p90});
  }

  out.assignments.assign(n, 0);
  constexpr int kMaxIterations = 1000;
  constexpr double kTolerance = 1e-9;
  for (out.iterations = 1; out.iterations <= kMaxIterations; ++out.iterations) {
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      for (int c = 1; c < k; ++c)
        if (dist2(features[i], out.centers[c]) < dist2(features[i], out.centers[best])) best = c;
      out.assignments[i] = best;
    }
    std::vector<std::array<double, 2>> sum(k, {0.0, 0.0});
    std::vector<int> cnt(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[out.assignments[i]][0] += features[i].p30;
      sum[out.assignments[i]][1] += features[i].p90;
      ++cnt[out.assignments[i]];
    }
    double moved = 0;
    for (int c = 0; c < k; ++c) {
      if (cnt[c] == 0) continue;  // empty cluster keeps its center
      const std::array<double, 2> next{sum[c][0] / cnt[c], sum[c][1] / cnt[c]};
      moved = std::max(moved, std::hypot(next[0] - out.centers[c][0], next[1] - out.centers[c][1]));
      out.centers[c] = next;
    }
    if (moved <= kTolerance) break;
  }
  out.iterations = std::min(out.iterations, kMaxIterations);
  out.cost = 0;
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    for (int c = 1; c < k; ++c)
      if (dist2(features[i], out.centers[c]) < dist2(features[i], out.centers[best])) best = c;
    out.assignments[i] = best;
    out.cost += dist2(features[i], out.centers[best]);
  }
  return out;
}

double composite_weight(double dist_a, double dist_b) {
  const double s = dist_a + dist_b;
  return s > 0 ? dist_b / s : 0.5;
}

GrayF composite_masks(const GrayF& mask_a, const GrayF& mask_b, const Rgb8& image,
                      std::span<const std::array<double, 2>> centers, const CompositeOptions& opt) {
  if (!mask_a.same_shape(mask_b) || mask_a.width != image.width || mask_a.height != image.height) {
    throw Error(Errc::DimensionMismatch, "masks and image must share dimensions");
  }
  if (centers.size() != 2) throw Error(Errc::InvalidParams, "compositing needs exactly two centers");
  if (opt.window < 1 || opt.window % 2 == 0) throw Error(Errc::InvalidParams, "window must be odd and positive");
  const int w = image.width, h = image.height, r = opt.window / 2;
  std::vector<double> sat(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      sat[static_cast<std::size_t>(y) * w + x] = saturation(image.at(x, y, 0), image.at(x, y, 1), image.at(x, y, 2));

  GrayF out(w, h);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    std::vector<double> buf;
    buf.reserve(static_cast<std::size_t>(opt.window) * opt.window);
    for (int x = 0; x < w; ++x) {
      buf.clear();
      for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r); ++yy)
        for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx) buf.push_back(sat[static_cast<std::size_t>(yy) * w + xx]);
      SaturationFeature f;
      f.p30 = percentile(buf, 0.30);
      f.p90 = percentile(buf, 0.90);
      const double wa = composite_weight(std::sqrt(dist2(f, centers[0])), std::sqrt(dist2(f, centers[1])));
      out.at(x, y) = static_cast<float>(wa * mask_a.at(x, y) + (1 - wa) * mask_b.at(x, y));
    }
  }
  return out;
}

}  // namespace arbor::dataset
