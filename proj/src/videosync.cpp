#include "arbor/videosync.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace arbor::videosync {

MotionSeries frame_diff_sequence(std::span<const GrayF> frames, double fps) {
  if (frames.size() < 2) throw Error(Errc::TooFewFrames, "need at least two frames");
  MotionSeries out;
  out.fps = fps;
  out.values.reserve(frames.size() - 1);
  for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
    const auto& f0 = frames[i];
    const auto& f1 = frames[i + 1];
    if (!f0.same_shape(f1) || f0.channels != f1.channels) {
      throw Error(Errc::DimensionMismatch, "frame " + std::to_string(i + 1) + " has different dimensions");
    }
    double sum = 0;
    for (std::size_t k = 0; k < f0.data.size(); ++k) sum += std::abs(static_cast<double>(f1.data[k]) - f0.data[k]);
    out.values.push_back(sum);
  }
  return out;
}

double normalized_xcorr(std::span<const double> a, std::span<const double> b, int lag) {
  const long begin = std::max(0L, -static_cast<long>(lag));
  const long end = std::min(static_cast<long>(a.size()), static_cast<long>(b.size()) - lag);
  const long n = end - begin;
  if (n < 2) return 0.0;
  double ma = 0, mb = 0;
  for (long i = begin; i < end; ++i) {
    ma += a[i];
    mb += b[i + lag];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (long i = begin; i < end; ++i) {
    const double da = a[i] - ma;
    const double db = b[i + lag] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0 || sbb <= 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

int best_offset(const MotionSeries& a, const MotionSeries& b, int max_lag) {
  if (a.values.empty() || b.values.empty()) throw Error(Errc::EmptySeries, "motion series is empty");
  const auto shortest = static_cast<int>(std::min(a.values.size(), b.values.size()));
  if (max_lag < 0 || max_lag >= shortest) {
    throw Error(Errc::InvalidParams, "max_lag must lie in [0, min length)");
  }
  int best = 0;
  double best_score = normalized_xcorr(a.values, b.values, 0);
  for (int mag = 1; mag <= max_lag; ++mag) {
    for (int lag : {-mag, mag}) {
      const double s = normalized_xcorr(a.values, b.values, lag);
      if (s > best_score) {
        best_score = s;
        best = lag;
      }
    }
  }
  return best;
}

}  // namespace arbor::videosync
