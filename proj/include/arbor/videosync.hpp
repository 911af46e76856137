#pragma once

#include <span>
#include <vector>

#include "arbor/image.hpp"

namespace arbor::videosync {

/// Per-frame-pair motion magnitudes of one video stream.
struct MotionSeries {
  std::vector<double> values;  ///< values[i] = sum |frame[i+1] - frame[i]|
  double fps = 30.0;
};

/// L1 differences between consecutive gray frames.
MotionSeries frame_diff_sequence(std::span<const GrayF> frames, double fps = 30.0);

/// Zero-mean, unit-variance correlation of a[i] with b[i + lag] over their
/// overlap. Zero when either side has no variance.
double normalized_xcorr(std::span<const double> a, std::span<const double> b, int lag);

/// Lag in [-max_lag, max_lag] maximizing normalized_xcorr, where a positive
/// lag means `b` trails `a` (b[i + lag] matches a[i]). Ties go to the smaller
/// |lag|, then to the negative lag.
int best_offset(const MotionSeries& a, const MotionSeries& b, int max_lag);

/// Worst-case residual timing error of an integer-frame alignment.
inline double residual_error_seconds(double fps) { return 1.0 / (2.0 * fps); }

}  // namespace arbor::videosync
