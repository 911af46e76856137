#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "arbor/image.hpp"

namespace arbor::dataset {

inline constexpr int kCropSize = 512;
inline constexpr double kMinCenterSeparation = 50.0;

/// A square training crop, centered on integer pixel `cx, cy`.
struct CropSpec {
  int cx = 0, cy = 0;
  int size = kCropSize;

  int left() const { return cx - size / 2; }
  int top() const { return cy - size / 2; }
};

struct CropOptions {
  int size = kCropSize;
  double min_separation = kMinCenterSeparation;
  int attempts_per_crop = 200;  ///< rejection budget is count * attempts_per_crop
};

/// Rejection-samples up to `count` crops that lie fully inside the mask,
/// contain both mask values and keep centers `min_separation` apart.
std::vector<CropSpec> gen_crops(const Gray8& mask, int count, std::uint64_t seed, const CropOptions& opt = {});

template <typename T>
Image<T> crop(const Image<T>& img, const CropSpec& c) {
  Image<T> out(c.size, c.size, img.channels);
  for (int y = 0; y < c.size; ++y)
    for (int x = 0; x < c.size; ++x)
      for (int k = 0; k < img.channels; ++k) out.at(x, y, k) = img.at(c.left() + x, c.top() + y, k);
  return out;
}

struct SaturationFeature {
  double p30 = 0, p90 = 0;
};

/// HSV saturation (max - min) / max of an RGB pixel, 0 for black.
double saturation(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// Percentile with linear interpolation between order statistics: rank
/// q * (n - 1) of the sorted values. Reorders `values`.
double percentile(std::vector<double>& values, double q);

SaturationFeature saturation_features(const Rgb8& img);

struct Clustering {
  std::vector<std::array<double, 2>> centers;
  std::vector<int> assignments;
  double cost = 0;  ///< sum of squared distances to assigned centers
  int iterations = 0;
};

/// Lloyd's k-means with k-means++ seeding.
Clustering cluster_features(std::span<const SaturationFeature> features, int k, std::uint64_t seed);

struct CompositeOptions {
  int window = 15;  ///< odd side of the square neighborhood, clamped at borders
};

/// Blend of two candidate masks weighted per pixel by how close the local
/// saturation feature lies to each cluster center. Masks are in [0, 1];
/// centers[0] belongs to mask A and centers[1] to mask B.
GrayF composite_masks(const GrayF& mask_a, const GrayF& mask_b, const Rgb8& image,
                      std::span<const std::array<double, 2>> centers, const CompositeOptions& opt = {});

/// Weight of mask A from the feature distances to both centers.
double composite_weight(double dist_a, double dist_b);

}  // namespace arbor::dataset
