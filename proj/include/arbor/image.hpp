#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "arbor/error.hpp"

namespace arbor {

/// Dense row-major image with interleaved channels. Pixel (x, y) has its
/// center at integer coordinates (x, y); x grows right, y grows down.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c = 1, T fill = T{})
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  bool empty() const noexcept { return data.empty(); }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width) * height; }
  bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width && y < height; }

  T& at(int x, int y, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  const T& at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool same_shape(const Image& o) const noexcept { return width == o.width && height == o.height; }
};

using GrayF = Image<float>;
using Gray8 = Image<std::uint8_t>;
using Rgb8 = Image<std::uint8_t>;  // channels == 3, RGB order

/// Rec. 601 luma weights used for every RGB to gray conversion.
inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

/// Gray float image in [0, 255] from an 8-bit image with 1 or 3 channels.
GrayF to_gray(const Image<std::uint8_t>& img);

/// Bilinear resample to (w, h) using pixel-center alignment and edge clamping.
GrayF resize_bilinear(const GrayF& src, int w, int h);

/// Threshold a gray image into {0, 1}.
Gray8 binarize(const Image<std::uint8_t>& img, std::uint8_t threshold = 128);

}  // namespace arbor
