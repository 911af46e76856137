#include "arbor/image.hpp"

#include <algorithm>
#include <cmath>

namespace arbor {

GrayF to_gray(const Image<std::uint8_t>& img) {
  if (img.channels != 1 && img.channels != 3 && img.channels != 4) {
    throw Error(Errc::InvalidParams, "to_gray expects 1, 3 or 4 channels");
  }
  GrayF out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (img.channels == 1) {
        out.at(x, y) = img.at(x, y);
      } else {
        out.at(x, y) = static_cast<float>(kLumaR * img.at(x, y, 0) + kLumaG * img.at(x, y, 1) +
                                          kLumaB * img.at(x, y, 2));
      }
    }
  }
  return out;
}

GrayF resize_bilinear(const GrayF& src, int w, int h) {
  if (src.empty() || w <= 0 || h <= 0) throw Error(Errc::InvalidParams, "resize of empty image");
  if (w == src.width && h == src.height) return src;
  GrayF out(w, h);
  const double sx = static_cast<double>(src.width) / w;
  const double sy = static_cast<double>(src.height) / h;
  for (int y = 0; y < h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double tx = fx - x0;
      const double top = (1 - tx) * src.at(x0, y0) + tx * src.at(x1, y0);
      const double bot = (1 - tx) * src.at(x0, y1) + tx * src.at(x1, y1);
      out.at(x, y) = static_cast<float>((1 - ty) * top + ty * bot);
    }
  }
  return out;
}

Gray8 binarize(const Image<std::uint8_t>& img, std::uint8_t threshold) {
  Gray8 out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out.at(x, y) = img.at(x, y, 0) >= threshold ? 1 : 0;
  return out;
}

}  // namespace arbor
