#include "arbor/flow_kernels.hpp"

#include <algorithm>
#include <vector>

namespace arbor::flow {

GrayF convolve_reference(const GrayF& src, const DirectionalKernel& kernel) {
  const int h = kernel.half();
  GrayF out(src.width, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      double acc = 0;
      for (int dy = -h; dy <= h; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= src.height) continue;
        for (int dx = -h; dx <= h; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= src.width) continue;
          acc += static_cast<double>(kernel.at(dx, dy)) * src.at(xx, yy);
        }
      }
      out.at(x, y) = static_cast<float>(acc);
    }
  }
  return out;
}

namespace {

struct Tap {
  int dx;
  float w;
};

}  // namespace

GrayF convolve(const GrayF& src, const DirectionalKernel& kernel) {
  const int h = kernel.half();
  const int W = src.width, H = src.height;
  std::vector<std::vector<Tap>> rows(kernel.N);
  for (int dy = -h; dy <= h; ++dy)
    for (int dx = -h; dx <= h; ++dx)
      if (const float w = kernel.at(dx, dy); w != 0.0f) rows[dy + h].push_back({dx, w});

  std::vector<char> live(H, 0);
  for (int y = 0; y < H; ++y) {
    const float* row = &src.data[static_cast<std::size_t>(y) * W];
    live[y] = std::any_of(row, row + W, [](float v) { return v != 0.0f; });
  }

  GrayF out(W, H);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < H; ++y) {
    float* dst = &out.data[static_cast<std::size_t>(y) * W];
    for (int dy = -h; dy <= h; ++dy) {
      const int yy = y + dy;
      if (yy < 0 || yy >= H || !live[yy]) continue;
      const float* in = &src.data[static_cast<std::size_t>(yy) * W];
      for (const Tap& t : rows[dy + h]) {
        const int x0 = std::max(0, -t.dx);
        const int x1 = std::min(W, W - t.dx);
        const float* s = in + t.dx;
        for (int x = x0; x < x1; ++x) dst[x] += t.w * s[x];
      }
    }
  }
  return out;
}

}  // namespace arbor::flow
