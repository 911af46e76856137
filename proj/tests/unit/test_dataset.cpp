#include <doctest.h>

#include <algorithm>
#include <random>

#include "arbor/dataset.hpp"

using namespace arbor;
using namespace arbor::dataset;

namespace {

Gray8 half_mask(int w, int h) {
  Gray8 m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = w / 2; x < w; ++x) m.at(x, y) = 1;
  return m;
}

Rgb8 uniform(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  Rgb8 img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(x, y, 0) = r;
      img.at(x, y, 1) = g;
      img.at(x, y, 2) = b;
    }
  return img;
}

bool both_values(const Gray8& m, const CropSpec& c) {
  bool zero = false, one = false;
  for (int y = c.top(); y < c.top() + c.size; ++y)
    for (int x = c.left(); x < c.left() + c.size; ++x) (m.at(x, y) ? one : zero) = true;
  return zero && one;
}

}  // namespace

TEST_CASE("gen_crops on a half/half mask") {
  const Gray8 m = half_mask(3840, 2160);
  const auto crops = gen_crops(m, 100, 7);
  REQUIRE(crops.size() == 100);
  for (std::size_t i = 0; i < crops.size(); ++i) {
    const auto& c = crops[i];
    CHECK(c.left() >= 0);
    CHECK(c.top() >= 0);
    CHECK(c.left() + c.size <= m.width);
    CHECK(c.top() + c.size <= m.height);
    CHECK(both_values(m, c));
    for (std::size_t j = 0; j < i; ++j)
      CHECK(std::hypot(c.cx - crops[j].cx, c.cy - crops[j].cy) >= kMinCenterSeparation);
  }
  const auto again = gen_crops(m, 100, 7);
  REQUIRE(again.size() == crops.size());
  for (std::size_t i = 0; i < crops.size(); ++i) {
    CHECK(again[i].cx == crops[i].cx);
    CHECK(again[i].cy == crops[i].cy);
  }
}

TEST_CASE("gen_crops edge cases") {
  CHECK(gen_crops(Gray8(1024, 1024), 10, 1).empty());
  CHECK_THROWS_WITH_AS(gen_crops(Gray8(511, 2000), 1, 1), doctest::Contains("ImageTooSmall"), Error);
  // A small image fits only a handful of separated crops; the budget ends the search.
  const auto few = gen_crops(half_mask(600, 520), 50, 3);
  CHECK(few.size() < 50);
  CHECK(!few.empty());
  // Crop extraction copies the window.
  Gray8 m = half_mask(600, 520);
  const auto c = crop(m, CropSpec{300, 260, 512});
  CHECK(c.width == 512);
  CHECK(c.at(0, 0) == 0);
  CHECK(c.at(511, 0) == 1);
  CHECK(c.at(256, 100) == 1);
  CHECK(c.at(255, 100) == 0);
}

TEST_CASE("saturation features") {
  const auto gray = saturation_features(uniform(8, 8, 120, 120, 120));
  CHECK(gray.p30 == 0);
  CHECK(gray.p90 == 0);
  const auto red = saturation_features(uniform(8, 8, 255, 0, 0));
  CHECK(red.p30 == 1);
  CHECK(red.p90 == 1);
  CHECK(saturation(0, 0, 0) == 0);
  CHECK(saturation(200, 100, 50) == doctest::Approx(0.75));

  std::vector<double> v{0.5, 0.0, 0.9, 0.3, 0.1, 0.7, 0.2, 0.8, 0.4, 0.6};
  CHECK(percentile(v, 0.30) == doctest::Approx(0.27).epsilon(1e-12));
  CHECK(percentile(v, 0.90) == doctest::Approx(0.81).epsilon(1e-12));
  std::vector<double> none;
  CHECK_THROWS_AS(percentile(none, 0.5), Error);

  // Ten pixels whose saturations are 0.0 .. 0.9 exactly (max channel 250).
  Rgb8 img(10, 1, 3);
  for (int i = 0; i < 10; ++i) {
    img.at(i, 0, 0) = 250;
    img.at(i, 0, 1) = static_cast<std::uint8_t>(250 - 25 * i);
    img.at(i, 0, 2) = 250;
  }
  const auto f = saturation_features(img);
  CHECK(f.p30 == doctest::Approx(0.27));
  CHECK(f.p90 == doctest::Approx(0.81));
  CHECK_THROWS_WITH_AS(saturation_features(Rgb8()), doctest::Contains("EmptyImage"), Error);
}

TEST_CASE("k-means clustering") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0, 0.01);
  std::vector<SaturationFeature> f;
  double sa[2] = {0, 0}, sb[2] = {0, 0};
  for (int i = 0; i < 50; ++i) {
    SaturationFeature a{0.1 + g(rng), 0.2 + g(rng)}, b{0.8 + g(rng), 0.9 + g(rng)};
    sa[0] += a.p30, sa[1] += a.p90, sb[0] += b.p30, sb[1] += b.p90;
    f.push_back(a);
    f.push_back(b);
  }
  const auto c = cluster_features(f, 2, 1);
  REQUIRE(c.centers.size() == 2);
  const int ia = c.centers[0][0] < c.centers[1][0] ? 0 : 1;
  CHECK(std::abs(c.centers[ia][0] - sa[0] / 50) < 1e-6);
  CHECK(std::abs(c.centers[ia][1] - sa[1] / 50) < 1e-6);
  CHECK(std::abs(c.centers[1 - ia][0] - sb[0] / 50) < 1e-6);
  CHECK(std::abs(c.centers[1 - ia][1] - sb[1] / 50) < 1e-6);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(c.assignments[i] == (i % 2 == 0 ? ia : 1 - ia));

  auto shuffled = f;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(cluster_features(shuffled, 2, 9).cost == doctest::Approx(c.cost).epsilon(1e-12));

  const std::vector<SaturationFeature> same(5, SaturationFeature{0.3, 0.4});
  CHECK_THROWS_WITH_AS(cluster_features(same, 2, 1), doctest::Contains("InsufficientPoints"), Error);
}

TEST_CASE("composite masks") {
  const Rgb8 img = uniform(8, 8, 255, 0, 0);  // every neighborhood feature is (1, 1)
  GrayF a(8, 8), b(8, 8);
  for (int i = 0; i < 64; ++i) {
    a.data[i] = static_cast<float>(i % 3) / 2;
    b.data[i] = static_cast<float>(i % 5) / 4;
  }
  const std::array<double, 2> centers[] = {{1, 1}, {0, 0}};
  auto out = composite_masks(a, b, img, centers);
  for (int i = 0; i < 64; ++i) CHECK(out.data[i] == doctest::Approx(a.data[i]));
  const std::array<double, 2> flipped[] = {{0, 0}, {1, 1}};
  out = composite_masks(a, b, img, flipped);
  for (int i = 0; i < 64; ++i) CHECK(out.data[i] == doctest::Approx(b.data[i]));
  out = composite_masks(a, a, img, std::span<const std::array<double, 2>>(centers));
  for (int i = 0; i < 64; ++i) CHECK(out.data[i] == doctest::Approx(a.data[i]));

  CHECK(composite_weight(0, 2) == 1);
  CHECK(composite_weight(1, 3) + composite_weight(3, 1) == doctest::Approx(1));
  CHECK(composite_weight(0, 0) == 0.5);

  CHECK_THROWS_WITH_AS(composite_masks(a, GrayF(7, 8), img, centers), doctest::Contains("DimensionMismatch"), Error);
}

TEST_CASE("composite masks on a two-region image against a hand oracle") {
  // Left half pure red (s = 1), right half gray (s = 0); 3x3 window.
  Rgb8 img = uniform(8, 8, 128, 128, 128);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 4; ++x) img.at(x, y, 0) = 255, img.at(x, y, 1) = 0, img.at(x, y, 2) = 0;
  GrayF a(8, 8, 1, 1.0f), b(8, 8, 1, 0.0f);
  const std::array<double, 2> centers[] = {{1, 1}, {0, 0}};
  const auto out = composite_masks(a, b, img, centers, CompositeOptions{3});
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      std::vector<double> s;
      for (int yy = std::max(0, y - 1); yy <= std::min(7, y + 1); ++yy)
        for (int xx = std::max(0, x - 1); xx <= std::min(7, x + 1); ++xx) s.push_back(xx < 4 ? 1.0 : 0.0);
      auto s2 = s;
      const double p30 = percentile(s, 0.3), p90 = percentile(s2, 0.9);
      const double da = std::hypot(p30 - 1, p90 - 1), db = std::hypot(p30, p90);
      CHECK(out.at(x, y) == doctest::Approx(db / (da + db)).epsilon(1e-6));
    }
  }
  CHECK(out.at(0, 0) == doctest::Approx(1));
  CHECK(out.at(7, 7) == doctest::Approx(0));
}
