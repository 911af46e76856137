#include <doctest.h>

#include <numbers>
#include <random>

#include "arbor/flow_kernels.hpp"
#include "arbor/flowfield.hpp"
#include "synth.hpp"

using namespace arbor;
using namespace arbor::flow;
using std::numbers::pi;

namespace {

constexpr double kDeg = pi / 180;

double line_angle(const Vec2f& v) { return std::atan2(v.y(), v.x()); }

// Fraction of masked pixels at least `margin` from the border whose primary
// direction is within `tol` of theta.
double recovery(const FlowField& f, const GrayF& m, double theta, double tol, int margin) {
  int total = 0, ok = 0;
  for (int y = margin; y < m.height - margin; ++y)
    for (int x = margin; x < m.width - margin; ++x) {
      if (m.at(x, y) < 0.5) continue;
      ++total;
      const auto d = f.at(x, y);
      if (!d.empty() && synth::angle_between_lines(line_angle(d[0]), theta) <= tol) ++ok;
    }
  return total ? static_cast<double>(ok) / total : 0.0;
}

}  // namespace

TEST_CASE("clamped bank kernels carry equal mass at every angle") {
  const auto bank = make_bank();
  const auto sum = [](const DirectionalKernel& k) {
    double s = 0;
    for (float w : k.weights) s += w;
    return s;
  };
  const double ref = sum(bank[0]);
  for (const auto& k : bank) CHECK(sum(k) == doctest::Approx(ref).epsilon(0.02));
}

TEST_CASE("kernel weight at the origin is one for every angle") {
  for (const auto& k : make_bank(BankParams::standard())) CHECK(k.at(0, 0) == doctest::Approx(1.0));
  for (const auto& k : make_bank(BankParams::literal())) CHECK(k.at(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("kernel is even under p -> -p") {
  for (const auto& k : make_bank(BankParams::literal())) {
    const int h = k.half();
    for (int dy = -h; dy <= h; ++dy)
      for (int dx = -h; dx <= h; ++dx) CHECK(k.at(dx, dy) == k.at(-dx, -dy));
  }
}

TEST_CASE("kernel is continuous at d = 1 and d = 1 + sigma") {
  const double r = 4, s = 1.8;
  for (int i = 0; i < 18; ++i) {
    const double th = i * 10 * kDeg;
    const Vec2 v(std::cos(th), std::sin(th)), perp(-v.y(), v.x());
    for (double along : {-2.0, 0.0, 1.5}) {
      for (double d : {1.0, 1.0 + s}) {
        const Vec2 p = along * v + d * r * perp;
        const double at = kernel_weight(p.x(), p.y(), th, r, s, r);
        const Vec2 in = along * v + (d * r - 1e-9) * perp;
        const Vec2 out = along * v + (d * r + 1e-9) * perp;
        CHECK(std::abs(at) < 1e-6);
        CHECK(std::abs(kernel_weight(in.x(), in.y(), th, r, s, r) - at) < 1e-6);
        CHECK(std::abs(kernel_weight(out.x(), out.y(), th, r, s, r) - at) < 1e-6);
      }
    }
  }
}

TEST_CASE("hand-evaluated kernel value") {
  const auto k = make_kernel(0, 4, 1.8, 35);
  CHECK(k.at(0, 2) == doctest::Approx(0.5 * std::cos(pi / 4)).epsilon(1e-6));
  CHECK(k.at(0, 2) == doctest::Approx(0.35355).epsilon(1e-4));
}

TEST_CASE("make_kernel rejects bad parameters") {
  CHECK_THROWS_AS(make_kernel(0, 0, 1.8, 35), Error);
  CHECK_THROWS_AS(make_kernel(0, 4, -1, 35), Error);
  CHECK_THROWS_AS(make_kernel(0, 4, 1.8, 34), Error);
}

TEST_CASE("default bank has 18 kernels from 0 to 170 degrees") {
  const auto bank = make_bank();
  REQUIRE(bank.size() == 18);
  for (std::size_t i = 0; i < bank.size(); ++i) CHECK(bank[i].theta == doctest::Approx(i * 10 * kDeg));
  CHECK(bank.back().theta < pi);
  CHECK(bank.front().r == 4.0);
  CHECK(bank.front().sigma == 1.8);
  CHECK(bank.front().N == 35);
}

TEST_CASE("kernel i+9 is the continuous kernel i rotated by 90 degrees") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-17, 17);
  for (int i = 0; i < 9; ++i) {
    const double a = i * 10 * kDeg, b = (i + 9) * 10 * kDeg;
    for (int s = 0; s < 50; ++s) {
      const double px = u(rng), py = u(rng);
      // Rotating p by +90 degrees maps direction a onto b.
      CHECK(kernel_weight(-py, px, b, 4, 1.8, 17.5) == doctest::Approx(kernel_weight(px, py, a, 4, 1.8, 17.5)));
    }
  }
}

TEST_CASE("parallel convolution matches the serial reference") {
  std::mt19937_64 rng(11);
  std::bernoulli_distribution coin(0.3);
  GrayF img(61, 47);
  for (auto& v : img.data) v = coin(rng) ? 1.0f : 0.0f;
  for (int i = 0; i < 4; ++i) img.data[static_cast<std::size_t>(i + 3) * img.width] = 0.5f;
  for (const auto& k : {make_kernel(0.3, 4, 1.8, 35, 17.5), make_kernel(2.0, 3.8, 0.8, 35, 17.5)}) {
    const auto a = convolve_reference(img, k);
    const auto b = convolve(img, k);
    for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(b.data[i] == doctest::Approx(a.data[i]).epsilon(1e-5).scale(10));
  }
}

TEST_CASE("activations: empty mask and identity response") {
  const auto bank = make_bank();
  const std::vector<double> one{1.0};
  GrayF zero(40, 40);
  const auto st = directional_activations(zero, bank, one);
  for (const auto& g : st.levels[0].maps)
    for (float v : g.data) CHECK(v == 0.0f);
  CHECK(extract_flow(st).nonzero_pixels() == 0);

  GrayF dot(40, 40);
  dot.at(20, 20) = 1;
  const auto sd = directional_activations(dot, bank, one);
  for (std::size_t a = 0; a < bank.size(); ++a) CHECK(sd.value(0, a, 20, 20) == doctest::Approx(1.0));

  CHECK_THROWS_AS(directional_activations(GrayF{}, bank, one), Error);
  const std::vector<double> bad{1.5};
  CHECK_THROWS_AS(directional_activations(dot, bank, bad), Error);
}

TEST_CASE("band argmax over the bank at scale 1 matches the band angle") {
  const auto bank = make_bank();
  const std::vector<double> one{1.0};
  for (int deg : {0, 30, 70, 120}) {
    const double th = deg * kDeg;
    const auto m = synth::band(96, 96, th, 8, 48, 48);
    const auto st = directional_activations(m, bank, one);
    std::size_t best = 0;
    for (std::size_t a = 1; a < bank.size(); ++a)
      if (st.value(0, a, 48, 48) > st.value(0, best, 48, 48)) best = a;
    CHECK(static_cast<int>(best) * 10 == deg);
  }
}

TEST_CASE("band at 40 degrees, width 6: one direction within 5 degrees") {
  const double th = 40 * kDeg;
  const auto m = synth::band(160, 160, th, 6, 80.3, 80.1);
  const auto f = compute_flow(m);
  CHECK(recovery(f, m, th, 5 * kDeg, 30) >= 0.95);
  int single = 0, total = 0;
  for (int y = 30; y < 130; ++y)
    for (int x = 30; x < 130; ++x)
      if (m.at(x, y) > 0.5) ++total, single += f.count_at(x, y) == 1;
  CHECK(static_cast<double>(single) / total >= 0.95);
}

TEST_CASE("disk interior is rejected by the blob rule") {
  const auto m = synth::disk(120, 120, 60, 60, 20);
  const auto f = compute_flow(m);
  int total = 0, none = 0;
  for (int y = 0; y < 120; ++y)
    for (int x = 0; x < 120; ++x)
      if (std::hypot(x - 60, y - 60) < 20) ++total, none += f.count_at(x, y) == 0;
  CHECK(static_cast<double>(none) / total >= 0.9);
}

TEST_CASE("crossing bands give two directions at the crossing") {
  const auto m = synth::max(synth::band(160, 160, 0, 6, 80, 80), synth::band(160, 160, pi / 2, 6, 80, 80));
  const auto f = compute_flow(m);
  int two = 0, total = 0;
  for (int y = 78; y <= 82; ++y)
    for (int x = 78; x <= 82; ++x) {
      ++total;
      const auto d = f.at(x, y);
      if (d.size() != 2) continue;
      const double a = line_angle(d[0]), b = line_angle(d[1]);
      const bool axes = (synth::angle_between_lines(a, 0) <= 5 * kDeg && synth::angle_between_lines(b, pi / 2) <= 5 * kDeg) ||
                        (synth::angle_between_lines(a, pi / 2) <= 5 * kDeg && synth::angle_between_lines(b, 0) <= 5 * kDeg);
      two += axes;
    }
  CHECK(two >= total / 2);
}

TEST_CASE("rotating a band by 10 degrees shifts the argmax kernel by one") {
  const auto bank = make_bank();
  const std::vector<double> one{1.0};
  // Majority argmax over pixels near the center line, away from the borders.
  const auto vote = [&](double theta) {
    const auto m = synth::band(96, 96, theta, 8, 48, 48);
    const auto st = directional_activations(m, bank, one);
    std::vector<int> votes(bank.size(), 0);
    for (int y = 28; y < 68; ++y)
      for (int x = 28; x < 68; ++x) {
        if (std::abs(-(x - 48) * std::sin(theta) + (y - 48) * std::cos(theta)) > 1) continue;
        std::size_t best = 0;
        for (std::size_t a = 1; a < bank.size(); ++a)
          if (st.value(0, a, x, y) > st.value(0, best, x, y)) best = a;
        ++votes[best];
      }
    return static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  };
  for (int deg = 0; deg < 180; deg += 10) CHECK((vote(deg * kDeg) + 1) % 18 == vote((deg + 10) * kDeg));
}

TEST_CASE("flow invariants: at most two nonzero vectors, threshold monotone off the blob rule") {
  const auto m = synth::max(synth::band(100, 100, 0.4, 5, 50, 50), synth::disk(100, 100, 25, 70, 9));
  const auto st = directional_activations(m, make_bank(), default_scales());
  // A pixel whose thresholded histogram is empty can never gain flow at a
  // higher threshold. Pixels dropped by the more-than-half rule can: fewer
  // bins survive a higher cut.
  const auto empty_histogram = [&](int x, int y, double thr) {
    for (std::size_t a = 0; a < st.angles.size(); ++a)
      for (std::size_t l = 0; l < st.levels.size(); ++l)
        if (st.value(l, a, x, y) >= thr) return false;
    return true;
  };
  double prev = -1;
  for (double t : {0.2, 0.35, 0.5, 0.7}) {
    const auto f = extract_flow(st, {Threshold::Mode::Relative, t});
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x) {
        CHECK(f.count_at(x, y) <= 2);
        for (const auto& v : f.at(x, y)) CHECK(v.norm() > 0);
        if (prev > 0 && empty_histogram(x, y, prev * st.global_max())) CHECK(f.count_at(x, y) == 0);
      }
    prev = t;
  }
}

TEST_CASE("absolute threshold") {
  const auto m = synth::band(64, 64, 0.0, 6, 32, 32);
  const auto st = directional_activations(m, make_bank(), default_scales());
  CHECK(Threshold{Threshold::Mode::Absolute, 3.0}.resolve(st) == 3.0);
  CHECK(extract_flow(st, {Threshold::Mode::Absolute, 1e9}).nonzero_pixels() == 0);
}

TEST_CASE("histogram blocks") {
  std::vector<double> angles(18);
  for (int i = 0; i < 18; ++i) angles[i] = i * 10 * kDeg;

  SUBCASE("all zero or too many nonzero bins give nothing") {
    std::vector<float> h(18, 0.0f);
    CHECK(histogram_directions(h, angles).empty());
    for (int i = 0; i < 10; ++i) h[i] = 1;
    CHECK(histogram_directions(h, angles).empty());
    h[9] = 0;  // exactly half is allowed
    CHECK(!histogram_directions(h, angles).empty());
  }
  SUBCASE("a block across the 170/0 wrap points along 0 degrees") {
    std::vector<float> h(18, 0.0f);
    h[17] = 1, h[0] = 2, h[1] = 1;
    const auto d = histogram_directions(h, angles);
    REQUIRE(d.size() == 1);
    CHECK(std::abs(d[0].y()) < 1e-5);
    CHECK(d[0].norm() == doctest::Approx(2 + 2 * std::cos(10 * kDeg)));
  }
  SUBCASE("two blocks separated by a local minimum, largest first") {
    std::vector<float> h(18, 0.0f);
    h[2] = 1, h[3] = 3, h[4] = 0.5f, h[5] = 2, h[6] = 1;
    const auto d = histogram_directions(h, angles);
    REQUIRE(d.size() == 2);
    CHECK(d[0].norm() > d[1].norm());
    // The minimum bin climbs to its larger neighbor and joins that block.
    const double sy = std::sin(20 * kDeg) + 3 * std::sin(30 * kDeg) + 0.5 * std::sin(40 * kDeg);
    const double sx = std::cos(20 * kDeg) + 3 * std::cos(30 * kDeg) + 0.5 * std::cos(40 * kDeg);
    CHECK(d[0].x() == doctest::Approx(sx));
    CHECK(d[0].y() == doctest::Approx(sy));
  }
  SUBCASE("only the two strongest of three blocks survive") {
    std::vector<float> h(18, 0.0f);
    h[0] = 1, h[6] = 3, h[12] = 2;
    const auto d = histogram_directions(h, angles);
    REQUIRE(d.size() == 2);
    CHECK(d[0].norm() == doctest::Approx(3));
    CHECK(d[1].norm() == doctest::Approx(2));
  }
  SUBCASE("flat top forms one block") {
    std::vector<float> h(18, 0.0f);
    h[4] = 2, h[5] = 2;
    CHECK(histogram_directions(h, angles).size() == 1);
  }
}

TEST_CASE("visualization colors only flowing pixels") {
  const auto m = synth::band(64, 64, 0.0, 6, 32, 32);
  const auto f = compute_flow(m);
  const auto img = visualize(f);
  CHECK(img.channels == 3);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const bool lit = img.at(x, y, 0) || img.at(x, y, 1) || img.at(x, y, 2);
      if (f.count_at(x, y) == 0) CHECK(!lit);
    }
}
