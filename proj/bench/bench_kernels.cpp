// Parallel kernels against their serial references.

#include <benchmark/benchmark.h>

#include <random>

#include "arbor/flow_kernels.hpp"
#include "arbor/synthetic.hpp"
#include "arbor/treegeom.hpp"

using namespace arbor;

namespace {

GrayF random_mask(int size) {
  std::mt19937_64 rng(1);
  std::bernoulli_distribution coin(0.3);
  GrayF img(size, size);
  for (auto& v : img.data) v = coin(rng) ? 1.0f : 0.0f;
  return img;
}

struct Scene {
  tree::Skeleton skeleton;
  tree::Mesh mesh;
  tree::PointCloud cloud;
};

const Scene& scene() {
  static const Scene s = [] {
    Scene out;
    const auto t = synthetic::make_tree(5, {.branches = 30, .root_radius = 0.06, .min_radius = 0.01});
    multiview::Branch3D b;
    for (std::size_t i = 0; i < t.nodes.size(); ++i)
      b.vertices.push_back({static_cast<multiview::VertexId>(i), t.nodes[i], t.radii[i], synthetic::Tree::key(static_cast<int>(i)), {}});
    for (std::size_t i = 1; i < t.nodes.size(); ++i) b.edges.emplace_back(t.parent[i], static_cast<multiview::VertexId>(i));
    b.roots = {0};
    out.skeleton = tree::skeleton_from_branches(b, 4);
    out.mesh = tree::skin_skeleton(out.skeleton, {16, true});
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0, 0.004);
    std::uniform_int_distribution<std::size_t> pick(0, out.mesh.size() - 1);
    for (int k = 0; k < 50000; ++k) {
      const std::size_t i = pick(rng);
      out.cloud.points.push_back(out.mesh.positions[i] + Vec3(g(rng), g(rng), g(rng)) + 0.003 * out.mesh.normals[i]);
      out.cloud.colors.push_back({0, 0, 0});
    }
    return out;
  }();
  return s;
}

void BM_ConvolveReference(benchmark::State& state) {
  const auto img = random_mask(static_cast<int>(state.range(0)));
  const auto k = flow::make_kernel(0.7, 4, 1.8, 35, 17.5, true);
  for (auto _ : state) benchmark::DoNotOptimize(flow::convolve_reference(img, k));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

void BM_Convolve(benchmark::State& state) {
  const auto img = random_mask(static_cast<int>(state.range(0)));
  const auto k = flow::make_kernel(0.7, 4, 1.8, 35, 17.5, true);
  for (auto _ : state) benchmark::DoNotOptimize(flow::convolve(img, k));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

void BM_SampleHeightsReference(benchmark::State& state) {
  const auto& s = scene();
  for (auto _ : state) benchmark::DoNotOptimize(tree::sample_heights_reference(s.mesh, s.cloud, 0.01, 0.02));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(s.mesh.size()));
}

void BM_SampleHeights(benchmark::State& state) {
  const auto& s = scene();
  for (auto _ : state) benchmark::DoNotOptimize(tree::sample_heights(s.mesh, s.cloud, 0.01, 0.02));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(s.mesh.size()));
}

void BM_BindOrphansReference(benchmark::State& state) {
  const auto& s = scene();
  for (auto _ : state) benchmark::DoNotOptimize(tree::bind_orphan_points_reference(s.cloud, s.skeleton));
}

void BM_BindOrphans(benchmark::State& state) {
  const auto& s = scene();
  for (auto _ : state) benchmark::DoNotOptimize(tree::bind_orphan_points(s.cloud, s.skeleton));
}

}  // namespace

BENCHMARK(BM_ConvolveReference)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Convolve)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SampleHeightsReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SampleHeights)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BindOrphansReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BindOrphans)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
