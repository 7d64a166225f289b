// Serial reference vs OpenMP kernels on synthetic inputs.
// Thread count follows OMP_NUM_THREADS.

#include "opensu/kernels.hpp"

#include <Eigen/Geometry>
#include <benchmark/benchmark.h>

#include <random>

using namespace opensu;

namespace {

struct Frame {
  DepthImage depth;
  MaskImage mask;
  CameraIntrinsics k{525, 525, 319.5, 239.5, 640, 480};
  Pose pose;
};

const Frame& frame() {
  static const Frame f = [] {
    Frame f;
    std::mt19937_64 g(7);
    std::uniform_real_distribution<double> d(0.5, 4.0);
    f.depth = DepthImage(640, 480, 0.0);
    f.mask = MaskImage(640, 480, 0);
    for (auto& x : f.depth.data) x = d(g);
    // 8x6 tiles of labels so erosion has real boundaries.
    for (int v = 0; v < 480; ++v)
      for (int u = 0; u < 640; ++u) f.mask(u, v) = static_cast<LocalId>(1 + (u / 80) + 8 * (v / 80));
    f.pose = Pose::from_rt(Eigen::AngleAxisd(0.3, Vec3::UnitY()).toRotationMatrix(), Vec3(0.1, 1.2, -0.5));
    return f;
  }();
  return f;
}

std::vector<Vec3> cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = {u(g), u(g), u(g)};
  return pts;
}

template <auto Fn>
void BM_backproject(benchmark::State& st) {
  const auto& f = frame();
  for (auto _ : st) benchmark::DoNotOptimize(Fn(f.depth, f.mask, f.k, f.pose));
  st.SetItemsProcessed(st.iterations() * 640 * 480);
}

template <auto Fn>
void BM_erode(benchmark::State& st) {
  const auto& f = frame();
  for (auto _ : st) benchmark::DoNotOptimize(Fn(f.mask, static_cast<int>(st.range(0))));
}

template <auto Fn>
void BM_nearest(benchmark::State& st) {
  const auto targets = cloud(static_cast<std::size_t>(st.range(0)), 1);
  const auto queries = cloud(static_cast<std::size_t>(st.range(0)), 2);
  const HashGrid grid(targets, 0.02);
  for (auto _ : st) benchmark::DoNotOptimize(Fn(queries, grid, 0.02));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

template <auto Fn>
void BM_count(benchmark::State& st) {
  const auto pts = cloud(static_cast<std::size_t>(st.range(0)), 3);
  const HashGrid grid(pts, 0.1);
  for (auto _ : st) benchmark::DoNotOptimize(Fn(grid, 0.1));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

template <auto Fn>
void BM_cosine(benchmark::State& st) {
  std::mt19937_64 g(4);
  std::normal_distribution<float> n;
  auto rnd = [&] {
    Embedding e(512);
    for (auto& x : e) x = n(g);
    return e;
  };
  const Embedding q = rnd();
  std::vector<Embedding> items(static_cast<std::size_t>(st.range(0)));
  for (auto& e : items) e = rnd();
  for (auto _ : st) benchmark::DoNotOptimize(Fn(q, items));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

}  // namespace

BENCHMARK(BM_backproject<kernels::serial::backproject>)->Name("backproject/serial");
BENCHMARK(BM_backproject<kernels::omp::backproject>)->Name("backproject/omp");
BENCHMARK(BM_erode<kernels::serial::erode_labels>)->Name("erode/serial")->Arg(2)->Arg(20);
BENCHMARK(BM_erode<kernels::omp::erode_labels>)->Name("erode/omp")->Arg(2)->Arg(20);
BENCHMARK(BM_nearest<kernels::serial::nearest_within>)->Name("nearest_within/serial")->Arg(10000)->Arg(200000);
BENCHMARK(BM_nearest<kernels::omp::nearest_within>)->Name("nearest_within/omp")->Arg(10000)->Arg(200000);
BENCHMARK(BM_count<kernels::serial::count_neighbors>)->Name("count_neighbors/serial")->Arg(20000);
BENCHMARK(BM_count<kernels::omp::count_neighbors>)->Name("count_neighbors/omp")->Arg(20000);
BENCHMARK(BM_cosine<kernels::serial::cosine_scores>)->Name("cosine_scores/serial")->Arg(1000)->Arg(20000);
BENCHMARK(BM_cosine<kernels::omp::cosine_scores>)->Name("cosine_scores/omp")->Arg(1000)->Arg(20000);

BENCHMARK_MAIN();
