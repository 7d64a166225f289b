#include "opensu/kernels.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace testing;
namespace k = opensu::kernels;

namespace {

struct Threads {
  int saved = k::thread_count();
  explicit Threads(int n) { k::set_thread_count(n); }
  ~Threads() { k::set_thread_count(saved); }
};

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("serial and omp kernels agree") {
  Threads t(4);
  auto g = rng(71);
  for (int rep = 0; rep < 10; ++rep) {
    const int w = uniform_int(g, 10, 200), h = uniform_int(g, 10, 150);
    const CameraIntrinsics cam{uniform(g, 50, 500), uniform(g, 50, 500), w / 2.0, h / 2.0, w, h};
    DepthImage depth(w, h, 0.0);
    MaskImage mask(w, h, 0);
    for (auto& d : depth.data) d = uniform(g, 0, 1) < 0.05 ? 0.0 : uniform(g, 0.2, 6);
    for (int r = 0; r < 5; ++r) {
      const int x0 = uniform_int(g, 0, w - 2), y0 = uniform_int(g, 0, h - 2);
      const int x1 = uniform_int(g, x0 + 1, w), y1 = uniform_int(g, y0 + 1, h);
      for (int v = y0; v < y1; ++v)
        for (int u = x0; u < x1; ++u) mask(u, v) = static_cast<LocalId>(r + 1);
    }
    const Pose pose = random_pose(g);
    const auto a = k::serial::backproject(depth, mask, cam, pose), b = k::omp::backproject(depth, mask, cam, pose);
    CHECK(a.positions == b.positions);
    CHECK(a.labels == b.labels);
    const int px = uniform_int(g, 0, 6);
    CHECK(k::serial::erode_labels(mask, px) == k::omp::erode_labels(mask, px));

    std::vector<Vec3> targets, queries;
    for (int i = 0; i < 3000; ++i) targets.push_back(random_point(g, 0, 1));
    for (int i = 0; i < 3000; ++i) queries.push_back(random_point(g, 0, 1));
    const double eps = uniform(g, 0.01, 0.08);
    const HashGrid grid(targets, eps);
    CHECK(k::serial::nearest_within(queries, grid, eps) == k::omp::nearest_within(queries, grid, eps));
    CHECK(k::serial::count_neighbors(grid, eps) == k::omp::count_neighbors(grid, eps));

    std::vector<Embedding> items;
    for (int i = 0; i < 200; ++i) items.push_back(random_embedding(g, 32));
    const Embedding q = random_embedding(g, 32);
    CHECK(k::serial::cosine_scores(q, items) == k::omp::cosine_scores(q, items));
  }
}

TEST_CASE("nearest_within and count_neighbors against brute force") {
  auto g = rng(72);
  std::vector<Vec3> targets, queries;
  for (int i = 0; i < 500; ++i) targets.push_back(random_point(g, 0, 0.5));
  for (int i = 0; i < 500; ++i) queries.push_back(random_point(g, 0, 0.5));
  const HashGrid grid(targets, 0.05);
  CHECK(k::omp::nearest_within(queries, grid, 0.05) == nearest_oracle(queries, targets, 0.05));
  const auto counts = k::omp::count_neighbors(grid, 0.05);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    std::uint32_t n = 0;
    for (const auto& p : targets) n += std::sqrt(dist2(p, targets[i])) <= 0.05;
    REQUIRE(counts[i] == n);
  }
}

TEST_CASE("voxel survivors equal the first-point oracle") {
  auto g = rng(73);
  std::vector<Vec3> pts;
  for (int i = 0; i < 5000; ++i) pts.push_back(random_point(g, -1, 1));
  const auto s = voxel_survivors(pts, 0.1);
  const auto o = voxel_first_oracle(pts, 0.1);
  CHECK(std::vector<std::size_t>(s.begin(), s.end()) == o);
}

TEST_CASE("thread count") {
  Threads t(3);
  CHECK(k::thread_count() == 3);
}

}
