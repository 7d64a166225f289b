#include "kernel_common.hpp"

#include <omp.h>

#include <cstdint>

namespace opensu::kernels {

void set_thread_count(int n) {
  if (n > 0) omp_set_num_threads(n);
}

int thread_count() { return omp_get_max_threads(); }

namespace omp {

ProjectedPixels backproject(const DepthImage& depth, const MaskImage& mask, const CameraIntrinsics& k,
                            const Pose& pose) {
  const Eigen::Matrix3d r = pose.rotation();
  const Vec3 t = pose.translation();
  const int h = mask.height, w = mask.width;

  // Count per row, prefix-sum, then fill: output stays in raster order.
  std::vector<std::size_t> offset(static_cast<std::size_t>(h) + 1, 0);
#pragma omp parallel for schedule(static)
  for (int v = 0; v < h; ++v) {
    std::size_t n = 0;
    for (int u = 0; u < w; ++u) n += mask(u, v) != 0 && detail::valid_depth(depth(u, v));
    offset[v + 1] = n;
  }
  for (int v = 0; v < h; ++v) offset[v + 1] += offset[v];

  ProjectedPixels out;
  out.positions.resize(offset[h]);
  out.labels.resize(offset[h]);
#pragma omp parallel for schedule(static)
  for (int v = 0; v < h; ++v) {
    std::size_t o = offset[v];
    for (int u = 0; u < w; ++u) {
      const LocalId label = mask(u, v);
      const double d = depth(u, v);
      if (label == 0 || !detail::valid_depth(d)) continue;
      out.positions[o] = detail::lift_pixel(u, v, d, k, r, t);
      out.labels[o] = label;
      ++o;
    }
  }
  return out;
}

MaskImage erode_labels(const MaskImage& mask, int px) {
  if (px <= 0) return mask;
  std::vector<std::uint8_t> ok(mask.data.size(), 0);
#pragma omp parallel for schedule(static)
  for (int v = 0; v < mask.height; ++v) detail::erode_row(mask, v, px, ok);
  MaskImage out(mask.width, mask.height);
#pragma omp parallel for schedule(static)
  for (int u = 0; u < mask.width; ++u) detail::erode_column(mask, u, px, ok, out);
  return out;
}

std::vector<std::int64_t> nearest_within(std::span<const Vec3> queries, const HashGrid& targets, double radius) {
  std::vector<std::int64_t> out(queries.size());
  const auto n = static_cast<std::int64_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 256)
  for (std::int64_t i = 0; i < n; ++i) out[i] = detail::nearest_one(queries[i], targets, radius);
  return out;
}

std::vector<std::uint32_t> count_neighbors(const HashGrid& grid, double eps) {
  std::vector<std::uint32_t> out(grid.points().size());
  const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(dynamic, 256)
  for (std::int64_t i = 0; i < n; ++i) out[i] = detail::neighbors_of(static_cast<std::uint32_t>(i), grid, eps);
  return out;
}

std::vector<double> cosine_scores(const Embedding& query, std::span<const Embedding> items) {
  std::vector<double> out(items.size());
  const auto n = static_cast<std::int64_t>(items.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[i] = detail::cosine_one(query, items[i]);
  return out;
}

}  // namespace omp
}  // namespace opensu::kernels
