#include "kernel_common.hpp"

namespace opensu::kernels::serial {

ProjectedPixels backproject(const DepthImage& depth, const MaskImage& mask, const CameraIntrinsics& k,
                            const Pose& pose) {
  const Eigen::Matrix3d r = pose.rotation();
  const Vec3 t = pose.translation();
  ProjectedPixels out;
  for (int v = 0; v < mask.height; ++v)
    for (int u = 0; u < mask.width; ++u) {
      const LocalId label = mask(u, v);
      const double d = depth(u, v);
      if (label == 0 || !detail::valid_depth(d)) continue;
      out.positions.push_back(detail::lift_pixel(u, v, d, k, r, t));
      out.labels.push_back(label);
    }
  return out;
}

MaskImage erode_labels(const MaskImage& mask, int px) {
  if (px <= 0) return mask;
  std::vector<std::uint8_t> ok(mask.data.size(), 0);
  for (int v = 0; v < mask.height; ++v) detail::erode_row(mask, v, px, ok);
  MaskImage out(mask.width, mask.height);
  for (int u = 0; u < mask.width; ++u) detail::erode_column(mask, u, px, ok, out);
  return out;
}

std::vector<std::int64_t> nearest_within(std::span<const Vec3> queries, const HashGrid& targets, double radius) {
  std::vector<std::int64_t> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) out[i] = detail::nearest_one(queries[i], targets, radius);
  return out;
}

std::vector<std::uint32_t> count_neighbors(const HashGrid& grid, double eps) {
  std::vector<std::uint32_t> out(grid.points().size());
  for (std::uint32_t i = 0; i < out.size(); ++i) out[i] = detail::neighbors_of(i, grid, eps);
  return out;
}

std::vector<double> cosine_scores(const Embedding& query, std::span<const Embedding> items) {
  std::vector<double> out(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) out[i] = detail::cosine_one(query, items[i]);
  return out;
}

}  // namespace opensu::kernels::serial
