#include "opensu/spatial_grid.hpp"

#include <algorithm>
#include <numeric>

namespace opensu {

HashGrid::HashGrid(std::span<const Vec3> points, double cell_size) : points_(points), cell_(cell_size) {
  if (!(cell_size > 0)) throw InvalidArgument("hash grid cell size must be > 0");
  std::vector<VoxelKey> keys(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) keys[i] = voxel_key(points[i], cell_);
  order_.resize(points.size());
  std::iota(order_.begin(), order_.end(), 0u);
  std::stable_sort(order_.begin(), order_.end(), [&](std::uint32_t a, std::uint32_t b) { return keys[a] < keys[b]; });
  ranges_.reserve(points.size());
  std::uint32_t begin = 0;
  for (std::uint32_t i = 1; i <= order_.size(); ++i) {
    if (i == order_.size() || !(keys[order_[i]] == keys[order_[begin]])) {
      ranges_.emplace(keys[order_[begin]], std::make_pair(begin, i));
      begin = i;
    }
  }
}

std::vector<std::uint32_t> voxel_survivors(std::span<const Vec3> points, double voxel) {
  if (!(voxel > 0)) throw InvalidArgument("voxel size must be > 0");
  std::unordered_map<VoxelKey, std::uint32_t, VoxelKeyHash> first;
  first.reserve(points.size());
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < points.size(); ++i)
    if (first.emplace(voxel_key(points[i], voxel), i).second) out.push_back(i);
  return out;
}

}  // namespace opensu
