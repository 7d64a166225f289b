#pragma once

#include "opensu/scene_model.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

namespace opensu {

struct VoxelKey {
  std::int32_t x = 0, y = 0, z = 0;
  bool operator==(const VoxelKey&) const = default;
  auto operator<=>(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    return static_cast<std::size_t>(static_cast<std::uint32_t>(k.x) * 73856093u ^
                                    static_cast<std::uint32_t>(k.y) * 19349669u ^
                                    static_cast<std::uint32_t>(k.z) * 83492791u);
  }
};

/// floor(p / size) per axis.
inline VoxelKey voxel_key(const Vec3& p, double size) {
  return {static_cast<std::int32_t>(std::floor(p.x() / size)), static_cast<std::int32_t>(std::floor(p.y() / size)),
          static_cast<std::int32_t>(std::floor(p.z() / size))};
}

/// Immutable uniform hash grid over a point set. Indices inside a cell are
/// ascending, so neighbourhood scans visit candidates in a stable order.
class HashGrid {
 public:
  HashGrid(std::span<const Vec3> points, double cell_size);

  double cell_size() const { return cell_; }
  std::span<const Vec3> points() const { return points_; }

  /// Calls fn(index) for every point in cells within `reach` cells of p's cell.
  template <typename Fn>
  void for_each_candidate(const Vec3& p, int reach, Fn&& fn) const {
    const VoxelKey c = voxel_key(p, cell_);
    for (int dx = -reach; dx <= reach; ++dx)
      for (int dy = -reach; dy <= reach; ++dy)
        for (int dz = -reach; dz <= reach; ++dz) {
          auto it = ranges_.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == ranges_.end()) continue;
          for (std::uint32_t i = it->second.first; i < it->second.second; ++i) fn(order_[i]);
        }
  }

  /// Number of cells that must be scanned to cover radius r.
  int reach_for(double r) const { return static_cast<int>(std::ceil(r / cell_)); }

 private:
  std::span<const Vec3> points_;
  double cell_;
  std::vector<std::uint32_t> order_;
  std::unordered_map<VoxelKey, std::pair<std::uint32_t, std::uint32_t>, VoxelKeyHash> ranges_;
};

/// Indices of the first point (in input order) of every occupied voxel,
/// ascending.
std::vector<std::uint32_t> voxel_survivors(std::span<const Vec3> points, double voxel);

}  // namespace opensu
