#pragma once

// Data-parallel inner loops. Every kernel exists twice with the same
// signature: `serial` is the plain reference loop, `omp` is the OpenMP
// version the modules call. Both produce identical output, element order
// included; the test suite checks this and bench_kernels times them.

#include "opensu/scene_model.hpp"
#include "opensu/spatial_grid.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace opensu::kernels {

/// World-frame points of labeled, valid-depth pixels in raster order.
struct ProjectedPixels {
  std::vector<Vec3> positions;
  std::vector<LocalId> labels;
};

inline constexpr std::int64_t kNoMatch = -1;

namespace serial {

ProjectedPixels backproject(const DepthImage& depth, const MaskImage& mask, const CameraIntrinsics& k,
                            const Pose& pose);

/// Zeroes every pixel whose (2px+1)^2 window leaves the image or holds
/// another label.
MaskImage erode_labels(const MaskImage& mask, int px);

/// Nearest target strictly closer than radius (ties: lower index), or
/// kNoMatch. radius must not exceed the grid cell size.
std::vector<std::int64_t> nearest_within(std::span<const Vec3> queries, const HashGrid& targets, double radius);

/// Points within eps (inclusive) of each grid point, itself included.
std::vector<std::uint32_t> count_neighbors(const HashGrid& grid, double eps);

std::vector<double> cosine_scores(const Embedding& query, std::span<const Embedding> items);

}  // namespace serial

namespace omp {

ProjectedPixels backproject(const DepthImage& depth, const MaskImage& mask, const CameraIntrinsics& k,
                            const Pose& pose);
MaskImage erode_labels(const MaskImage& mask, int px);
std::vector<std::int64_t> nearest_within(std::span<const Vec3> queries, const HashGrid& targets, double radius);
std::vector<std::uint32_t> count_neighbors(const HashGrid& grid, double eps);
std::vector<double> cosine_scores(const Embedding& query, std::span<const Embedding> items);

}  // namespace omp

/// Sets the OpenMP team size; n <= 0 keeps the runtime default.
void set_thread_count(int n);
int thread_count();

}  // namespace opensu::kernels
