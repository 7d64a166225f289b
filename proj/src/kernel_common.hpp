#pragma once

// Per-element bodies shared by the serial and OpenMP kernels so both paths
// evaluate bit-identical expressions.

#include "opensu/kernels.hpp"

#include <cmath>
#include <limits>

namespace opensu::kernels::detail {

inline bool valid_depth(double d) { return std::isfinite(d) && d > 0.0; }

/// T * (d * K^-1 * (u, v, 1)), pixel centers at integer coordinates.
inline Vec3 lift_pixel(int u, int v, double d, const CameraIntrinsics& k, const Eigen::Matrix3d& r, const Vec3& t) {
  const Vec3 cam((u - k.cx) / k.fx * d, (v - k.cy) / k.fy * d, d);
  return r * cam + t;
}

inline std::int64_t nearest_one(const Vec3& q, const HashGrid& grid, double radius) {
  const auto pts = grid.points();
  const double r2 = radius * radius;
  double best = std::numeric_limits<double>::infinity();
  std::int64_t best_idx = kNoMatch;
  grid.for_each_candidate(q, grid.reach_for(radius), [&](std::uint32_t j) {
    const double d2 = (pts[j] - q).squaredNorm();
    if (d2 < r2 && (d2 < best || (d2 == best && static_cast<std::int64_t>(j) < best_idx))) {
      best = d2;
      best_idx = j;
    }
  });
  return best_idx;
}

inline std::uint32_t neighbors_of(std::uint32_t i, const HashGrid& grid, double eps) {
  const auto pts = grid.points();
  const double e2 = eps * eps;
  std::uint32_t n = 0;
  grid.for_each_candidate(pts[i], grid.reach_for(eps), [&](std::uint32_t j) {
    if ((pts[j] - pts[i]).squaredNorm() <= e2) ++n;
  });
  return n;
}

inline double cosine_one(const Embedding& a, const Embedding& b) {
  double dot = 0, na = 0, nb = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Row pass of the erosion: 1 where the horizontal window around (u, v)
/// lies in one nonzero run of the row.
inline void erode_row(const MaskImage& m, int v, int px, std::vector<std::uint8_t>& ok) {
  const int w = m.width;
  int a = 0;
  while (a < w) {
    const LocalId label = m(a, v);
    int b = a;
    while (b < w && m(b, v) == label) ++b;
    for (int u = a; u < b; ++u)
      ok[static_cast<std::size_t>(v) * w + u] = label != 0 && u - px >= a && u + px < b;
    a = b;
  }
}

/// Column pass over the row-pass flags; writes surviving labels into out.
inline void erode_column(const MaskImage& m, int u, int px, const std::vector<std::uint8_t>& ok, MaskImage& out) {
  const int w = m.width, h = m.height;
  auto flag = [&](int v) { return ok[static_cast<std::size_t>(v) * w + u] != 0; };
  int a = 0;
  while (a < h) {
    if (!flag(a)) {
      out(u, a) = 0;
      ++a;
      continue;
    }
    const LocalId label = m(u, a);
    int b = a;
    while (b < h && flag(b) && m(u, b) == label) ++b;
    for (int v = a; v < b; ++v) out(u, v) = (v - px >= a && v + px < b) ? label : LocalId{0};
    a = b;
  }
}

}  // namespace opensu::kernels::detail
