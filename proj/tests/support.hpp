#pragma once

// Shared fixtures and brute-force reference implementations. The oracles
// are deliberately naive (plain loops, std::map, no spatial index) so they
// share no code path with the library.

#include "opensu/scene_model.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace testing {

using namespace opensu;
namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag = "t") {
    std::random_device rd;
    path = fs::temp_directory_path() / ("opensu_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed * 0x9E3779B97F4A7C15ull + 17); }

inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(g);
}

inline int uniform_int(std::mt19937_64& g, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(g); }

inline Vec3 random_point(std::mt19937_64& g, double lo, double hi) {
  return {uniform(g, lo, hi), uniform(g, lo, hi), uniform(g, lo, hi)};
}

inline std::vector<double> random_vec(std::mt19937_64& g, int dim) {
  std::vector<double> v(dim);
  for (auto& x : v) x = uniform(g, -1, 1);
  return v;
}

inline Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Embedding random_embedding(std::mt19937_64& g, int dim) {
  Embedding e(dim);
  for (int i = 0; i < dim; ++i) e[i] = static_cast<float>(uniform(g, -1, 1));
  return e;
}

inline Embedding one_hot(int dim, int k) {
  Embedding e = Embedding::Zero(dim);
  e[k] = 1.0f;
  return e;
}

/// Random rigid camera-to-world pose.
inline Pose random_pose(std::mt19937_64& g) {
  Eigen::Quaterniond q(uniform(g, -1, 1), uniform(g, -1, 1), uniform(g, -1, 1), uniform(g, -1, 1));
  q.normalize();
  return Pose::from_rt(q.toRotationMatrix(), random_point(g, -3, 3));
}

inline CameraIntrinsics small_camera(int w = 64, int h = 48) {
  return {50.0, 52.0, (w - 1) / 2.0, (h - 1) / 2.0, w, h};
}

/// A valid bundle with axis-aligned rectangular instance regions.
struct RectSpec {
  LocalId id;
  PixelBox box;
  std::string name = "chair";
  double score = 0.9;
};

inline FrameBundle rect_bundle(int frame, const CameraIntrinsics& k, const std::vector<RectSpec>& rects,
                               double depth = 2.0, int dim = 4) {
  FrameBundle b;
  b.frame_index = frame;
  b.intrinsics = k;
  b.depth = DepthImage(k.width, k.height, depth);
  b.mask = MaskImage(k.width, k.height, 0);
  b.global_embedding = Embedding::Constant(dim, 0.5f);
  for (const auto& r : rects) {
    for (int v = r.box.y0; v < r.box.y1; ++v)
      for (int u = r.box.x0; u < r.box.x1; ++u) b.mask(u, v) = r.id;
    InstanceRecord rec;
    rec.local_id = r.id;
    rec.name = r.name;
    rec.caption = "a " + r.name;
    rec.pred_score = r.score;
    rec.bbox = r.box;
    rec.embedding = one_hot(dim, r.id % dim);
    b.instances.push_back(rec);
  }
  return b;
}

// ---------------------------------------------------------------- oracles

/// Per-pixel pinhole lift written out coordinate by coordinate.
struct OraclePoint {
  double x, y, z;
  LocalId label;
};

inline std::vector<OraclePoint> backproject_oracle(const DepthImage& depth, const MaskImage& mask,
                                                   const CameraIntrinsics& k, const Pose& pose) {
  std::vector<OraclePoint> out;
  const auto& m = pose.matrix;
  for (int v = 0; v < depth.height; ++v)
    for (int u = 0; u < depth.width; ++u) {
      const LocalId l = mask.data[static_cast<std::size_t>(v) * mask.width + u];
      const double d = depth.data[static_cast<std::size_t>(v) * depth.width + u];
      if (l == 0 || !(d > 0) || std::isnan(d)) continue;
      const double xc = (u - k.cx) / k.fx * d;
      const double yc = (v - k.cy) / k.fy * d;
      const double zc = d;
      OraclePoint p;
      p.x = m(0, 0) * xc + m(0, 1) * yc + m(0, 2) * zc + m(0, 3);
      p.y = m(1, 0) * xc + m(1, 1) * yc + m(1, 2) * zc + m(1, 3);
      p.z = m(2, 0) * xc + m(2, 1) * yc + m(2, 2) * zc + m(2, 3);
      p.label = l;
      out.push_back(p);
    }
  return out;
}

/// Pixel survives iff every pixel of its (2px+1)^2 window exists and holds
/// the same label.
inline MaskImage erode_oracle(const MaskImage& mask, int px) {
  MaskImage out(mask.width, mask.height, 0);
  for (int v = 0; v < mask.height; ++v)
    for (int u = 0; u < mask.width; ++u) {
      const LocalId l = mask(u, v);
      if (l == 0) continue;
      bool keep = true;
      for (int dv = -px; dv <= px && keep; ++dv)
        for (int du = -px; du <= px && keep; ++du) {
          const int uu = u + du, vv = v + dv;
          if (uu < 0 || vv < 0 || uu >= mask.width || vv >= mask.height || mask(uu, vv) != l) keep = false;
        }
      if (keep) out(u, v) = l;
    }
  return out;
}

inline double dist2(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

/// All-pairs nearest target strictly within eps; ties to the lower index.
inline std::vector<std::int64_t> nearest_oracle(const std::vector<Vec3>& queries, const std::vector<Vec3>& targets,
                                                double eps) {
  std::vector<std::int64_t> out(queries.size(), -1);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < targets.size(); ++j) {
      const double d = dist2(queries[i], targets[j]);
      if (d < best) {
        best = d;
        out[i] = static_cast<std::int64_t>(j);
      }
    }
    if (out[i] >= 0 && !(std::sqrt(best) < eps)) out[i] = -1;
  }
  return out;
}

/// Indices of scene points inside bbox(frame) expanded by margin.
inline std::vector<std::uint32_t> crop_oracle(const std::vector<Vec3>& scene, const std::vector<Vec3>& frame,
                                              double margin) {
  std::vector<std::uint32_t> out;
  if (frame.empty()) return out;
  double lo[3], hi[3];
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::numeric_limits<double>::infinity();
    hi[a] = -lo[a];
  }
  for (const auto& p : frame)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  for (std::uint32_t i = 0; i < scene.size(); ++i) {
    bool in = true;
    for (int a = 0; a < 3; ++a) in = in && scene[i][a] >= lo[a] - margin && scene[i][a] <= hi[a] + margin;
    if (in) out.push_back(i);
  }
  return out;
}

using Key = std::tuple<long, long, long>;

inline Key key_of(const Vec3& p, double voxel) {
  return {static_cast<long>(std::floor(p.x() / voxel)), static_cast<long>(std::floor(p.y() / voxel)),
          static_cast<long>(std::floor(p.z() / voxel))};
}

/// First point (input order) of each voxel, in input order.
inline std::vector<std::size_t> voxel_first_oracle(const std::vector<Vec3>& pts, double voxel) {
  std::set<Key> seen;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (seen.insert(key_of(pts[i], voxel)).second) out.push_back(i);
  return out;
}

struct DbscanOracle {
  std::vector<std::uint8_t> core;
  std::size_t clusters = 0;
  std::vector<long> label;  // -1 noise
};

/// Textbook DBSCAN with a full distance matrix scan.
inline DbscanOracle dbscan_oracle(const std::vector<Vec3>& pts, double eps, int min_pts) {
  const std::size_t n = pts.size();
  DbscanOracle o;
  o.core.assign(n, 0);
  o.label.assign(n, -1);
  std::vector<std::vector<std::size_t>> nb(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (std::sqrt(dist2(pts[i], pts[j])) <= eps) nb[i].push_back(j);
  for (std::size_t i = 0; i < n; ++i) o.core[i] = nb[i].size() >= static_cast<std::size_t>(min_pts);
  for (std::size_t s = 0; s < n; ++s) {
    if (!o.core[s] || o.label[s] >= 0) continue;
    const long c = static_cast<long>(o.clusters++);
    std::vector<std::size_t> stack{s};
    o.label[s] = c;
    while (!stack.empty()) {
      const std::size_t q = stack.back();
      stack.pop_back();
      if (!o.core[q]) continue;
      for (std::size_t j : nb[q])
        if (o.label[j] < 0) {
          o.label[j] = c;
          stack.push_back(j);
        }
    }
  }
  return o;
}

/// Adjusted Rand index from pair counting over all item pairs.
inline double ari_oracle(const std::vector<long>& a, const std::vector<long>& b) {
  const std::size_t n = a.size();
  double both = 0, in_a = 0, in_b = 0, pairs = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      both += sa && sb;
      in_a += sa;
      in_b += sb;
      pairs += 1;
    }
  const double expected = in_a * in_b / pairs;
  const double mx = 0.5 * (in_a + in_b);
  if (mx == expected) return 1.0;
  return (both - expected) / (mx - expected);
}

inline double cosine_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace testing
