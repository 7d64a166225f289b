#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace opensu {

using Vec3 = Eigen::Vector3d;
using Vec3f = Eigen::Vector3f;
using Mat4 = Eigen::Matrix4d;

/// Stored embedding (f, f_MS, f_G, f_MV, query vectors). Arithmetic on
/// embeddings happens in double; storage is single precision.
using Embedding = Eigen::VectorXf;

using LocalId = std::uint16_t;   // per-frame mask ID, 0 = unlabeled
using GlobalId = std::uint32_t;  // scene-wide instance ID, issued from 1

/// Bitwise equality; false on dimension mismatch.
bool same_embedding(const Embedding& a, const Embedding& b);

class InvalidArgument : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Scene point cloud and ID table disagree.
class IntegrityError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;

  bool valid() const {
    return fx > 0 && fy > 0 && width > 0 && height > 0 && cx >= 0 && cx < width && cy >= 0 &&
           cy < height;
  }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

/// Camera-to-world rigid transform.
struct Pose {
  Mat4 matrix = Mat4::Identity();

  Eigen::Matrix3d rotation() const { return matrix.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return matrix.topRightCorner<3, 1>(); }
  bool valid() const;
  static Pose from_rt(const Eigen::Matrix3d& r, const Vec3& t);
};

/// Row-major H x W image.
template <typename T>
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  T& operator()(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
  const T& operator()(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
  bool operator==(const Grid&) const = default;
};

using DepthImage = Grid<double>;  // meters; 0 or NaN = no measurement
using MaskImage = Grid<LocalId>;

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  long area() const { return static_cast<long>(x1 - x0) * (y1 - y0); }
  bool operator==(const PixelBox&) const = default;
};

struct InstanceRecord {
  LocalId local_id = 0;
  std::string name;
  std::string caption;
  double pred_score = 0;
  PixelBox bbox;
  Embedding embedding;  // fused multi-scale f_MS
};

/// bbox area over image area.
double area_fraction(const InstanceRecord& rec, const CameraIntrinsics& k);

struct FrameBundle {
  int frame_index = 0;
  DepthImage depth;
  MaskImage mask;
  Pose pose;
  CameraIntrinsics intrinsics;
  std::vector<InstanceRecord> instances;
  Embedding global_embedding;  // f_G

  const InstanceRecord* find(LocalId id) const;
};

struct Violation {
  std::string code;
  std::string detail;
};

/// Empty result means the bundle satisfies every structural invariant.
std::vector<Violation> validate_frame_bundle(const FrameBundle& bundle);

struct LabeledPoint {
  Vec3 position;
  GlobalId instance_id = 0;
};

struct Observation {
  int frame_index = 0;
  LocalId local_id = 0;
  bool operator==(const Observation&) const = default;
  auto operator<=>(const Observation&) const = default;
};

/// Table Q: global ID -> every (frame, local mask) that produced it.
class GlobalIdTable {
 public:
  void add_entry(GlobalId id, Observation first);
  void append(GlobalId id, Observation obs);
  void erase(GlobalId id) { entries_.erase(id); }

  bool contains(GlobalId id) const { return entries_.count(id) != 0; }
  const std::vector<Observation>& at(GlobalId id) const;
  const std::map<GlobalId, std::vector<Observation>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t total_observations() const;

 private:
  std::map<GlobalId, std::vector<Observation>> entries_;
};

enum class FusionScheme : int {
  kDirect = 1,           // mean over crops, mean over views
  kGlobalMultiView = 2,  // mean over crops, global-context views
  kWeightedScale = 3,    // best-fit-weighted crops, mean over views
  kWeightedBoth = 4,     // best-fit-weighted crops, global-context views
};

bool uses_weighted_multiscale(FusionScheme s);
bool uses_global_multiview(FusionScheme s);
FusionScheme scheme_from_int(int v);

struct FusionConfig {
  int stride = 40;
  int border_px = 20;
  double voxel = 0.02;  // epsilon: match radius and dedup voxel
  double overlap_threshold = 0.3;
  int top_images = 5;
  int crop_levels = 3;
  std::vector<double> crop_ratios{0.8, 1.0, 1.2};
  double dbscan_eps = 0.1;
  int dbscan_min_points = 20;
  double split_fraction = 0.8;
  double bbox_area_max = 0.95;
  std::vector<std::string> background_names{"wall", "floor", "ground", "roof", "ceiling"};
  FusionScheme scheme = FusionScheme::kWeightedBoth;
  bool dedup = true;

  /// Throws InvalidArgument naming the first violated constraint.
  void validate() const;
  bool operator==(const FusionConfig&) const = default;
};

struct Aabb {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  bool empty() const { return (min.array() > max.array()).any(); }
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  Aabb expanded(double margin) const {
    return {Vec3(min.array() - margin), Vec3(max.array() + margin)};
  }
  bool operator==(const Aabb&) const = default;
};

struct MapObservation {
  int frame_index = 0;
  LocalId local_id = 0;
  double pred_score = 0;
  bool operator==(const MapObservation&) const = default;
};

/// One finalized object of the instance map.
struct MapInstance {
  GlobalId global_id = 0;
  std::vector<Vec3f> points;
  std::string name;
  std::optional<std::string> refined_name;
  std::string caption;
  Embedding embedding;  // f_MV
  Aabb bbox;
  Vec3 centroid = Vec3::Zero();
  std::vector<MapObservation> observations;

  bool operator==(const MapInstance& o) const;
};

struct InstanceMap {
  int embedding_dim = 0;
  FusionConfig config;
  std::vector<MapInstance> instances;

  const MapInstance* find(GlobalId id) const;
  bool operator==(const InstanceMap&) const = default;
};

/// Case-insensitive substring match against the background vocabulary.
bool is_background_name(const std::string& name, const std::vector<std::string>& background);

}  // namespace opensu
