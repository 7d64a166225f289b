#include "opensu/scene_model.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <set>

namespace opensu {

bool same_embedding(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) return false;
  return a.size() == 0 ||
         std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
}

bool Pose::valid() const {
  if (!matrix.allFinite()) return false;
  if (matrix(3, 0) != 0.0 || matrix(3, 1) != 0.0 || matrix(3, 2) != 0.0 || matrix(3, 3) != 1.0)
    return false;
  const Eigen::Matrix3d r = rotation();
  if (std::abs(r.determinant() - 1.0) >= 1e-6) return false;
  return (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-6;
}

Pose Pose::from_rt(const Eigen::Matrix3d& r, const Vec3& t) {
  Pose p;
  p.matrix.topLeftCorner<3, 3>() = r;
  p.matrix.topRightCorner<3, 1>() = t;
  return p;
}

double area_fraction(const InstanceRecord& rec, const CameraIntrinsics& k) {
  return static_cast<double>(rec.bbox.area()) / static_cast<double>(k.pixel_count());
}

const InstanceRecord* FrameBundle::find(LocalId id) const {
  for (const auto& r : instances)
    if (r.local_id == id) return &r;
  return nullptr;
}

std::vector<Violation> validate_frame_bundle(const FrameBundle& b) {
  std::vector<Violation> out;
  auto add = [&](std::string code, std::string detail) { out.push_back({std::move(code), std::move(detail)}); };

  const auto& k = b.intrinsics;
  if (!k.valid()) add("invalid intrinsics", "fx, fy > 0 and principal point inside the image required");
  if (!b.pose.valid()) add("invalid pose", "pose must be a rigid camera-to-world transform");

  if (b.depth.width != k.width || b.depth.height != k.height)
    add("dimension mismatch", "depth " + std::to_string(b.depth.width) + "x" + std::to_string(b.depth.height) +
                                  " vs intrinsics " + std::to_string(k.width) + "x" + std::to_string(k.height));
  if (b.mask.width != k.width || b.mask.height != k.height)
    add("dimension mismatch", "mask " + std::to_string(b.mask.width) + "x" + std::to_string(b.mask.height) +
                                  " vs intrinsics " + std::to_string(k.width) + "x" + std::to_string(k.height));
  if (b.depth.data.size() != static_cast<std::size_t>(b.depth.width) * b.depth.height ||
      b.mask.data.size() != static_cast<std::size_t>(b.mask.width) * b.mask.height)
    add("dimension mismatch", "pixel buffer size disagrees with declared grid size");

  for (double d : b.depth.data) {
    if (std::isinf(d) || d < 0) {
      add("invalid depth", "depth values must be finite and non-negative (0/NaN = invalid)");
      break;
    }
  }

  std::set<LocalId> in_mask(b.mask.data.begin(), b.mask.data.end());
  in_mask.erase(0);

  const auto dim = b.global_embedding.size();
  if (dim == 0) add("embedding dimension", "global embedding is empty");
  if (!b.global_embedding.allFinite()) add("non-finite embedding", "global embedding");

  std::set<LocalId> seen;
  for (const auto& r : b.instances) {
    const std::string who = "instance " + std::to_string(r.local_id);
    if (r.local_id == 0) add("reserved local id", "local_id 0 is reserved for unlabeled pixels");
    if (!seen.insert(r.local_id).second) add("duplicate local id", who);
    if (!(r.pred_score >= 0.0 && r.pred_score <= 1.0)) add("pred_score out of range", who);
    if (r.embedding.size() != dim) add("embedding dimension", who);
    if (!r.embedding.allFinite()) add("non-finite embedding", who);
    const auto& bb = r.bbox;
    if (bb.x0 < 0 || bb.y0 < 0 || bb.x1 > k.width || bb.y1 > k.height || bb.x1 <= bb.x0 || bb.y1 <= bb.y0)
      add("bbox out of image", who);
    if (r.local_id != 0 && !in_mask.count(r.local_id)) add("missing mask region", who);
  }
  for (LocalId id : in_mask)
    if (!seen.count(id)) add("orphan mask ID", "mask contains ID " + std::to_string(id) + " with no record");
  return out;
}

void GlobalIdTable::add_entry(GlobalId id, Observation first) {
  auto [it, inserted] = entries_.try_emplace(id);
  if (!inserted) throw IntegrityError("global id " + std::to_string(id) + " already present in Q");
  it->second.push_back(first);
}

void GlobalIdTable::append(GlobalId id, Observation obs) {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw IntegrityError("global id " + std::to_string(id) + " missing from Q");
  it->second.push_back(obs);
}

const std::vector<Observation>& GlobalIdTable::at(GlobalId id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw IntegrityError("global id " + std::to_string(id) + " missing from Q");
  return it->second;
}

std::size_t GlobalIdTable::total_observations() const {
  std::size_t n = 0;
  for (const auto& [id, obs] : entries_) n += obs.size();
  return n;
}

bool uses_weighted_multiscale(FusionScheme s) {
  return s == FusionScheme::kWeightedScale || s == FusionScheme::kWeightedBoth;
}

bool uses_global_multiview(FusionScheme s) {
  return s == FusionScheme::kGlobalMultiView || s == FusionScheme::kWeightedBoth;
}

FusionScheme scheme_from_int(int v) {
  if (v < 1 || v > 4) throw InvalidArgument("fusion scheme must be 1..4, got " + std::to_string(v));
  return static_cast<FusionScheme>(v);
}

void FusionConfig::validate() const {
  auto fail = [](const std::string& what) { throw InvalidArgument("invalid config: " + what); };
  if (stride < 1) fail("stride must be >= 1");
  if (border_px < 0) fail("border_px must be >= 0");
  if (!(voxel > 0)) fail("voxel (epsilon) must be > 0");
  if (!(overlap_threshold > 0 && overlap_threshold <= 1)) fail("overlap threshold must be in (0, 1]");
  if (top_images < 1) fail("top_images must be >= 1");
  if (crop_levels < 1) fail("crop_levels must be >= 1");
  if (crop_ratios.size() != static_cast<std::size_t>(crop_levels)) fail("crop_ratios must have crop_levels entries");
  if (!(dbscan_eps > 0)) fail("dbscan_eps must be > 0");
  if (dbscan_min_points < 1) fail("dbscan_min_points must be >= 1");
  if (!(split_fraction > 0 && split_fraction <= 1)) fail("split_fraction must be in (0, 1]");
  if (!(bbox_area_max > 0 && bbox_area_max <= 1)) fail("bbox_area_max must be in (0, 1]");
  scheme_from_int(static_cast<int>(scheme));
}

bool MapInstance::operator==(const MapInstance& o) const {
  return global_id == o.global_id && points == o.points && name == o.name && refined_name == o.refined_name &&
         caption == o.caption && same_embedding(embedding, o.embedding) && bbox == o.bbox &&
         centroid == o.centroid && observations == o.observations;
}

const MapInstance* InstanceMap::find(GlobalId id) const {
  for (const auto& inst : instances)
    if (inst.global_id == id) return &inst;
  return nullptr;
}

bool is_background_name(const std::string& name, const std::vector<std::string>& background) {
  auto lower = [](std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
  };
  const std::string n = lower(name);
  return std::any_of(background.begin(), background.end(), [&](const std::string& b) {
    return !b.empty() && n.find(lower(b)) != std::string::npos;
  });
}

}  // namespace opensu
