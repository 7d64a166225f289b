#pragma once

#include "opensu/projection.hpp"
#include "opensu/scene_model.hpp"
#include "opensu/spatial_grid.hpp"

#include <map>
#include <span>
#include <unordered_map>
#include <vector>

namespace opensu {

/// Growing labeled scene cloud P_scene with a voxel index (cell = epsilon).
/// Single writer: only integrate_frame / dedup_voxels / append mutate it.
class ScenePointCloud {
 public:
  explicit ScenePointCloud(double cell_size = 0.02);

  double cell_size() const { return cell_; }
  std::size_t size() const { return positions_.size(); }
  bool empty() const { return positions_.empty(); }
  std::span<const Vec3> positions() const { return positions_; }
  std::span<const GlobalId> ids() const { return ids_; }
  LabeledPoint point(std::size_t i) const { return {positions_[i], ids_[i]}; }

  GlobalId next_global_id() const { return next_id_; }
  GlobalId issue_id() { return next_id_++; }
  /// Makes sure future IDs are > id (used when loading external data).
  void reserve_ids_through(GlobalId id) { next_id_ = std::max(next_id_, id + 1); }

  /// Per-ID point counts; keys are exactly the IDs present.
  const std::map<GlobalId, std::size_t>& id_counts() const { return counts_; }

  /// Appends without deduplication. IDs must have been issued already.
  void append(const Vec3& p, GlobalId id);

  /// Appends p unless its voxel is already occupied. Returns true if kept.
  bool append_if_free(const Vec3& p, GlobalId id);

  bool voxel_occupied(const Vec3& p) const { return index_.count(voxel_key(p, cell_)) != 0; }
  /// ID of the first point in p's voxel, 0 if empty.
  GlobalId voxel_owner(const Vec3& p) const;

  /// Scene indices (ascending) inside box, found through the voxel index.
  std::vector<std::uint32_t> indices_in_box(const Aabb& box) const;

  /// Keeps the earliest point per voxel of size `voxel` (rebuilds the index
  /// when voxel differs from the cell size).
  void dedup(double voxel);

 private:
  void index_point(std::uint32_t i);
  void rebuild(double cell);

  double cell_;
  std::vector<Vec3> positions_;
  std::vector<GlobalId> ids_;
  std::map<GlobalId, std::size_t> counts_;
  GlobalId next_id_ = 1;
  // voxel -> first point; chain_ links later points of the same voxel.
  std::unordered_map<VoxelKey, std::uint32_t, VoxelKeyHash> index_;
  std::vector<std::uint32_t> chain_;
};

/// Points of the scene inside P'_scene: indices into the scene.
struct SubCloud {
  std::vector<std::uint32_t> scene_indices;
  std::vector<Vec3> positions;
  std::vector<GlobalId> ids;
  std::size_t size() const { return scene_indices.size(); }
};

/// Axis-aligned bounds of a point set.
Aabb bounds_of(std::span<const Vec3> points);

/// Scene points inside the frame cloud's bounding box expanded by margin.
SubCloud crop_scene(const ScenePointCloud& scene, std::span<const Vec3> frame_points, double margin);
SubCloud crop_scene(const ScenePointCloud& scene, const FramePointCloud& frame, double margin);

struct PointMatch {
  std::uint32_t frame_index;
  std::uint32_t sub_index;  // index into the subcloud
  bool operator==(const PointMatch&) const = default;
};

/// Each frame point paired with its nearest subcloud point iff closer than
/// eps (strict). Pairs ordered by frame index.
std::vector<PointMatch> match_points(std::span<const Vec3> frame_points, std::span<const Vec3> subcloud, double eps);

struct SegmentOverlap {
  GlobalId scene_id = 0;
  std::size_t overlap = 0;      // c_Ps: distinct scene points of scene_id matched by the segment
  std::size_t scene_total = 0;  // points of scene_id inside P'_scene
  bool operator==(const SegmentOverlap&) const = default;
};

/// c_Ps(dominant) / min(c_Pf, scene_total(dominant)); dominant = largest
/// overlap, ties to the smaller ID. 0 when there is no overlap.
double overlap_ratio(std::size_t frame_count, std::span<const SegmentOverlap> overlaps);

/// Index of the dominant entry (largest overlap, ties to smaller ID), or -1.
std::ptrdiff_t dominant_overlap(std::span<const SegmentOverlap> overlaps);

enum class SegmentAction {
  kMerge,    // relabeled into an existing scene ID
  kNewId,    // fresh global ID
  kAbsorbed  // fresh ID had no surviving voxel; folded into the voxel owner
};

struct OverlapReport {
  LocalId local_id = 0;
  std::size_t frame_count = 0;  // c_Pf (after voxel reduction)
  std::vector<SegmentOverlap> overlaps;  // ascending scene ID
  double ratio = 0;
  SegmentAction action = SegmentAction::kNewId;
  GlobalId assigned_id = 0;
};

struct IntegrationResult {
  std::vector<OverlapReport> reports;  // ascending local ID
  std::size_t frame_points = 0;        // after voxel reduction
  std::size_t subcloud_size = 0;       // |P'_scene|
  std::size_t points_added = 0;
};

/// Checks Q keys == scene IDs. Throws IntegrityError otherwise.
void check_consistency(const ScenePointCloud& scene, const GlobalIdTable& table);

/// One fusion + tracking update. Mutates scene and table in place.
IntegrationResult integrate_frame(ScenePointCloud& scene, GlobalIdTable& table, const FramePointCloud& frame,
                                  const FusionConfig& config);

/// Keeps the earliest-inserted point of every eps-voxel.
void dedup_voxels(ScenePointCloud& scene, double eps);

}  // namespace opensu
