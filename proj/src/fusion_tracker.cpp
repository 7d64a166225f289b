#include "opensu/fusion_tracker.hpp"

#include "opensu/kernels.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <string>

namespace opensu {

namespace {
constexpr std::uint32_t kEnd = std::numeric_limits<std::uint32_t>::max();
}

ScenePointCloud::ScenePointCloud(double cell_size) : cell_(cell_size) {
  if (!(cell_size > 0)) throw InvalidArgument("scene cell size must be > 0");
}

void ScenePointCloud::index_point(std::uint32_t i) {
  chain_.push_back(kEnd);
  auto [it, inserted] = index_.try_emplace(voxel_key(positions_[i], cell_), i);
  if (inserted) return;
  std::uint32_t j = it->second;
  while (chain_[j] != kEnd) j = chain_[j];
  chain_[j] = i;
}

void ScenePointCloud::append(const Vec3& p, GlobalId id) {
  if (id == 0 || id >= next_id_) throw IntegrityError("append: global id " + std::to_string(id) + " was never issued");
  positions_.push_back(p);
  ids_.push_back(id);
  ++counts_[id];
  index_point(static_cast<std::uint32_t>(positions_.size() - 1));
}

bool ScenePointCloud::append_if_free(const Vec3& p, GlobalId id) {
  if (voxel_occupied(p)) return false;
  append(p, id);
  return true;
}

GlobalId ScenePointCloud::voxel_owner(const Vec3& p) const {
  auto it = index_.find(voxel_key(p, cell_));
  return it == index_.end() ? 0 : ids_[it->second];
}

std::vector<std::uint32_t> ScenePointCloud::indices_in_box(const Aabb& box) const {
  std::vector<std::uint32_t> out;
  if (box.empty() || positions_.empty()) return out;
  const VoxelKey lo = voxel_key(box.min, cell_), hi = voxel_key(box.max, cell_);
  auto collect = [&](std::uint32_t head) {
    for (std::uint32_t j = head; j != kEnd; j = chain_[j])
      if (box.contains(positions_[j])) out.push_back(j);
  };
  const double cells = (static_cast<double>(hi.x) - lo.x + 1) * (static_cast<double>(hi.y) - lo.y + 1) *
                       (static_cast<double>(hi.z) - lo.z + 1);
  if (cells <= static_cast<double>(index_.size())) {
    for (std::int32_t x = lo.x; x <= hi.x; ++x)
      for (std::int32_t y = lo.y; y <= hi.y; ++y)
        for (std::int32_t z = lo.z; z <= hi.z; ++z) {
          auto it = index_.find({x, y, z});
          if (it != index_.end()) collect(it->second);
        }
  } else {
    for (const auto& [key, head] : index_)
      if (key.x >= lo.x && key.x <= hi.x && key.y >= lo.y && key.y <= hi.y && key.z >= lo.z && key.z <= hi.z)
        collect(head);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void ScenePointCloud::rebuild(double cell) {
  cell_ = cell;
  index_.clear();
  chain_.clear();
  counts_.clear();
  index_.reserve(positions_.size());
  chain_.reserve(positions_.size());
  for (std::uint32_t i = 0; i < positions_.size(); ++i) {
    ++counts_[ids_[i]];
    index_point(i);
  }
}

void ScenePointCloud::dedup(double voxel) {
  const auto keep = voxel_survivors(positions_, voxel);
  std::vector<Vec3> pos;
  std::vector<GlobalId> ids;
  pos.reserve(keep.size());
  ids.reserve(keep.size());
  for (auto i : keep) {
    pos.push_back(positions_[i]);
    ids.push_back(ids_[i]);
  }
  positions_ = std::move(pos);
  ids_ = std::move(ids);
  rebuild(cell_);
}

Aabb bounds_of(std::span<const Vec3> points) {
  Aabb box;
  for (const auto& p : points) box.extend(p);
  return box;
}

SubCloud crop_scene(const ScenePointCloud& scene, std::span<const Vec3> frame_points, double margin) {
  SubCloud sub;
  if (frame_points.empty()) return sub;
  sub.scene_indices = scene.indices_in_box(bounds_of(frame_points).expanded(margin));
  sub.positions.reserve(sub.size());
  sub.ids.reserve(sub.size());
  for (auto i : sub.scene_indices) {
    sub.positions.push_back(scene.positions()[i]);
    sub.ids.push_back(scene.ids()[i]);
  }
  return sub;
}

SubCloud crop_scene(const ScenePointCloud& scene, const FramePointCloud& frame, double margin) {
  return crop_scene(scene, frame.positions, margin);
}

std::vector<PointMatch> match_points(std::span<const Vec3> frame_points, std::span<const Vec3> subcloud,
                                     double eps) {
  if (!(eps > 0)) throw InvalidArgument("match_points: eps must be > 0");
  std::vector<PointMatch> out;
  if (frame_points.empty() || subcloud.empty()) return out;
  const HashGrid grid(subcloud, eps);
  const auto nearest = kernels::omp::nearest_within(frame_points, grid, eps);
  for (std::size_t i = 0; i < nearest.size(); ++i)
    if (nearest[i] != kernels::kNoMatch)
      out.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(nearest[i])});
  return out;
}

std::ptrdiff_t dominant_overlap(std::span<const SegmentOverlap> overlaps) {
  std::ptrdiff_t best = -1;
  for (std::size_t i = 0; i < overlaps.size(); ++i) {
    const auto& o = overlaps[i];
    if (o.overlap == 0) continue;
    if (best < 0 || o.overlap > overlaps[best].overlap ||
        (o.overlap == overlaps[best].overlap && o.scene_id < overlaps[best].scene_id))
      best = static_cast<std::ptrdiff_t>(i);
  }
  return best;
}

double overlap_ratio(std::size_t frame_count, std::span<const SegmentOverlap> overlaps) {
  if (frame_count == 0) throw InvalidArgument("overlap_ratio: segment has no points");
  const auto d = dominant_overlap(overlaps);
  if (d < 0) return 0.0;
  const auto& dom = overlaps[d];
  const std::size_t denom = std::min(frame_count, dom.scene_total);
  if (denom == 0) return 0.0;
  return static_cast<double>(dom.overlap) / static_cast<double>(denom);
}

void check_consistency(const ScenePointCloud& scene, const GlobalIdTable& table) {
  const auto& counts = scene.id_counts();
  const auto& entries = table.entries();
  if (counts.size() != entries.size() ||
      !std::equal(counts.begin(), counts.end(), entries.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; }))
    throw IntegrityError("Q keys (" + std::to_string(entries.size()) + ") differ from scene IDs (" +
                         std::to_string(counts.size()) + ")");
}

IntegrationResult integrate_frame(ScenePointCloud& scene, GlobalIdTable& table, const FramePointCloud& frame,
                                  const FusionConfig& config) {
  check_consistency(scene, table);
  IntegrationResult result;
  if (frame.empty()) return result;
  const double eps = config.voxel;
  if (eps != scene.cell_size()) throw InvalidArgument("integrate_frame: config voxel differs from scene cell size");

  // Overlap is evaluated at voxel resolution: one frame point per eps-voxel.
  std::vector<Vec3> fpos;
  std::vector<LocalId> flab;
  for (auto i : voxel_survivors(frame.positions, eps)) {
    fpos.push_back(frame.positions[i]);
    flab.push_back(frame.labels[i]);
  }
  result.frame_points = fpos.size();

  // Every segment sees the same pre-update snapshot.
  const SubCloud sub = crop_scene(scene, fpos, eps);
  result.subcloud_size = sub.size();
  const auto matches = match_points(fpos, sub.positions, eps);

  std::map<GlobalId, std::size_t> scene_total;
  for (GlobalId id : sub.ids) ++scene_total[id];

  std::map<LocalId, std::size_t> frame_count;
  for (LocalId l : flab) ++frame_count[l];
  std::map<LocalId, std::vector<std::uint32_t>> matched;  // distinct subcloud points per segment
  for (const auto& m : matches) matched[flab[m.frame_index]].push_back(m.sub_index);

  std::map<LocalId, GlobalId> assigned;
  for (const auto& [label, count] : frame_count) {
    OverlapReport rep;
    rep.local_id = label;
    rep.frame_count = count;
    if (auto it = matched.find(label); it != matched.end()) {
      auto& hits = it->second;
      std::sort(hits.begin(), hits.end());
      hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
      std::map<GlobalId, std::size_t> per_id;
      for (auto s : hits) ++per_id[sub.ids[s]];
      for (const auto& [id, n] : per_id) rep.overlaps.push_back({id, n, scene_total[id]});
    }
    rep.ratio = overlap_ratio(count, rep.overlaps);
    if (rep.ratio >= config.overlap_threshold) {
      rep.action = SegmentAction::kMerge;
      rep.assigned_id = rep.overlaps[dominant_overlap(rep.overlaps)].scene_id;
    } else {
      rep.action = SegmentAction::kNewId;
      rep.assigned_id = scene.issue_id();
    }
    assigned[label] = rep.assigned_id;
    result.reports.push_back(std::move(rep));
  }

  std::map<GlobalId, std::size_t> kept;
  for (std::size_t i = 0; i < fpos.size(); ++i) {
    const GlobalId id = assigned[flab[i]];
    if (config.dedup) {
      if (!scene.append_if_free(fpos[i], id)) continue;
    } else {
      scene.append(fpos[i], id);
    }
    ++kept[id];
    ++result.points_added;
  }

  std::vector<OverlapReport*> orphans;
  for (auto& rep : result.reports) {
    const Observation obs{frame.frame_index, rep.local_id};
    if (rep.action == SegmentAction::kMerge) {
      table.append(rep.assigned_id, obs);
    } else if (kept.count(rep.assigned_id)) {
      table.add_entry(rep.assigned_id, obs);
    } else {
      orphans.push_back(&rep);
    }
  }
  // A fresh segment lying entirely in occupied voxels: hand its observation
  // to the ID owning most of those voxels; the issued ID stays retired.
  for (OverlapReport* rep : orphans) {
    std::map<GlobalId, std::size_t> owners;
    for (std::size_t i = 0; i < fpos.size(); ++i)
      if (flab[i] == rep->local_id) ++owners[scene.voxel_owner(fpos[i])];
    GlobalId owner = 0;
    std::size_t best = 0;
    for (const auto& [id, n] : owners)
      if (n > best) {
        best = n;
        owner = id;
      }
    rep->action = SegmentAction::kAbsorbed;
    rep->assigned_id = owner;
    table.append(owner, {frame.frame_index, rep->local_id});
  }
  return result;
}

void dedup_voxels(ScenePointCloud& scene, double eps) { scene.dedup(eps); }

}  // namespace opensu
