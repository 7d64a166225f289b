#include "opensu/postprocess.hpp"

#include "opensu/feature_fusion.hpp"
#include "opensu/kernels.hpp"
#include "opensu/spatial_grid.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <string>

namespace opensu {

ClusterResult dbscan(std::span<const Vec3> points, double eps, int min_points) {
  if (!(eps > 0)) throw InvalidArgument("dbscan: eps must be > 0");
  if (min_points < 1) throw InvalidArgument("dbscan: min_points must be >= 1");
  ClusterResult out;
  const std::size_t n = points.size();
  out.core.assign(n, 0);
  if (n == 0) return out;

  const HashGrid grid(points, eps);
  const auto counts = kernels::omp::count_neighbors(grid, eps);
  for (std::size_t i = 0; i < n; ++i) out.core[i] = counts[i] >= static_cast<std::uint32_t>(min_points);

  constexpr std::int64_t kUnassigned = -1;
  std::vector<std::int64_t> label(n, kUnassigned);
  const double e2 = eps * eps;
  const int reach = grid.reach_for(eps);
  std::deque<std::uint32_t> frontier;
  for (std::uint32_t seed = 0; seed < n; ++seed) {
    if (!out.core[seed] || label[seed] != kUnassigned) continue;
    const auto c = static_cast<std::int64_t>(out.clusters.size());
    out.clusters.emplace_back();
    label[seed] = c;
    frontier.push_back(seed);
    while (!frontier.empty()) {
      const std::uint32_t q = frontier.front();
      frontier.pop_front();
      out.clusters.back().push_back(q);
      if (!out.core[q]) continue;
      grid.for_each_candidate(points[q], reach, [&](std::uint32_t j) {
        if (label[j] != kUnassigned || (points[j] - points[q]).squaredNorm() > e2) return;
        label[j] = c;
        frontier.push_back(j);
      });
    }
    std::sort(out.clusters.back().begin(), out.clusters.back().end());
  }
  for (std::uint32_t i = 0; i < n; ++i)
    if (label[i] == kUnassigned) out.noise.push_back(i);
  return out;
}

std::vector<std::size_t> split_instance(const std::vector<std::vector<std::uint32_t>>& clusters,
                                        double split_fraction) {
  std::vector<std::size_t> order(clusters.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return clusters[a].size() > clusters[b].size(); });
  std::vector<std::size_t> kept;
  if (order.empty()) return kept;
  const double cutoff = split_fraction * static_cast<double>(clusters[order.front()].size());
  for (std::size_t idx : order)
    if (static_cast<double>(clusters[idx].size()) >= cutoff) kept.push_back(idx);
  return kept;
}

SelectedLabel select_label(std::span<const LabelCandidate> observations) {
  if (observations.empty()) throw InvalidArgument("select_label: no observations");
  const LabelCandidate* best = &observations.front();
  for (const auto& o : observations)
    if (o.pred_score > best->pred_score || (o.pred_score == best->pred_score && o.frame_index < best->frame_index))
      best = &o;
  return {best->name, best->caption};
}

std::vector<LabelCandidate> top_m_observations(std::span<const LabelCandidate> observations, int m) {
  if (m < 1) throw InvalidArgument("top_m_observations: m must be >= 1");
  std::vector<LabelCandidate> sorted(observations.begin(), observations.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const LabelCandidate& a, const LabelCandidate& b) {
    if (a.pred_score != b.pred_score) return a.pred_score > b.pred_score;
    if (a.frame_index != b.frame_index) return a.frame_index < b.frame_index;
    return a.local_id < b.local_id;
  });
  if (sorted.size() > static_cast<std::size_t>(m)) sorted.resize(static_cast<std::size_t>(m));
  return sorted;
}

FrameMetadata metadata_of(const FrameBundle& bundle) {
  return {bundle.frame_index, bundle.instances, bundle.global_embedding};
}

void compute_geometry(MapInstance& inst) {
  Aabb box;
  Vec3 sum = Vec3::Zero();
  for (const auto& p : inst.points) {
    const Vec3 q = p.cast<double>();
    box.extend(q);
    sum += q;
  }
  inst.bbox = box;
  inst.centroid = inst.points.empty() ? Vec3::Zero() : Vec3(sum / static_cast<double>(inst.points.size()));
  // Summation rounding can push the mean a hair outside a flat extent.
  inst.centroid = inst.centroid.cwiseMax(box.min).cwiseMin(box.max);
}

namespace {

struct ResolvedObservation {
  LabelCandidate label;
  const Embedding* instance = nullptr;
  const Embedding* global = nullptr;
};

std::vector<ResolvedObservation> resolve(GlobalId id, const std::vector<Observation>& obs,
                                         const FrameCatalog& frames) {
  std::vector<ResolvedObservation> out;
  out.reserve(obs.size());
  for (const auto& o : obs) {
    auto f = frames.find(o.frame_index);
    const InstanceRecord* rec = nullptr;
    if (f != frames.end())
      for (const auto& r : f->second.instances)
        if (r.local_id == o.local_id) rec = &r;
    if (!rec)
      throw IntegrityError("Q entry " + std::to_string(id) + " references frame " + std::to_string(o.frame_index) +
                           " local " + std::to_string(o.local_id) + " with no metadata");
    out.push_back({{o.frame_index, o.local_id, rec->name, rec->caption, rec->pred_score},
                   &rec->embedding,
                   &f->second.global_embedding});
  }
  return out;
}

Embedding fuse_views(const std::vector<ResolvedObservation>& resolved, const FusionConfig& config) {
  std::vector<LabelCandidate> cands;
  cands.reserve(resolved.size());
  for (const auto& r : resolved) cands.push_back(r.label);
  const auto top = top_m_observations(cands, config.top_images);
  std::vector<ViewFeature> views;
  for (const auto& t : top)
    for (const auto& r : resolved)
      if (r.label.frame_index == t.frame_index && r.label.local_id == t.local_id) {
        views.push_back({to_double(*r.instance), to_double(*r.global)});
        break;
      }
  return to_float(fuse_multiview(config.scheme, views));
}

}  // namespace

InstanceMap finalize_map(const ScenePointCloud& scene, const GlobalIdTable& table, const FrameCatalog& frames,
                         const FusionConfig& config) {
  check_consistency(scene, table);
  InstanceMap map;
  map.config = config;
  if (!frames.empty()) map.embedding_dim = static_cast<int>(frames.begin()->second.global_embedding.size());

  std::map<GlobalId, std::vector<std::uint32_t>> members;
  for (std::uint32_t i = 0; i < scene.size(); ++i) members[scene.ids()[i]].push_back(i);

  GlobalId next_id = scene.next_global_id();
  for (const auto& [id, idx] : members) {
    const auto resolved = resolve(id, table.at(id), frames);
    std::vector<LabelCandidate> cands;
    for (const auto& r : resolved) cands.push_back(r.label);
    const SelectedLabel label = select_label(cands);
    const Embedding fused = fuse_views(resolved, config);
    std::vector<MapObservation> observations;
    for (const auto& c : cands) observations.push_back({c.frame_index, c.local_id, c.pred_score});

    std::vector<Vec3> pts;
    pts.reserve(idx.size());
    for (auto i : idx) pts.push_back(scene.positions()[i]);
    const ClusterResult clusters = dbscan(pts, config.dbscan_eps, config.dbscan_min_points);
    const auto kept = split_instance(clusters.clusters, config.split_fraction);
    for (std::size_t k = 0; k < kept.size(); ++k) {
      MapInstance inst;
      inst.global_id = k == 0 ? id : next_id++;
      for (auto j : clusters.clusters[kept[k]]) inst.points.push_back(pts[j].cast<float>());
      inst.name = label.name;
      inst.caption = label.caption;
      inst.embedding = fused;
      inst.observations = observations;
      compute_geometry(inst);
      map.instances.push_back(std::move(inst));
    }
  }
  std::sort(map.instances.begin(), map.instances.end(),
            [](const MapInstance& a, const MapInstance& b) { return a.global_id < b.global_id; });
  return map;
}

}  // namespace opensu
