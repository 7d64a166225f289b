#pragma once

#include "opensu/fusion_tracker.hpp"
#include "opensu/scene_model.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace opensu {

struct ClusterResult {
  std::vector<std::vector<std::uint32_t>> clusters;  // discovery order, indices ascending
  std::vector<std::uint32_t> noise;                  // ascending
  std::vector<std::uint8_t> core;                    // per input point
};

/// Density clustering, Euclidean metric, neighbourhoods inclusive of eps and
/// of the point itself. Clusters are seeded in index order; a border point
/// joins the first cluster that reaches it.
ClusterResult dbscan(std::span<const Vec3> points, double eps, int min_points);

/// Which clusters survive as instances: the largest first (keeps the parent
/// ID), then every other cluster with size >= fraction * largest, larger
/// first. Ties keep discovery order. Empty when there are no clusters.
std::vector<std::size_t> split_instance(const std::vector<std::vector<std::uint32_t>>& clusters,
                                        double split_fraction);

struct LabelCandidate {
  int frame_index = 0;
  LocalId local_id = 0;
  std::string name;
  std::string caption;
  double pred_score = 0;
};

struct SelectedLabel {
  std::string name;
  std::string caption;
};

/// Name and caption of the highest-scoring observation (ties: earliest frame).
SelectedLabel select_label(std::span<const LabelCandidate> observations);

/// The min(m, n) best observations, score descending, ties by frame index.
std::vector<LabelCandidate> top_m_observations(std::span<const LabelCandidate> observations, int m);

/// Per-frame data kept after integration for map finalization.
struct FrameMetadata {
  int frame_index = 0;
  std::vector<InstanceRecord> instances;
  Embedding global_embedding;
};

using FrameCatalog = std::map<int, FrameMetadata>;

FrameMetadata metadata_of(const FrameBundle& bundle);

/// Builds the instance map from the integrated scene and Q.
InstanceMap finalize_map(const ScenePointCloud& scene, const GlobalIdTable& table, const FrameCatalog& frames,
                         const FusionConfig& config);

/// Axis-aligned bounds and point mean, from the stored (f32) points.
void compute_geometry(MapInstance& inst);

}  // namespace opensu
