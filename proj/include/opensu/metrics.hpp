#pragma once

#include "opensu/retrieval.hpp"
#include "opensu/scene_model.hpp"
#include "opensu/spatial_grid.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace opensu {

/// Labeled reference cloud: per point a class label and an instance ID
/// (instance <= 0 means unannotated).
struct GroundTruthScene {
  std::vector<Vec3> points;
  std::vector<int> labels;
  std::vector<int> instances;
  std::map<int, std::string> vocabulary;  // class label -> name
};

/// Text-query embedding of one class label.
struct LabelEmbedding {
  int label = 0;
  std::string name;
  Embedding embedding;
};

/// Both clouds reduced to one point per voxel; every prediction survivor is
/// snapped onto its nearest reference survivor when closer than the voxel
/// diagonal, and then shares that survivor's voxel key.
struct VoxelPairing {
  std::vector<std::uint32_t> pred_survivors;
  std::vector<std::uint32_t> gt_survivors;
  std::vector<std::int64_t> pred_to_gt;  // per pred survivor: index into gt_survivors or -1
  std::vector<VoxelKey> pred_keys;       // after snapping
  std::vector<VoxelKey> gt_keys;
  std::size_t matched() const;
};

VoxelPairing voxel_downsample_pair(std::span<const Vec3> pred, std::span<const Vec3> gt, double voxel);

/// |A n B| / |A u B| over voxel key sets; 0 when both are empty.
double iou(std::span<const VoxelKey> a, std::span<const VoxelKey> b);

/// Area under the precision envelope of a ranked TP/FP list.
double average_precision(std::span<const std::uint8_t> ranked_true_positive, std::size_t num_gt);

/// Adjusted Rand index between two labelings of the same items; 1 when both
/// are identical partitions (including the single-cluster case).
double adjusted_rand_index(std::span<const std::int64_t> a, std::span<const std::int64_t> b);

struct EvalOptions {
  double voxel = 0.025;
  double accuracy_iou = 0.25;  // top-1 hit criterion for mAcc
};

struct ClassReport {
  int label = 0;
  std::string name;
  std::size_t gt_instances = 0;
  std::size_t gt_points = 0;
  double accuracy = 0;
  double iou = 0;
  double ap = 0, ap50 = 0, ap25 = 0;
};

struct EvalReport {
  double macc = 0;
  double f_miou = 0;
  double ap = 0, ap50 = 0, ap25 = 0;
  std::optional<double> ari;  // map instances vs GT instances over matched voxels
  std::vector<ClassReport> per_class;

  nlohmann::json to_json() const;
  std::string table() const;
};

/// IoU thresholds 0.50, 0.55, ..., 0.95.
std::vector<double> ap_iou_grid();

/// Scores every map instance against every label embedding.
std::map<int, QueryResult> retrieve_labels(const InstanceMap& map, std::span<const LabelEmbedding> labels);

EvalReport evaluate(const InstanceMap& map, const GroundTruthScene& gt, const std::map<int, QueryResult>& queries,
                    const EvalOptions& options = {});

/// One-hot label embeddings (dimension = vocabulary size).
std::vector<LabelEmbedding> one_hot_label_embeddings(const GroundTruthScene& gt);

/// A map whose instances are exactly the GT instances, embedded with their
/// class's label embedding.
InstanceMap map_from_ground_truth(const GroundTruthScene& gt, std::span<const LabelEmbedding> labels);

}  // namespace opensu
