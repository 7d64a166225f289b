#include "opensu/metrics.hpp"

#include "opensu/kernels.hpp"
#include "opensu/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_map>

namespace opensu {

namespace {

std::vector<Vec3> gather(std::span<const Vec3> pts, std::span<const std::uint32_t> idx) {
  std::vector<Vec3> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(pts[i]);
  return out;
}

void sort_unique(std::vector<VoxelKey>& keys) {
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
}

/// Reference survivors with lookup by voxel and by proximity.
struct Reference {
  std::vector<std::uint32_t> survivors;
  std::vector<Vec3> points;
  std::unordered_map<VoxelKey, std::uint32_t, VoxelKeyHash> by_key;
  HashGrid grid;

  Reference(std::span<const Vec3> cloud, double voxel)
      : survivors(voxel_survivors(cloud, voxel)), points(gather(cloud, survivors)), grid(points, voxel * std::sqrt(3.0)) {
    for (std::uint32_t i = 0; i < points.size(); ++i) by_key.emplace(voxel_key(points[i], voxel), i);
  }
};

/// A pred survivor in an occupied reference voxel pairs with that voxel's
/// survivor; otherwise with the nearest reference survivor closer than the
/// voxel diagonal, adopting its key.
struct Snapped {
  std::vector<std::uint32_t> survivors;
  std::vector<std::int64_t> target;
  std::vector<VoxelKey> keys;
};

Snapped snap(std::span<const Vec3> pred, const Reference& ref, double voxel) {
  Snapped s;
  s.survivors = voxel_survivors(pred, voxel);
  const auto pts = gather(pred, s.survivors);
  s.target = kernels::omp::nearest_within(pts, ref.grid, voxel * std::sqrt(3.0));
  s.keys.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const VoxelKey own = voxel_key(pts[i], voxel);
    if (auto it = ref.by_key.find(own); it != ref.by_key.end()) {
      s.target[i] = it->second;
      s.keys.push_back(own);
    } else {
      s.keys.push_back(s.target[i] >= 0 ? voxel_key(ref.points[s.target[i]], voxel) : own);
    }
  }
  return s;
}

double choose2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

std::size_t VoxelPairing::matched() const {
  return static_cast<std::size_t>(std::count_if(pred_to_gt.begin(), pred_to_gt.end(), [](auto v) { return v >= 0; }));
}

VoxelPairing voxel_downsample_pair(std::span<const Vec3> pred, std::span<const Vec3> gt, double voxel) {
  if (!(voxel > 0)) throw InvalidArgument("voxel_downsample_pair: voxel must be > 0");
  if (pred.empty() || gt.empty()) throw InvalidArgument("voxel_downsample_pair: empty input cloud");
  VoxelPairing out;
  const Reference ref(gt, voxel);
  auto s = snap(pred, ref, voxel);
  out.gt_survivors = ref.survivors;
  out.pred_survivors = std::move(s.survivors);
  out.pred_to_gt = std::move(s.target);
  out.pred_keys = std::move(s.keys);
  out.gt_keys.reserve(ref.points.size());
  for (const auto& p : ref.points) out.gt_keys.push_back(voxel_key(p, voxel));
  return out;
}

double iou(std::span<const VoxelKey> a, std::span<const VoxelKey> b) {
  std::vector<VoxelKey> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  sort_unique(sa);
  sort_unique(sb);
  if (sa.empty() && sb.empty()) return 0.0;
  std::vector<VoxelKey> inter;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(inter));
  const double i = static_cast<double>(inter.size());
  return i / (static_cast<double>(sa.size() + sb.size()) - i);
}

double average_precision(std::span<const std::uint8_t> tp, std::size_t num_gt) {
  if (num_gt == 0 || tp.empty()) return 0.0;
  std::vector<double> precision(tp.size()), recall(tp.size());
  std::size_t hits = 0;
  for (std::size_t k = 0; k < tp.size(); ++k) {
    hits += tp[k] ? 1 : 0;
    precision[k] = static_cast<double>(hits) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(hits) / static_cast<double>(num_gt);
  }
  for (std::size_t k = tp.size() - 1; k-- > 0;) precision[k] = std::max(precision[k], precision[k + 1]);
  double ap = 0, prev_recall = 0;
  for (std::size_t k = 0; k < tp.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

double adjusted_rand_index(std::span<const std::int64_t> a, std::span<const std::int64_t> b) {
  if (a.size() != b.size()) throw InvalidArgument("adjusted_rand_index: labelings differ in length");
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;
  std::map<std::pair<std::int64_t, std::int64_t>, double> joint;
  std::map<std::int64_t, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  double sum_joint = 0, sum_a = 0, sum_b = 0;
  for (const auto& [k, v] : joint) sum_joint += choose2(v);
  for (const auto& [k, v] : ra) sum_a += choose2(v);
  for (const auto& [k, v] : rb) sum_b += choose2(v);
  const double expected = sum_a * sum_b / choose2(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return ra.size() == joint.size() && rb.size() == joint.size() ? 1.0 : 0.0;
  return (sum_joint - expected) / (max_index - expected);
}

std::vector<double> ap_iou_grid() {
  std::vector<double> g;
  for (int k = 0; k < 10; ++k) g.push_back((50.0 + 5.0 * k) / 100.0);
  return g;
}

std::map<int, QueryResult> retrieve_labels(const InstanceMap& map, std::span<const LabelEmbedding> labels) {
  std::map<int, QueryResult> out;
  for (const auto& l : labels) out[l.label] = query(map, l.embedding);
  return out;
}

namespace {

/// Greedy score-ordered matching at one IoU threshold; returns TP flags.
std::vector<std::uint8_t> match_at(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& gts,
                                   const std::vector<std::vector<double>>& iou_matrix, double threshold) {
  std::vector<std::uint8_t> tp(preds.size(), 0);
  std::vector<std::uint8_t> taken(gts.size(), 0);
  for (std::size_t r = 0; r < preds.size(); ++r) {
    std::ptrdiff_t best = -1;
    double best_iou = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = iou_matrix[preds[r]][gts[g]];
      if (taken[g] || v < threshold) continue;
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<std::ptrdiff_t>(g);
      }
    }
    if (best >= 0) {
      taken[best] = 1;
      tp[r] = 1;
    }
  }
  return tp;
}

}  // namespace

EvalReport evaluate(const InstanceMap& map, const GroundTruthScene& gt, const std::map<int, QueryResult>& queries,
                    const EvalOptions& options) {
  if (gt.points.empty()) throw InvalidArgument("evaluate: empty ground truth");
  if (gt.labels.size() != gt.points.size() || gt.instances.size() != gt.points.size())
    throw InvalidArgument("evaluate: ground-truth label arrays do not match point count");
  if (!(options.voxel > 0)) throw InvalidArgument("evaluate: voxel must be > 0");
  const double voxel = options.voxel;

  // Ground-truth instances as voxel key sets.
  std::map<int, std::size_t> inst_index;
  std::vector<int> inst_ids, inst_class;
  std::vector<std::vector<VoxelKey>> gt_keys;
  std::map<int, std::size_t> class_points;
  for (std::size_t i = 0; i < gt.points.size(); ++i) {
    if (gt.instances[i] <= 0) continue;
    auto [it, inserted] = inst_index.try_emplace(gt.instances[i], inst_ids.size());
    if (inserted) {
      inst_ids.push_back(gt.instances[i]);
      inst_class.push_back(gt.labels[i]);
      gt_keys.emplace_back();
    }
    gt_keys[it->second].push_back(voxel_key(gt.points[i], voxel));
    ++class_points[inst_class[it->second]];
  }
  if (inst_ids.empty()) throw InvalidArgument("evaluate: ground truth has no annotated instances");
  std::unordered_map<VoxelKey, std::vector<std::size_t>, VoxelKeyHash> key_owner;
  for (std::size_t g = 0; g < gt_keys.size(); ++g) {
    sort_unique(gt_keys[g]);
    for (const auto& k : gt_keys[g]) key_owner[k].push_back(g);
  }

  const Reference ref(gt.points, voxel);

  // Prediction key sets and the IoU matrix.
  const std::size_t np = map.instances.size(), ng = inst_ids.size();
  std::map<GlobalId, std::size_t> pred_index;
  std::vector<std::vector<double>> ious(np, std::vector<double>(ng, 0.0));
  std::vector<std::int64_t> ari_pred, ari_gt;
  for (std::size_t p = 0; p < np; ++p) {
    const auto& inst = map.instances[p];
    pred_index[inst.global_id] = p;
    std::vector<Vec3> pts;
    pts.reserve(inst.points.size());
    for (const auto& q : inst.points) pts.push_back(q.cast<double>());
    if (pts.empty()) continue;
    auto s = snap(pts, ref, voxel);
    for (std::size_t k = 0; k < s.target.size(); ++k) {
      if (s.target[k] < 0) continue;
      const int g = gt.instances[ref.survivors[s.target[k]]];
      if (g <= 0) continue;
      ari_pred.push_back(inst.global_id);
      ari_gt.push_back(g);
    }
    sort_unique(s.keys);
    std::vector<std::size_t> inter(ng, 0);
    for (const auto& k : s.keys)
      if (auto it = key_owner.find(k); it != key_owner.end())
        for (auto g : it->second) ++inter[g];
    for (std::size_t g = 0; g < ng; ++g)
      if (inter[g])
        ious[p][g] = static_cast<double>(inter[g]) /
                     (static_cast<double>(s.keys.size() + gt_keys[g].size()) - static_cast<double>(inter[g]));
  }

  std::map<int, std::vector<std::size_t>> class_gts;
  for (std::size_t g = 0; g < ng; ++g) class_gts[inst_class[g]].push_back(g);

  // Each prediction competes in the class it scores highest for.
  std::map<int, std::map<GlobalId, double>> tables;
  for (const auto& [label, res] : queries) {
    for (const auto& r : res.ranked)
      if (!pred_index.count(r.global_id))
        throw InvalidArgument("evaluate: query result references unknown instance " + std::to_string(r.global_id));
    tables[label] = res.score_table();
  }
  std::map<int, std::vector<std::pair<double, GlobalId>>> class_preds;
  for (const auto& inst : map.instances) {
    std::optional<std::pair<int, double>> best;
    for (const auto& [label, table] : tables) {
      auto it = table.find(inst.global_id);
      if (it == table.end()) continue;
      if (!best || it->second > best->second) best = {label, it->second};
    }
    if (best) class_preds[best->first].push_back({best->second, inst.global_id});
  }

  EvalReport rep;
  const auto grid_thresholds = ap_iou_grid();
  double total_points = 0;
  for (const auto& [label, gts] : class_gts) total_points += static_cast<double>(class_points[label]);
  for (const auto& [label, gts] : class_gts) {
    ClassReport c;
    c.label = label;
    auto v = gt.vocabulary.find(label);
    c.name = v != gt.vocabulary.end() ? v->second : "label_" + std::to_string(label);
    c.gt_instances = gts.size();
    c.gt_points = class_points[label];

    if (auto q = queries.find(label); q != queries.end() && !q->second.ranked.empty()) {
      const std::size_t top = pred_index.at(q->second.ranked.front().global_id);
      for (auto g : gts) c.iou = std::max(c.iou, ious[top][g]);
      c.accuracy = c.iou >= options.accuracy_iou ? 1.0 : 0.0;
    }

    auto preds = class_preds[label];
    std::sort(preds.begin(), preds.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<std::size_t> order;
    for (const auto& [score, id] : preds) order.push_back(pred_index.at(id));
    auto ap_at = [&](double t) { return average_precision(match_at(order, gts, ious, t), gts.size()); };
    double sum = 0;
    for (double t : grid_thresholds) sum += ap_at(t);
    c.ap = sum / static_cast<double>(grid_thresholds.size());
    c.ap50 = ap_at(0.5);
    c.ap25 = ap_at(0.25);

    rep.macc += c.accuracy;
    rep.f_miou += total_points > 0 ? c.iou * static_cast<double>(c.gt_points) / total_points : 0.0;
    rep.ap += c.ap;
    rep.ap50 += c.ap50;
    rep.ap25 += c.ap25;
    rep.per_class.push_back(std::move(c));
  }
  const double nc = static_cast<double>(rep.per_class.size());
  rep.macc /= nc;
  rep.ap /= nc;
  rep.ap50 /= nc;
  rep.ap25 /= nc;
  if (!ari_pred.empty()) rep.ari = adjusted_rand_index(ari_pred, ari_gt);
  return rep;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["mAcc"] = macc;
  j["F-mIoU"] = f_miou;
  j["AP"] = ap;
  j["AP50"] = ap50;
  j["AP25"] = ap25;
  j["ARI"] = ari ? nlohmann::json(*ari) : nlohmann::json(nullptr);
  auto arr = nlohmann::json::array();
  for (const auto& c : per_class)
    arr.push_back({{"label", c.label},
                   {"name", c.name},
                   {"gt_instances", c.gt_instances},
                   {"gt_points", c.gt_points},
                   {"accuracy", c.accuracy},
                   {"iou", c.iou},
                   {"AP", c.ap},
                   {"AP50", c.ap50},
                   {"AP25", c.ap25}});
  j["per_class"] = std::move(arr);
  return j;
}

std::string EvalReport::table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << std::left << std::setw(20) << "class" << std::right << std::setw(8) << "acc" << std::setw(8) << "IoU"
     << std::setw(8) << "AP" << std::setw(8) << "AP50" << std::setw(8) << "AP25" << "\n";
  for (const auto& c : per_class)
    os << std::left << std::setw(20) << c.name.substr(0, 19) << std::right << std::setw(8) << 100 * c.accuracy
       << std::setw(8) << 100 * c.iou << std::setw(8) << 100 * c.ap << std::setw(8) << 100 * c.ap50 << std::setw(8)
       << 100 * c.ap25 << "\n";
  os << "mAcc " << 100 * macc << "  F-mIoU " << 100 * f_miou << "  AP " << 100 * ap << "  AP50 " << 100 * ap50
     << "  AP25 " << 100 * ap25;
  if (ari) os << "  ARI " << std::setprecision(4) << *ari;
  os << "\n";
  return os.str();
}

std::vector<LabelEmbedding> one_hot_label_embeddings(const GroundTruthScene& gt) {
  std::set<int> classes(gt.labels.begin(), gt.labels.end());
  for (const auto& [label, name] : gt.vocabulary) classes.insert(label);
  std::vector<LabelEmbedding> out;
  const auto dim = static_cast<Eigen::Index>(classes.size());
  Eigen::Index k = 0;
  for (int label : classes) {
    auto v = gt.vocabulary.find(label);
    Embedding e = Embedding::Zero(dim);
    e[k++] = 1.0f;
    out.push_back({label, v != gt.vocabulary.end() ? v->second : "label_" + std::to_string(label), e});
  }
  return out;
}

InstanceMap map_from_ground_truth(const GroundTruthScene& gt, std::span<const LabelEmbedding> labels) {
  std::map<int, const LabelEmbedding*> by_label;
  for (const auto& l : labels) by_label[l.label] = &l;
  std::map<int, MapInstance> instances;
  for (std::size_t i = 0; i < gt.points.size(); ++i) {
    if (gt.instances[i] <= 0) continue;
    auto [it, inserted] = instances.try_emplace(gt.instances[i]);
    MapInstance& inst = it->second;
    if (inserted) {
      auto l = by_label.find(gt.labels[i]);
      if (l == by_label.end()) throw InvalidArgument("map_from_ground_truth: no embedding for label " +
                                                     std::to_string(gt.labels[i]));
      inst.global_id = static_cast<GlobalId>(gt.instances[i]);
      inst.name = l->second->name;
      inst.caption = "a " + inst.name;
      inst.embedding = l->second->embedding;
    }
    inst.points.push_back(gt.points[i].cast<float>());
  }
  InstanceMap map;
  map.embedding_dim = labels.empty() ? 0 : static_cast<int>(labels.front().embedding.size());
  for (auto& [id, inst] : instances) {
    compute_geometry(inst);
    map.instances.push_back(std::move(inst));
  }
  return map;
}

}  // namespace opensu
