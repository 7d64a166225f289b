#include "opensu/retrieval.hpp"

#include "opensu/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace opensu {

std::map<GlobalId, double> QueryResult::score_table() const {
  std::map<GlobalId, double> out;
  for (const auto& r : ranked) out[r.global_id] = r.score;
  return out;
}

QueryResult query(const InstanceMap& map, const Embedding& q) {
  if (map.instances.empty()) throw InvalidArgument("query: empty map");
  if (q.size() == 0 || q.squaredNorm() == 0.0f) throw InvalidArgument("query: zero query vector");
  std::vector<Embedding> items;
  items.reserve(map.instances.size());
  for (const auto& inst : map.instances) {
    if (inst.embedding.size() != q.size())
      throw InvalidArgument("query: dimension mismatch (query " + std::to_string(q.size()) + ", instance " +
                            std::to_string(inst.embedding.size()) + ")");
    if (inst.embedding.squaredNorm() == 0.0f)
      throw InvalidArgument("query: instance " + std::to_string(inst.global_id) + " has a zero embedding");
    items.push_back(inst.embedding);
  }
  const auto scores = kernels::omp::cosine_scores(q, items);
  QueryResult res;
  res.ranked.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) res.ranked.push_back({map.instances[i].global_id, scores[i]});
  std::sort(res.ranked.begin(), res.ranked.end(), [](const ScoredInstance& a, const ScoredInstance& b) {
    return a.score != b.score ? a.score > b.score : a.global_id < b.global_id;
  });
  return res;
}

namespace {
double mm(double v) { return std::round(v * 1000.0) / 1000.0; }
Vec3 mm(const Vec3& v) { return {mm(v.x()), mm(v.y()), mm(v.z())}; }
nlohmann::json xyz(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
}  // namespace

SimplifiedMap build_simplified_map(const InstanceMap& map) {
  SimplifiedMap out;
  out.reserve(map.instances.size());
  for (const auto& inst : map.instances)
    out.push_back({inst.global_id, inst.name, inst.refined_name, inst.caption, mm(inst.centroid),
                   Aabb{mm(inst.bbox.min), mm(inst.bbox.max)}});
  return out;
}

nlohmann::json to_json(const SimplifiedMap& simplified) {
  auto arr = nlohmann::json::array();
  for (const auto& s : simplified) {
    nlohmann::json j;
    j["ID"] = s.id;
    j["Name"] = s.refined_name ? *s.refined_name : s.name;
    if (s.refined_name) j["Detector Name"] = s.name;
    j["Description"] = s.description;
    j["Centroid"] = xyz(s.centroid);
    j["Bounding Box"] = {{"Min", xyz(s.bbox.min)}, {"Max", xyz(s.bbox.max)}};
    arr.push_back(std::move(j));
  }
  return arr;
}

const std::vector<std::string>& spatial_prompt_rules() {
  static const std::vector<std::string> rules{
      "Use 'Name' & 'Description' to understand object.",
      "Use 'ID' to refer object.",
      "Use 'Cartesian Coordinates'.",
      "Get 'Centroid' & 'Bounding Box' information.",
      "Compute 'Euclidean Distance' if necessary.",
      "Assume 'Tolerance' if necessary.",
  };
  return rules;
}

std::string build_spatial_prompt(const SimplifiedMap& simplified) {
  std::ostringstream os;
  os << "You answer questions about a 3D scene. The scene is given as a JSON list of objects. "
        "Coordinates are in meters in a right-handed world frame.\n\n";
  os << "Rules:\n";
  for (const auto& r : spatial_prompt_rules()) os << "- " << r << "\n";
  os << "\nObjects:\n" << to_json(simplified).dump() << "\n";
  return os.str();
}

}  // namespace opensu
