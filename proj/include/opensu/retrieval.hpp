#pragma once

#include "opensu/scene_model.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace opensu {

struct ScoredInstance {
  GlobalId global_id = 0;
  double score = 0;
  bool operator==(const ScoredInstance&) const = default;
};

struct QueryResult {
  std::vector<ScoredInstance> ranked;  // score descending, ties by ascending ID

  GlobalId argmax() const { return ranked.front().global_id; }
  std::map<GlobalId, double> score_table() const;
};

/// Cosine of the query against every instance's fused embedding.
QueryResult query(const InstanceMap& map, const Embedding& query_embedding);

struct SimplifiedInstance {
  GlobalId id = 0;
  std::string name;
  std::optional<std::string> refined_name;
  std::string description;
  Vec3 centroid = Vec3::Zero();
  Aabb bbox;
};

/// The map without point sets and embeddings; coordinates rounded to mm.
using SimplifiedMap = std::vector<SimplifiedInstance>;

SimplifiedMap build_simplified_map(const InstanceMap& map);

nlohmann::json to_json(const SimplifiedMap& simplified);

/// The six reasoning rules given to the language model, one per line.
const std::vector<std::string>& spatial_prompt_rules();

/// System prompt: rules followed by the serialized simplified map.
std::string build_spatial_prompt(const SimplifiedMap& simplified);

}  // namespace opensu
