#pragma once

// Frames in, instance map out: sample -> pad -> filter -> back-project ->
// integrate per frame, then finalize. Frame preparation runs in parallel
// batches; integration is the single writer and runs in frame order.

#include "opensu/fusion_tracker.hpp"
#include "opensu/postprocess.hpp"
#include "opensu/scene_model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace opensu {

struct FrameSource {
  std::vector<int> indices;  // ascending frame indices available
  std::function<FrameBundle(int)> load;
  std::string input_hash;  // fingerprint of the inputs, empty if unknown
};

/// Bundles under dir, or under dir/frames when dir holds none itself.
FrameSource directory_source(const std::filesystem::path& dir);
FrameSource memory_source(std::vector<FrameBundle> frames);

struct StageTimings {
  double load = 0, prepare = 0, integrate = 0, finalize = 0;  // seconds
};

struct BuildReport {
  std::size_t frames_available = 0;
  std::vector<int> frames_processed;
  std::size_t segments = 0, merges = 0, new_ids = 0, absorbed = 0;
  std::size_t scene_points = 0;
  StageTimings timings;
};

struct BuildResult {
  InstanceMap map;
  ScenePointCloud scene;
  GlobalIdTable table;
  BuildReport report;
};

/// Throws InvalidArgument("no frames") on an empty source and names the
/// frame index when a bundle fails validation.
BuildResult build_map(const FrameSource& source, const FusionConfig& config, int batch = 16);

struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::string input_hash;
  std::vector<int> frames_processed;
  std::map<std::string, double> timings;
  std::map<std::string, std::string> outputs;

  nlohmann::json to_json() const;
  /// Temp file + rename.
  void write(const std::filesystem::path& path) const;
};

}  // namespace opensu
