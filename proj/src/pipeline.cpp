#include "opensu/pipeline.hpp"

#include "opensu/io_formats.hpp"
#include "opensu/projection.hpp"

#include <chrono>
#include <cstdio>
#include <memory>
#include <optional>

namespace opensu {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

}  // namespace

FrameSource directory_source(const std::filesystem::path& dir) {
  fs::path root = dir;
  std::vector<int> idx = list_frames(root);
  if (idx.empty() && fs::is_directory(dir / "frames")) {
    root = dir / "frames";
    idx = list_frames(root);
  }
  std::string manifests;
  for (int i : idx) manifests += read_file(frame_directory(root, i) / "manifest.json");
  return {idx, [root](int i) { return read_frame_bundle(root, i); }, idx.empty() ? "" : hex32(crc32_of(manifests))};
}

FrameSource memory_source(std::vector<FrameBundle> frames) {
  auto store = std::make_shared<std::map<int, FrameBundle>>();
  for (auto& f : frames) {
    const int i = f.frame_index;
    if (!store->emplace(i, std::move(f)).second) throw InvalidArgument("duplicate frame index " + std::to_string(i));
  }
  FrameSource src;
  for (const auto& [i, f] : *store) src.indices.push_back(i);
  src.load = [store](int i) { return store->at(i); };
  return src;
}

BuildResult build_map(const FrameSource& source, const FusionConfig& config, int batch) {
  config.validate();
  if (source.indices.empty()) throw InvalidArgument("no frames");
  batch = std::max(1, batch);

  BuildResult res{InstanceMap{}, ScenePointCloud(config.voxel), GlobalIdTable{}, BuildReport{}};
  auto& rep = res.report;
  rep.frames_available = source.indices.size();
  for (int pos : sample_frames(static_cast<int>(source.indices.size()), config.stride))
    rep.frames_processed.push_back(source.indices[pos]);

  FrameCatalog catalog;
  const auto& todo = rep.frames_processed;
  for (std::size_t start = 0; start < todo.size(); start += batch) {
    const std::size_t n = std::min<std::size_t>(batch, todo.size() - start);
    std::vector<FrameBundle> bundles(n);
    std::vector<FramePointCloud> clouds(n);
    std::vector<std::string> errors(n);
    std::vector<double> load_s(n, 0), prep_s(n, 0);

    // Exceptions must not escape an OpenMP region; collect and rethrow.
#pragma omp parallel for schedule(dynamic)
    for (std::size_t k = 0; k < n; ++k) {
      const int frame = todo[start + k];
      try {
        auto t0 = Clock::now();
        bundles[k] = source.load(frame);
        load_s[k] = seconds_since(t0);
        if (bundles[k].frame_index != frame) throw IoError("bundle reports frame index " + std::to_string(bundles[k].frame_index));
        const auto violations = validate_frame_bundle(bundles[k]);
        if (!violations.empty()) throw InvalidArgument(violations.front().code + ": " + violations.front().detail);
        t0 = Clock::now();
        clouds[k] = prepare_frame(bundles[k], config);
        prep_s[k] = seconds_since(t0);
      } catch (const std::exception& e) {
        errors[k] = "frame " + std::to_string(frame) + ": " + e.what();
      }
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (!errors[k].empty()) throw InvalidArgument(errors[k]);
      rep.timings.load += load_s[k];
      rep.timings.prepare += prep_s[k];
    }

    const auto t0 = Clock::now();
    for (std::size_t k = 0; k < n; ++k) {
      const IntegrationResult ir = integrate_frame(res.scene, res.table, clouds[k], config);
      for (const auto& r : ir.reports) {
        ++rep.segments;
        if (r.action == SegmentAction::kMerge) ++rep.merges;
        else if (r.action == SegmentAction::kNewId) ++rep.new_ids;
        else ++rep.absorbed;
      }
      catalog.emplace(bundles[k].frame_index, metadata_of(bundles[k]));
    }
    rep.timings.integrate += seconds_since(t0);
  }
  check_consistency(res.scene, res.table);
  rep.scene_points = res.scene.size();

  const auto t0 = Clock::now();
  res.map = finalize_map(res.scene, res.table, catalog, config);
  rep.timings.finalize = seconds_since(t0);
  return res;
}

nlohmann::json RunManifest::to_json() const {
  return {{"format", "opensu-run"}, {"version", 1},     {"command", command},
          {"config", config},       {"input_hash", input_hash}, {"frames_processed", frames_processed},
          {"frame_count", frames_processed.size()}, {"timings_s", timings}, {"outputs", outputs}};
}

void RunManifest::write(const std::filesystem::path& path) const { write_file_atomic(path, to_json().dump(1)); }

}  // namespace opensu
