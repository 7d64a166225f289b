// opensu: build / query / export-prompt / eval / synth / stats.
// JSON results on stdout, diagnostics on stderr.

#include "opensu/io_formats.hpp"
#include "opensu/kernels.hpp"
#include "opensu/metrics.hpp"
#include "opensu/pipeline.hpp"
#include "opensu/retrieval.hpp"
#include "opensu/synthgen.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <sstream>

using namespace opensu;
using nlohmann::json;

namespace {

struct StageError : std::runtime_error {
  StageError(const std::string& stage, const std::string& what) : std::runtime_error(stage + ": " + what) {}
};

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

Embedding parse_vector(const std::string& text) {
  std::vector<float> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const float x = std::stof(item, &used);
    if (item.find_first_not_of(" \t", used) != std::string::npos) throw InvalidArgument("bad number '" + item + "'");
    v.push_back(x);
  }
  if (v.empty()) throw InvalidArgument("empty vector");
  return Eigen::Map<Embedding>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incremental open-vocabulary 3D instance mapping"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (default: OPENSU_THREADS or runtime default)");

  // build
  FusionConfig cfg;
  std::string frames_dir, map_out, manifest_out;
  int scheme = static_cast<int>(cfg.scheme);
  bool no_dedup = false;
  auto* build = app.add_subcommand("build", "Fuse frame bundles into an instance map");
  build->add_option("--frames", frames_dir, "Frame bundle directory")->required();
  build->add_option("--out", map_out, "Map path (.json file or directory)")->required();
  build->add_option("--stride", cfg.stride, "Use every s-th frame")->capture_default_str();
  build->add_option("--epsilon", cfg.voxel, "Match radius and voxel size (m)")->capture_default_str();
  build->add_option("--rho", cfg.overlap_threshold, "Overlap ratio threshold")->capture_default_str();
  build->add_option("--scheme", scheme, "Fusion scheme 1..4")->capture_default_str()->check(CLI::Range(1, 4));
  build->add_option("--top-m", cfg.top_images, "Views fused per instance")->capture_default_str();
  build->add_option("--dbscan-eps", cfg.dbscan_eps)->capture_default_str();
  build->add_option("--dbscan-min", cfg.dbscan_min_points)->capture_default_str();
  build->add_option("--px", cfg.border_px, "Mask border padding (pixels)")->capture_default_str();
  build->add_option("--bbox-area-max", cfg.bbox_area_max)->capture_default_str();
  build->add_option("--split-fraction", cfg.split_fraction)->capture_default_str();
  build->add_flag("--no-dedup", no_dedup, "Keep every integrated point");
  build->add_option("--manifest", manifest_out, "Run manifest path (default: run.json beside the map)");

  // query
  std::string map_in, emb_file, vec_text, heatmap;
  int top = 5;
  auto* query_cmd = app.add_subcommand("query", "Rank map instances against a query embedding");
  query_cmd->add_option("--map", map_in)->required();
  auto* emb_opt = query_cmd->add_option("--embedding", emb_file, "Raw little-endian f32 vector file");
  auto* vec_opt = query_cmd->add_option("--vector", vec_text, "Comma-separated query vector");
  emb_opt->excludes(vec_opt);
  query_cmd->add_option("--top", top)->capture_default_str()->check(CLI::PositiveNumber);
  query_cmd->add_option("--heatmap", heatmap, "Write a similarity-colored PLY");

  // export-prompt
  std::string prompt_out, simplified_out;
  auto* prompt_cmd = app.add_subcommand("export-prompt", "Write the spatial reasoning prompt");
  prompt_cmd->add_option("--map", map_in)->required();
  prompt_cmd->add_option("--out", prompt_out)->required();
  prompt_cmd->add_option("--json", simplified_out, "Also write the simplified map as JSON");

  // eval
  std::string gt_path, labels_path;
  EvalOptions eval_opt;
  auto* eval_cmd = app.add_subcommand("eval", "Score a map against a labeled reference cloud");
  eval_cmd->add_option("--map", map_in)->required();
  eval_cmd->add_option("--gt", gt_path, "Labeled PLY (x,y,z,label,instance)")->required();
  eval_cmd->add_option("--voxel", eval_opt.voxel)->capture_default_str();
  eval_cmd->add_option("--labels", labels_path, "Label embedding table (default: labels.json beside the GT)");
  eval_cmd->add_option("--acc-iou", eval_opt.accuracy_iou, "IoU for a top-1 hit in mAcc")->capture_default_str();

  // synth
  std::string scene_path, synth_out;
  std::uint64_t seed = 42;
  int n_objects = 3, n_frames = 10;
  double noise = 0;
  auto* synth_cmd = app.add_subcommand("synth", "Render a synthetic scene to frame bundles");
  synth_cmd->add_option("--scene", scene_path, "Scene description JSON");
  synth_cmd->add_option("--seed", seed)->capture_default_str();
  synth_cmd->add_option("--objects", n_objects)->capture_default_str();
  synth_cmd->add_option("--frames", n_frames)->capture_default_str();
  synth_cmd->add_option("--noise", noise, "Depth noise sigma (m)")->capture_default_str();
  synth_cmd->add_option("--out", synth_out)->required();

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "Summarize a map");
  stats_cmd->add_option("--map", map_in)->required();

  CLI11_PARSE(app, argc, argv);

  if (threads <= 0)
    if (const char* env = std::getenv("OPENSU_THREADS")) threads = std::atoi(env);
  kernels::set_thread_count(threads);

  try {
    if (*build) {
      cfg.scheme = scheme_from_int(scheme);
      cfg.dedup = !no_dedup;
      const auto t0 = std::chrono::steady_clock::now();
      const FrameSource src = stage("load", [&] { return directory_source(frames_dir); });
      const BuildResult res = stage("build", [&] { return build_map(src, cfg); });
      const MapPaths paths = map_paths(map_out);
      stage("write", [&] {
        write_map(res.map, map_out);
        return 0;
      });
      const auto& r = res.report;
      RunManifest m;
      m.command = "build";
      m.config = config_to_json(cfg);
      m.input_hash = src.input_hash;
      m.frames_processed = r.frames_processed;
      m.timings = {{"load", r.timings.load},
                   {"prepare", r.timings.prepare},
                   {"integrate", r.timings.integrate},
                   {"finalize", r.timings.finalize},
                   {"total", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
      m.outputs = {{"map", paths.json.string()}, {"points", paths.points.string()}, {"embeddings", paths.embeddings.string()}};
      const fs::path manifest = manifest_out.empty() ? paths.json.parent_path() / "run.json" : fs::path(manifest_out);
      stage("manifest", [&] {
        m.write(manifest);
        return 0;
      });
      std::cerr << "processed " << r.frames_processed.size() << " of " << r.frames_available << " frames; "
                << res.map.instances.size() << " instances\n";
      emit({{"map", paths.json.string()},
            {"manifest", manifest.string()},
            {"instances", res.map.instances.size()},
            {"frames_processed", r.frames_processed.size()},
            {"scene_points", r.scene_points},
            {"segments", r.segments},
            {"merges", r.merges},
            {"new_ids", r.new_ids},
            {"absorbed", r.absorbed}});
    } else if (*query_cmd) {
      const InstanceMap map = stage("load", [&] { return read_map(map_in); });
      if (emb_file.empty() && vec_text.empty()) throw StageError("args", "one of --embedding or --vector is required");
      const Embedding q = stage("load", [&] { return emb_file.empty() ? parse_vector(vec_text) : read_embedding_file(emb_file); });
      const QueryResult res = stage("query", [&] { return query(map, q); });
      json ranked = json::array();
      for (std::size_t i = 0; i < res.ranked.size() && i < static_cast<std::size_t>(top); ++i) {
        const auto& s = res.ranked[i];
        const MapInstance* inst = map.find(s.global_id);
        ranked.push_back({{"global_id", s.global_id},
                          {"name", inst->refined_name ? *inst->refined_name : inst->name},
                          {"score", s.score}});
      }
      json out = {{"argmax", res.argmax()}, {"results", ranked}};
      if (!heatmap.empty()) {
        stage("heatmap", [&] {
          write_file(heatmap, export_ply(map, ColorBySimilarity{res.score_table()}));
          return 0;
        });
        out["heatmap"] = heatmap;
      }
      emit(out);
    } else if (*prompt_cmd) {
      const InstanceMap map = stage("load", [&] { return read_map(map_in); });
      const SimplifiedMap simplified = build_simplified_map(map);
      stage("write", [&] {
        write_file(prompt_out, build_spatial_prompt(simplified));
        if (!simplified_out.empty()) write_file(simplified_out, to_json(simplified).dump(2));
        return 0;
      });
      emit({{"prompt", prompt_out}, {"instances", simplified.size()}});
    } else if (*eval_cmd) {
      const InstanceMap map = stage("load", [&] { return read_map(map_in); });
      if (labels_path.empty()) labels_path = (fs::path(gt_path).parent_path() / "labels.json").string();
      const auto labels = stage("load", [&] { return read_label_embeddings(labels_path); });
      const GroundTruthScene gt = stage("load", [&] { return read_ground_truth(gt_path, labels); });
      const EvalReport report = stage("eval", [&] { return evaluate(map, gt, retrieve_labels(map, labels), eval_opt); });
      std::cerr << report.table();
      emit(report.to_json());
    } else if (*synth_cmd) {
      synth::SynthScene scene = stage("scene", [&] {
        if (!scene_path.empty()) return synth::scene_from_json(json::parse(read_file(scene_path)));
        return synth::random_scene(seed, n_objects, n_frames, noise);
      });
      const synth::SynthOutput out = stage("render", [&] { return synth::generate(scene); });
      for (int i : out.skipped) std::cerr << "notice: pose " << i << " skipped (object behind camera)\n";
      const fs::path root = synth_out;
      stage("write", [&] {
        for (const auto& f : out.frames) write_frame_bundle(f, root / "frames");
        write_file(root / "gt.ply", encode_labeled_ply(out.ground_truth));
        if (!out.labels.empty()) write_label_embeddings(root / "labels.json", out.labels);
        write_file(root / "scene.json", synth::to_json(scene).dump(1));
        return 0;
      });
      emit({{"frames", out.frames.size()},
            {"skipped", out.skipped},
            {"objects", scene.objects.size()},
            {"gt_points", out.ground_truth.points.size()},
            {"out", root.string()}});
    } else if (*stats_cmd) {
      const InstanceMap map = stage("load", [&] { return read_map(map_in); });
      json inst = json::array();
      std::size_t points = 0, observations = 0;
      for (const auto& i : map.instances) {
        points += i.points.size();
        observations += i.observations.size();
        inst.push_back({{"global_id", i.global_id},
                        {"name", i.refined_name ? *i.refined_name : i.name},
                        {"points", i.points.size()},
                        {"observations", i.observations.size()}});
      }
      emit({{"instances", map.instances.size()},
            {"points", points},
            {"observations", observations},
            {"embedding_dim", map.embedding_dim},
            {"per_instance", inst}});
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
