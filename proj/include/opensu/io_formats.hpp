#pragma once

#include "opensu/metrics.hpp"
#include "opensu/scene_model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace opensu {

namespace fs = std::filesystem;

inline constexpr int kFrameFormatVersion = 1;
inline constexpr int kMapFormatVersion = 1;

// ---- raw little-endian buffers ------------------------------------------

std::string read_file(const fs::path& path);
void write_file(const fs::path& path, std::string_view bytes);
/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const fs::path& path, std::string_view bytes);

std::string encode_f32(std::span<const float> values);
std::vector<float> decode_f32(std::string_view bytes);
std::string encode_u16(std::span<const std::uint16_t> values);
std::vector<std::uint16_t> decode_u16(std::string_view bytes);

std::uint32_t crc32_of(std::string_view bytes);

/// A raw f32 vector file (query embeddings).
Embedding read_embedding_file(const fs::path& path);
void write_embedding_file(const fs::path& path, const Embedding& e);

// ---- frame bundles --------------------------------------------------------
// Layout: <root>/<frame_index>/{manifest.json, depth.u16, mask.u16, emb.f32}.
// Depth is u16 millimeters, masks u16 local IDs, embeddings f32; all
// little-endian. Embedding offsets count floats.

fs::path frame_directory(const fs::path& root, int frame_index);
void write_frame_bundle(const FrameBundle& bundle, const fs::path& root);
FrameBundle read_frame_bundle(const fs::path& root, int frame_index);
/// Frame indices present under root, ascending.
std::vector<int> list_frames(const fs::path& root);

std::uint16_t encode_depth_mm(double meters);
double decode_depth_mm(std::uint16_t mm);

// ---- PLY ------------------------------------------------------------------

struct ColorById {};
struct ColorBySimilarity {
  std::map<GlobalId, double> scores;
};
using PlyColoring = std::variant<ColorById, ColorBySimilarity>;

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

Rgb id_color(GlobalId id);
/// Linear blue (min) to red (max); mid-palette when min == max.
Rgb similarity_color(double score, double min_score, double max_score);

/// Binary little-endian PLY with float xyz and uchar rgb per point.
std::string export_ply(std::span<const Vec3> positions, std::span<const GlobalId> ids, const PlyColoring& coloring);
class ScenePointCloud;
std::string export_ply(const ScenePointCloud& cloud, const PlyColoring& coloring);
std::string export_ply(const InstanceMap& map, const PlyColoring& coloring);

/// Vertex element of an ascii or binary little-endian PLY, as doubles.
struct PlyVertices {
  std::size_t count = 0;
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;

  bool has(const std::string& name) const;
  const std::vector<double>& column(const std::string& name) const;
};

PlyVertices parse_ply(std::string_view bytes);

/// Labeled cloud as PLY: float x,y,z; int label; int instance.
std::string encode_labeled_ply(const GroundTruthScene& gt);
/// Reads x,y,z,label,instance; vocabulary filled from labels when given.
GroundTruthScene read_ground_truth(const fs::path& ply, std::span<const LabelEmbedding> labels = {});

// ---- label embedding tables -------------------------------------------------
// labels.json + sidecar f32 file with one row per label.

void write_label_embeddings(const fs::path& json_path, std::span<const LabelEmbedding> labels);
std::vector<LabelEmbedding> read_label_embeddings(const fs::path& json_path);

// ---- instance maps --------------------------------------------------------
// <stem>.json + <stem>_points.f32 + <stem>_emb.f32 in the same directory.

nlohmann::json config_to_json(const FusionConfig& c);
FusionConfig config_from_json(const nlohmann::json& j);

struct MapPaths {
  fs::path json, points, embeddings;
};
/// A path ending in .json names the document; anything else is a directory
/// holding map.json.
MapPaths map_paths(const fs::path& path);

void write_map(const InstanceMap& map, const fs::path& path);
InstanceMap read_map(const fs::path& path);

}  // namespace opensu
