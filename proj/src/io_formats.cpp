#include "opensu/io_formats.hpp"

#include "opensu/fusion_tracker.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <functional>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace opensu {

using nlohmann::json;

namespace {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <typename T>
void put(std::string& out, T v) {
  v = to_little(v);
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return to_little(v);
}

json require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw IoError(where + ": missing field '" + key + "'");
  return j.at(key);
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  try {
    return require(j, key, where).get<T>();
  } catch (const json::exception& e) {
    throw IoError(where + ": bad field '" + key + "': " + e.what());
  }
}

json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(where + ": " + e.what());
  }
}

json vec3_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 vec3_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw IoError(where + ": expected 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Embedding slice(const std::vector<float>& all, std::size_t offset, int dim, const std::string& where) {
  if (dim < 0 || offset + static_cast<std::size_t>(dim) > all.size()) throw IoError(where + ": embedding offset out of range");
  Embedding e(dim);
  for (int k = 0; k < dim; ++k) e[k] = all[offset + k];
  return e;
}

void append_embedding(std::vector<float>& out, const Embedding& e) {
  out.insert(out.end(), e.data(), e.data() + e.size());
}

}  // namespace

std::string read_file(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  std::random_device rd;
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(rd());
  write_file(tmp, bytes);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("rename to " + path.string() + " failed: " + ec.message());
  }
}

std::string encode_f32(std::span<const float> values) {
  std::string out;
  out.reserve(values.size() * 4);
  for (float v : values) put(out, v);
  return out;
}

std::vector<float> decode_f32(std::string_view bytes) {
  if (bytes.size() % 4) throw IoError("f32 buffer size not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = get<float>(bytes.data() + 4 * i);
  return out;
}

std::string encode_u16(std::span<const std::uint16_t> values) {
  std::string out;
  out.reserve(values.size() * 2);
  for (auto v : values) put(out, v);
  return out;
}

std::vector<std::uint16_t> decode_u16(std::string_view bytes) {
  if (bytes.size() % 2) throw IoError("u16 buffer size not a multiple of 2");
  std::vector<std::uint16_t> out(bytes.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = get<std::uint16_t>(bytes.data() + 2 * i);
  return out;
}

std::uint32_t crc32_of(std::string_view bytes) {
  uLong c = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large buffers
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    c = crc32(c, reinterpret_cast<const Bytef*>(bytes.data() + pos), n);
    pos += n;
  }
  return static_cast<std::uint32_t>(c);
}

Embedding read_embedding_file(const fs::path& path) {
  const auto v = decode_f32(read_file(path));
  if (v.empty()) throw IoError(path.string() + ": empty embedding file");
  return Eigen::Map<const Embedding>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void write_embedding_file(const fs::path& path, const Embedding& e) {
  write_file(path, encode_f32({e.data(), static_cast<std::size_t>(e.size())}));
}

// ---- frame bundles --------------------------------------------------------

fs::path frame_directory(const fs::path& root, int frame_index) { return root / std::to_string(frame_index); }

std::uint16_t encode_depth_mm(double meters) {
  if (!std::isfinite(meters) || meters <= 0) return 0;
  const double mm = std::round(meters * 1000.0);
  if (mm > 65535.0) throw InvalidArgument("depth beyond 65.535 m cannot be stored as u16 millimeters");
  return static_cast<std::uint16_t>(mm);
}

double decode_depth_mm(std::uint16_t mm) { return mm / 1000.0; }

void write_frame_bundle(const FrameBundle& b, const fs::path& root) {
  const auto violations = validate_frame_bundle(b);
  if (!violations.empty())
    throw InvalidArgument("frame " + std::to_string(b.frame_index) + ": " + violations.front().code + " (" +
                          violations.front().detail + ")");
  const fs::path dir = frame_directory(root, b.frame_index);
  fs::create_directories(dir);

  std::vector<std::uint16_t> depth(b.depth.data.size());
  std::transform(b.depth.data.begin(), b.depth.data.end(), depth.begin(), encode_depth_mm);
  const std::string depth_bytes = encode_u16(depth);
  const std::string mask_bytes = encode_u16(b.mask.data);

  const int dim = static_cast<int>(b.global_embedding.size());
  std::vector<float> emb;
  json instances = json::array();
  for (const auto& r : b.instances) {
    instances.push_back({{"local_id", r.local_id},
                         {"name", r.name},
                         {"caption", r.caption},
                         {"pred_score", r.pred_score},
                         {"bbox", {r.bbox.x0, r.bbox.y0, r.bbox.x1, r.bbox.y1}},
                         {"embedding_offset", emb.size()}});
    append_embedding(emb, r.embedding);
  }
  const std::size_t global_offset = emb.size();
  append_embedding(emb, b.global_embedding);
  const std::string emb_bytes = encode_f32(emb);

  json pose = json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) pose.push_back(b.pose.matrix(r, c));

  const auto& k = b.intrinsics;
  json m = {{"format", "opensu-frame"},
            {"version", kFrameFormatVersion},
            {"frame_index", b.frame_index},
            {"intrinsics", {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}}},
            {"pose", pose},
            {"depth_unit", "mm"},
            {"embedding_dim", dim},
            {"instances", instances},
            {"global_embedding_offset", global_offset},
            {"files", {{"depth", "depth.u16"}, {"mask", "mask.u16"}, {"embeddings", "emb.f32"}}},
            {"checksums",
             {{"depth", crc32_of(depth_bytes)}, {"mask", crc32_of(mask_bytes)}, {"embeddings", crc32_of(emb_bytes)}}}};

  write_file(dir / "depth.u16", depth_bytes);
  write_file(dir / "mask.u16", mask_bytes);
  write_file(dir / "emb.f32", emb_bytes);
  write_file_atomic(dir / "manifest.json", m.dump(1));
}

FrameBundle read_frame_bundle(const fs::path& root, int frame_index) {
  const fs::path dir = frame_directory(root, frame_index);
  const std::string where = (dir / "manifest.json").string();
  const json m = parse_json(read_file(dir / "manifest.json"), where);
  if (m.value("format", "") != "opensu-frame") throw IoError(where + ": not a frame manifest");
  if (m.value("version", 0) != kFrameFormatVersion) throw IoError(where + ": unsupported version");

  FrameBundle b;
  b.frame_index = field<int>(m, "frame_index", where);
  if (b.frame_index != frame_index) throw IoError(where + ": frame_index does not match directory");
  const json ki = require(m, "intrinsics", where);
  b.intrinsics = {field<double>(ki, "fx", where), field<double>(ki, "fy", where), field<double>(ki, "cx", where),
                  field<double>(ki, "cy", where), field<int>(ki, "width", where), field<int>(ki, "height", where)};
  const auto pose = field<std::vector<double>>(m, "pose", where);
  if (pose.size() != 16) throw IoError(where + ": pose must have 16 entries");
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) b.pose.matrix(r, c) = pose[r * 4 + c];

  const json files = require(m, "files", where);
  const json sums = require(m, "checksums", where);
  auto load = [&](const char* key) {
    const std::string bytes = read_file(dir / field<std::string>(files, key, where));
    if (crc32_of(bytes) != field<std::uint32_t>(sums, key, where))
      throw IoError(where + ": checksum mismatch for " + key);
    return bytes;
  };

  const int w = b.intrinsics.width, h = b.intrinsics.height;
  if (w <= 0 || h <= 0) throw IoError(where + ": invalid image size");
  const auto depth = decode_u16(load("depth"));
  const auto mask = decode_u16(load("mask"));
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (depth.size() != n || mask.size() != n) throw IoError(where + ": image buffer size mismatch");
  b.depth = DepthImage(w, h);
  std::transform(depth.begin(), depth.end(), b.depth.data.begin(), decode_depth_mm);
  b.mask = MaskImage(w, h);
  b.mask.data = mask;

  const auto emb = decode_f32(load("embeddings"));
  const int dim = field<int>(m, "embedding_dim", where);
  for (const auto& ji : require(m, "instances", where)) {
    InstanceRecord r;
    r.local_id = field<LocalId>(ji, "local_id", where);
    r.name = field<std::string>(ji, "name", where);
    r.caption = ji.value("caption", "");
    r.pred_score = field<double>(ji, "pred_score", where);
    const auto bb = field<std::vector<int>>(ji, "bbox", where);
    if (bb.size() != 4) throw IoError(where + ": bbox must have 4 entries");
    r.bbox = {bb[0], bb[1], bb[2], bb[3]};
    r.embedding = slice(emb, field<std::size_t>(ji, "embedding_offset", where), dim, where);
    b.instances.push_back(std::move(r));
  }
  b.global_embedding = slice(emb, field<std::size_t>(m, "global_embedding_offset", where), dim, where);
  return b;
}

std::vector<int> list_frames(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
  std::vector<int> out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "manifest.json")) continue;
    const std::string name = entry.path().filename().string();
    int v = 0;
    auto [p, ec] = std::from_chars(name.data(), name.data() + name.size(), v);
    if (ec == std::errc() && p == name.data() + name.size() && v >= 0) out.push_back(v);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---- PLY ------------------------------------------------------------------

Rgb id_color(GlobalId id) {
  // splitmix64 finalizer; keeps each channel away from black
  std::uint64_t z = id + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  z ^= z >> 31;
  auto ch = [&](int shift) { return static_cast<std::uint8_t>(48 + ((z >> shift) & 0xFF) % 208); };
  return {ch(0), ch(8), ch(16)};
}

Rgb similarity_color(double s, double lo, double hi) {
  const double t = hi > lo ? std::clamp((s - lo) / (hi - lo), 0.0, 1.0) : 0.5;
  return {static_cast<std::uint8_t>(std::lround(255.0 * t)), 0, static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - t)))};
}

std::string export_ply(std::span<const Vec3> positions, std::span<const GlobalId> ids, const PlyColoring& coloring) {
  if (positions.size() != ids.size()) throw InvalidArgument("export_ply: positions and ids differ in length");
  if (positions.empty()) throw InvalidArgument("export_ply: empty cloud");
  std::function<Rgb(GlobalId)> color;
  if (const auto* sim = std::get_if<ColorBySimilarity>(&coloring)) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& [id, s] : sim->scores) {
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    color = [sim, lo, hi](GlobalId id) {
      const auto it = sim->scores.find(id);
      return it == sim->scores.end() ? Rgb{128, 128, 128} : similarity_color(it->second, lo, hi);
    };
  } else {
    color = id_color;
  }

  std::string out = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(positions.size()) +
                    "\nproperty float x\nproperty float y\nproperty float z\n"
                    "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  out.reserve(out.size() + positions.size() * 15);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    for (int a = 0; a < 3; ++a) put(out, static_cast<float>(positions[i][a]));
    const Rgb c = color(ids[i]);
    out.push_back(static_cast<char>(c.r));
    out.push_back(static_cast<char>(c.g));
    out.push_back(static_cast<char>(c.b));
  }
  return out;
}

std::string export_ply(const ScenePointCloud& cloud, const PlyColoring& coloring) {
  return export_ply(cloud.positions(), cloud.ids(), coloring);
}

std::string export_ply(const InstanceMap& map, const PlyColoring& coloring) {
  std::vector<Vec3> pos;
  std::vector<GlobalId> ids;
  for (const auto& inst : map.instances)
    for (const auto& p : inst.points) {
      pos.push_back(p.cast<double>());
      ids.push_back(inst.global_id);
    }
  return export_ply(pos, ids, coloring);
}

bool PlyVertices::has(const std::string& name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

const std::vector<double>& PlyVertices::column(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw IoError("ply: no vertex property '" + name + "'");
  return columns[it - names.begin()];
}

namespace {

enum class PlyType { kI8, kU8, kI16, kU16, kI32, kU32, kF32, kF64 };

PlyType ply_type(const std::string& t) {
  static const std::map<std::string, PlyType> table{
      {"char", PlyType::kI8},    {"int8", PlyType::kI8},     {"uchar", PlyType::kU8},   {"uint8", PlyType::kU8},
      {"short", PlyType::kI16},  {"int16", PlyType::kI16},   {"ushort", PlyType::kU16}, {"uint16", PlyType::kU16},
      {"int", PlyType::kI32},    {"int32", PlyType::kI32},   {"uint", PlyType::kU32},   {"uint32", PlyType::kU32},
      {"float", PlyType::kF32},  {"float32", PlyType::kF32}, {"double", PlyType::kF64}, {"float64", PlyType::kF64}};
  const auto it = table.find(t);
  if (it == table.end()) throw IoError("ply: unknown type '" + t + "'");
  return it->second;
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::kI8:
    case PlyType::kU8: return 1;
    case PlyType::kI16:
    case PlyType::kU16: return 2;
    case PlyType::kI32:
    case PlyType::kU32:
    case PlyType::kF32: return 4;
    case PlyType::kF64: return 8;
  }
  return 0;
}

double ply_read(PlyType t, const char* p) {
  switch (t) {
    case PlyType::kI8: return get<std::int8_t>(p);
    case PlyType::kU8: return get<std::uint8_t>(p);
    case PlyType::kI16: return get<std::int16_t>(p);
    case PlyType::kU16: return get<std::uint16_t>(p);
    case PlyType::kI32: return get<std::int32_t>(p);
    case PlyType::kU32: return get<std::uint32_t>(p);
    case PlyType::kF32: return get<float>(p);
    case PlyType::kF64: return get<double>(p);
  }
  return 0;
}

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<std::string> props;
  std::vector<PlyType> types;
  bool has_list = false;
};

}  // namespace

PlyVertices parse_ply(std::string_view bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const auto end = bytes.find('\n', pos);
    if (end == std::string_view::npos) throw IoError("ply: truncated header");
    std::string line(bytes.substr(pos, end - pos));
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  if (next_line() != "ply") throw IoError("ply: missing magic");

  bool binary = false;
  std::vector<PlyElement> elements;
  for (;;) {
    const std::string line = next_line();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "end_header") break;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") binary = true;
      else if (fmt != "ascii") throw IoError("ply: unsupported format '" + fmt + "'");
    } else if (word == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (word == "property") {
      if (elements.empty()) throw IoError("ply: property before element");
      std::string type, name;
      ls >> type;
      if (type == "list") {
        elements.back().has_list = true;
        std::string a, b;
        ls >> a >> b >> name;
        elements.back().props.push_back(name);
        elements.back().types.push_back(PlyType::kU8);
        continue;
      }
      ls >> name;
      elements.back().props.push_back(name);
      elements.back().types.push_back(ply_type(type));
    }
  }

  PlyVertices out;
  const char* data = bytes.data() + pos;
  const char* const end = bytes.data() + bytes.size();
  std::istringstream ascii(binary ? std::string() : std::string(bytes.substr(pos)));

  for (const auto& e : elements) {
    const bool vertex = e.name == "vertex";
    if (e.has_list) {
      if (vertex) throw IoError("ply: list properties on vertices are not supported");
      break;  // everything we need precedes this element or is missing
    }
    if (vertex) {
      out.count = e.count;
      out.names = e.props;
      out.columns.assign(e.props.size(), std::vector<double>(e.count));
    }
    std::size_t stride = 0;
    for (auto t : e.types) stride += ply_size(t);
    for (std::size_t i = 0; i < e.count; ++i) {
      if (binary) {
        if (end - data < static_cast<std::ptrdiff_t>(stride)) throw IoError("ply: truncated body");
        const char* p = data;
        for (std::size_t k = 0; k < e.types.size(); ++k) {
          if (vertex) out.columns[k][i] = ply_read(e.types[k], p);
          p += ply_size(e.types[k]);
        }
        data += stride;
      } else {
        for (std::size_t k = 0; k < e.types.size(); ++k) {
          double v;
          if (!(ascii >> v)) throw IoError("ply: truncated ascii body");
          if (vertex) out.columns[k][i] = v;
        }
      }
    }
    if (vertex) return out;
  }
  throw IoError("ply: no vertex element");
}

std::string encode_labeled_ply(const GroundTruthScene& gt) {
  const std::size_t n = gt.points.size();
  if (gt.labels.size() != n || gt.instances.size() != n) throw InvalidArgument("labeled ply: column lengths differ");
  std::string out = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(n) +
                    "\nproperty float x\nproperty float y\nproperty float z\n"
                    "property int label\nproperty int instance\nend_header\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) put(out, static_cast<float>(gt.points[i][a]));
    put(out, static_cast<std::int32_t>(gt.labels[i]));
    put(out, static_cast<std::int32_t>(gt.instances[i]));
  }
  return out;
}

GroundTruthScene read_ground_truth(const fs::path& ply, std::span<const LabelEmbedding> labels) {
  const PlyVertices v = parse_ply(read_file(ply));
  GroundTruthScene gt;
  const auto& x = v.column("x");
  const auto& y = v.column("y");
  const auto& z = v.column("z");
  const auto& l = v.column("label");
  const auto& ins = v.column("instance");
  gt.points.reserve(v.count);
  for (std::size_t i = 0; i < v.count; ++i) {
    gt.points.emplace_back(x[i], y[i], z[i]);
    gt.labels.push_back(static_cast<int>(l[i]));
    gt.instances.push_back(static_cast<int>(ins[i]));
  }
  for (const auto& le : labels) gt.vocabulary[le.label] = le.name;
  return gt;
}

// ---- label embedding tables -------------------------------------------------

void write_label_embeddings(const fs::path& json_path, std::span<const LabelEmbedding> labels) {
  if (labels.empty()) throw InvalidArgument("label table is empty");
  const auto dim = labels.front().embedding.size();
  std::vector<float> emb;
  json arr = json::array();
  for (const auto& l : labels) {
    if (l.embedding.size() != dim) throw InvalidArgument("label embeddings differ in dimension");
    arr.push_back({{"label", l.label}, {"name", l.name}, {"embedding_offset", emb.size()}});
    append_embedding(emb, l.embedding);
  }
  fs::path sidecar = json_path;
  sidecar.replace_extension(".f32");
  const std::string bytes = encode_f32(emb);
  json j = {{"format", "opensu-labels"},
            {"version", 1},
            {"embedding_dim", dim},
            {"embeddings_file", sidecar.filename().string()},
            {"checksum", crc32_of(bytes)},
            {"labels", arr}};
  write_file(sidecar, bytes);
  write_file_atomic(json_path, j.dump(1));
}

std::vector<LabelEmbedding> read_label_embeddings(const fs::path& json_path) {
  const std::string where = json_path.string();
  const json j = parse_json(read_file(json_path), where);
  if (j.value("format", "") != "opensu-labels") throw IoError(where + ": not a label table");
  const std::string bytes = read_file(json_path.parent_path() / field<std::string>(j, "embeddings_file", where));
  if (crc32_of(bytes) != field<std::uint32_t>(j, "checksum", where)) throw IoError(where + ": checksum mismatch");
  const auto emb = decode_f32(bytes);
  const int dim = field<int>(j, "embedding_dim", where);
  std::vector<LabelEmbedding> out;
  for (const auto& jl : require(j, "labels", where))
    out.push_back({field<int>(jl, "label", where), field<std::string>(jl, "name", where),
                   slice(emb, field<std::size_t>(jl, "embedding_offset", where), dim, where)});
  return out;
}

// ---- instance maps --------------------------------------------------------

json config_to_json(const FusionConfig& c) {
  return {{"stride", c.stride},
          {"border_px", c.border_px},
          {"voxel", c.voxel},
          {"overlap_threshold", c.overlap_threshold},
          {"top_images", c.top_images},
          {"crop_levels", c.crop_levels},
          {"crop_ratios", c.crop_ratios},
          {"dbscan_eps", c.dbscan_eps},
          {"dbscan_min_points", c.dbscan_min_points},
          {"split_fraction", c.split_fraction},
          {"bbox_area_max", c.bbox_area_max},
          {"background_names", c.background_names},
          {"scheme", static_cast<int>(c.scheme)},
          {"dedup", c.dedup}};
}

FusionConfig config_from_json(const json& j) {
  FusionConfig c;
  const std::string where = "config";
  c.stride = field<int>(j, "stride", where);
  c.border_px = field<int>(j, "border_px", where);
  c.voxel = field<double>(j, "voxel", where);
  c.overlap_threshold = field<double>(j, "overlap_threshold", where);
  c.top_images = field<int>(j, "top_images", where);
  c.crop_levels = field<int>(j, "crop_levels", where);
  c.crop_ratios = field<std::vector<double>>(j, "crop_ratios", where);
  c.dbscan_eps = field<double>(j, "dbscan_eps", where);
  c.dbscan_min_points = field<int>(j, "dbscan_min_points", where);
  c.split_fraction = field<double>(j, "split_fraction", where);
  c.bbox_area_max = field<double>(j, "bbox_area_max", where);
  c.background_names = field<std::vector<std::string>>(j, "background_names", where);
  c.scheme = scheme_from_int(field<int>(j, "scheme", where));
  c.dedup = field<bool>(j, "dedup", where);
  return c;
}

MapPaths map_paths(const fs::path& path) {
  fs::path json_path = path.extension() == ".json" ? path : path / "map.json";
  const fs::path dir = json_path.parent_path();
  const std::string stem = json_path.stem().string();
  return {json_path, dir / (stem + "_points.f32"), dir / (stem + "_emb.f32")};
}

void write_map(const InstanceMap& map, const fs::path& path) {
  const MapPaths paths = map_paths(path);
  std::vector<float> pts, emb;
  json instances = json::array();
  for (const auto& inst : map.instances) {
    if (inst.embedding.size() != map.embedding_dim)
      throw InvalidArgument("instance " + std::to_string(inst.global_id) + " embedding dimension differs from map");
    json obs = json::array();
    for (const auto& o : inst.observations)
      obs.push_back({{"frame_index", o.frame_index}, {"local_id", o.local_id}, {"pred_score", o.pred_score}});
    instances.push_back({{"global_id", inst.global_id},
                         {"name", inst.name},
                         {"refined_name", inst.refined_name ? json(*inst.refined_name) : json(nullptr)},
                         {"caption", inst.caption},
                         {"centroid", vec3_json(inst.centroid)},
                         {"bbox", inst.bbox.empty() ? json(nullptr) : json{vec3_json(inst.bbox.min), vec3_json(inst.bbox.max)}},
                         {"point_offset", pts.size() / 3},
                         {"point_count", inst.points.size()},
                         {"embedding_offset", emb.size()},
                         {"observations", obs}});
    for (const auto& p : inst.points) pts.insert(pts.end(), {p.x(), p.y(), p.z()});
    append_embedding(emb, inst.embedding);
  }
  const std::string pts_bytes = encode_f32(pts);
  const std::string emb_bytes = encode_f32(emb);
  json j = {{"format", "opensu-map"},
            {"version", kMapFormatVersion},
            {"embedding_dim", map.embedding_dim},
            {"config", config_to_json(map.config)},
            {"files", {{"points", paths.points.filename().string()}, {"embeddings", paths.embeddings.filename().string()}}},
            {"checksums", {{"points", crc32_of(pts_bytes)}, {"embeddings", crc32_of(emb_bytes)}}},
            {"instances", instances}};
  write_file_atomic(paths.points, pts_bytes);
  write_file_atomic(paths.embeddings, emb_bytes);
  write_file_atomic(paths.json, j.dump(1));
}

InstanceMap read_map(const fs::path& path) {
  const MapPaths paths = map_paths(path);
  const std::string where = paths.json.string();
  const json j = parse_json(read_file(paths.json), where);
  if (j.value("format", "") != "opensu-map") throw IoError(where + ": not an instance map");
  if (j.value("version", 0) != kMapFormatVersion) throw IoError(where + ": unsupported version");

  const json files = require(j, "files", where);
  const json sums = require(j, "checksums", where);
  auto load = [&](const char* key) {
    const std::string bytes = read_file(paths.json.parent_path() / field<std::string>(files, key, where));
    if (crc32_of(bytes) != field<std::uint32_t>(sums, key, where)) throw IoError(where + ": checksum mismatch for " + key);
    return decode_f32(bytes);
  };
  const auto pts = load("points");
  const auto emb = load("embeddings");

  InstanceMap map;
  map.embedding_dim = field<int>(j, "embedding_dim", where);
  map.config = config_from_json(require(j, "config", where));
  for (const auto& ji : require(j, "instances", where)) {
    MapInstance inst;
    inst.global_id = field<GlobalId>(ji, "global_id", where);
    inst.name = field<std::string>(ji, "name", where);
    const json rn = require(ji, "refined_name", where);
    if (!rn.is_null()) inst.refined_name = rn.get<std::string>();
    inst.caption = field<std::string>(ji, "caption", where);
    inst.centroid = vec3_from(require(ji, "centroid", where), where);
    const json bb = require(ji, "bbox", where);
    if (bb.is_null()) {
      inst.bbox = Aabb{};
    } else {
      if (!bb.is_array() || bb.size() != 2) throw IoError(where + ": bbox must be [min, max]");
      inst.bbox = {vec3_from(bb[0], where), vec3_from(bb[1], where)};
    }
    const auto off = field<std::size_t>(ji, "point_offset", where);
    const auto cnt = field<std::size_t>(ji, "point_count", where);
    if ((off + cnt) * 3 > pts.size()) throw IoError(where + ": point range out of bounds");
    inst.points.reserve(cnt);
    for (std::size_t i = off; i < off + cnt; ++i) inst.points.emplace_back(pts[3 * i], pts[3 * i + 1], pts[3 * i + 2]);
    inst.embedding = slice(emb, field<std::size_t>(ji, "embedding_offset", where), map.embedding_dim, where);
    for (const auto& jo : require(ji, "observations", where))
      inst.observations.push_back({field<int>(jo, "frame_index", where), field<LocalId>(jo, "local_id", where),
                                   field<double>(jo, "pred_score", where)});
    map.instances.push_back(std::move(inst));
  }
  return map;
}

}  // namespace opensu
