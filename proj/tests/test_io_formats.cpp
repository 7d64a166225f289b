#include "opensu/fusion_tracker.hpp"
#include "opensu/io_formats.hpp"
#include "support.hpp"

#include <doctest.h>

#include <nlohmann/json.hpp>

using namespace testing;

namespace {

void require_same(const FrameBundle& a, const FrameBundle& b) {
  REQUIRE(a.frame_index == b.frame_index);
  REQUIRE(a.intrinsics.fx == b.intrinsics.fx);
  REQUIRE(a.intrinsics.fy == b.intrinsics.fy);
  REQUIRE(a.intrinsics.cx == b.intrinsics.cx);
  REQUIRE(a.intrinsics.cy == b.intrinsics.cy);
  REQUIRE(a.intrinsics.width == b.intrinsics.width);
  REQUIRE(a.intrinsics.height == b.intrinsics.height);
  REQUIRE(a.pose.matrix == b.pose.matrix);
  REQUIRE(a.mask == b.mask);
  REQUIRE(a.depth.width == b.depth.width);
  for (std::size_t i = 0; i < a.depth.data.size(); ++i) {
    const double x = a.depth.data[i], y = b.depth.data[i];
    REQUIRE(((std::isnan(x) ? 0.0 : x) == y));
  }
  REQUIRE(same_embedding(a.global_embedding, b.global_embedding));
  REQUIRE(a.instances.size() == b.instances.size());
  for (std::size_t i = 0; i < a.instances.size(); ++i) {
    const auto &x = a.instances[i], &y = b.instances[i];
    REQUIRE(x.local_id == y.local_id);
    REQUIRE(x.name == y.name);
    REQUIRE(x.caption == y.caption);
    REQUIRE(x.pred_score == y.pred_score);
    REQUIRE(x.bbox == y.bbox);
    REQUIRE(same_embedding(x.embedding, y.embedding));
  }
}

FrameBundle random_bundle(std::mt19937_64& g, int frame) {
  const int w = uniform_int(g, 4, 40), h = uniform_int(g, 4, 30);
  const CameraIntrinsics k{uniform(g, 10, 900), uniform(g, 10, 900), uniform(g, 0, w - 1), uniform(g, 0, h - 1), w, h};
  std::vector<RectSpec> rects;
  for (int i = 0; i < uniform_int(g, 0, 3); ++i) {
    const int x0 = uniform_int(g, 0, w - 2), y0 = uniform_int(g, 0, h - 2);
    rects.push_back({static_cast<LocalId>(i + 1), {x0, y0, uniform_int(g, x0 + 1, w), uniform_int(g, y0 + 1, h)},
                     "thing \"" + std::to_string(i) + "\"", uniform(g, 0, 1)});
  }
  FrameBundle b = rect_bundle(frame, k, rects, 1.0, uniform_int(g, 1, 9));
  // Later rectangles may cover earlier ones completely.
  std::set<LocalId> present(b.mask.data.begin(), b.mask.data.end());
  std::erase_if(b.instances, [&](const InstanceRecord& r) { return !present.count(r.local_id); });
  const int dim = static_cast<int>(b.global_embedding.size());
  for (auto& r : b.instances) r.embedding = random_embedding(g, dim);
  b.global_embedding = random_embedding(g, dim);
  b.pose = random_pose(g);
  for (auto& d : b.depth.data) d = uniform_int(g, 0, 65535) / 1000.0;
  return b;
}

InstanceMap random_map(std::mt19937_64& g, int n, int dim) {
  InstanceMap m;
  m.embedding_dim = dim;
  m.config.scheme = FusionScheme::kGlobalMultiView;
  m.config.voxel = 0.013;
  m.config.background_names = {"wall"};
  for (int i = 0; i < n; ++i) {
    MapInstance inst;
    inst.global_id = static_cast<GlobalId>(3 * i + 2);
    for (int p = 0; p < uniform_int(g, 1, 50); ++p) inst.points.push_back(random_point(g, -5, 5).cast<float>());
    inst.name = "obj " + std::to_string(i);
    if (i % 2) inst.refined_name = "refined " + std::to_string(i);
    inst.caption = "caption with unicode é " + std::to_string(i);
    inst.embedding = random_embedding(g, dim);
    inst.observations = {{i, static_cast<LocalId>(i + 1), uniform(g, 0, 1)}, {i + 7, 2, 0.5}};
    Aabb box;
    Vec3 sum = Vec3::Zero();
    for (const auto& p : inst.points) {
      box.extend(p.cast<double>());
      sum += p.cast<double>();
    }
    inst.bbox = box;
    inst.centroid = sum / static_cast<double>(inst.points.size());
    m.instances.push_back(inst);
  }
  return m;
}

}  // namespace

TEST_SUITE("io_formats") {

TEST_CASE("little-endian codecs") {
  const std::vector<float> f{1.0f, -2.5f, 3.1415927f};
  const std::string bytes = encode_f32(f);
  CHECK(bytes.size() == 12);
  CHECK(static_cast<unsigned char>(bytes[3]) == 0x3f);
  CHECK(static_cast<unsigned char>(bytes[2]) == 0x80);
  CHECK(decode_f32(bytes) == f);
  const std::vector<std::uint16_t> u{1500, 0, 65535};
  const std::string ub = encode_u16(u);
  CHECK(static_cast<unsigned char>(ub[0]) == 0xdc);
  CHECK(static_cast<unsigned char>(ub[1]) == 0x05);
  CHECK(decode_u16(ub) == u);
  CHECK_THROWS_AS(decode_f32("abc"), IoError);
}

TEST_CASE("depth units") {
  CHECK(decode_depth_mm(1500) == 1.5);
  CHECK(encode_depth_mm(1.5) == 1500);
  CHECK(encode_depth_mm(0.0) == 0);
  CHECK(encode_depth_mm(std::numeric_limits<double>::quiet_NaN()) == 0);
  CHECK_THROWS_AS(encode_depth_mm(70.0), InvalidArgument);
}

TEST_CASE("stored 1500 mm decodes to 1.5 m") {
  TempDir tmp("depth");
  auto b = rect_bundle(0, small_camera(8, 6), {{1, {0, 0, 4, 4}}}, 1.0);
  write_frame_bundle(b, tmp.path);
  std::vector<std::uint16_t> raw(48, 1500);
  const std::string bytes = encode_u16(raw);
  write_file(tmp.path / "0" / "depth.u16", bytes);
  auto m = nlohmann::json::parse(read_file(tmp.path / "0" / "manifest.json"));
  m["checksums"]["depth"] = crc32_of(bytes);
  write_file(tmp.path / "0" / "manifest.json", m.dump());
  const FrameBundle r = read_frame_bundle(tmp.path, 0);
  for (double d : r.depth.data) CHECK(d == 1.5);
}

TEST_CASE("frame bundle round trips") {
  TempDir tmp("bundle");
  auto g = rng(61);
  for (int t = 0; t < 30; ++t) {
    const FrameBundle b = random_bundle(g, t);
    write_frame_bundle(b, tmp.path);
    require_same(b, read_frame_bundle(tmp.path, t));
  }
  auto v = list_frames(tmp.path);
  CHECK(v.size() == 30);
  CHECK(std::is_sorted(v.begin(), v.end()));
}

TEST_CASE("bundle with no instances") {
  TempDir tmp("empty");
  const FrameBundle b = rect_bundle(4, small_camera(), {});
  write_frame_bundle(b, tmp.path);
  const auto m = nlohmann::json::parse(read_file(tmp.path / "4" / "manifest.json"));
  CHECK(m["instances"].is_array());
  CHECK(m["instances"].empty());
  require_same(b, read_frame_bundle(tmp.path, 4));
}

TEST_CASE("embedding file holds (instances + 1) x dim floats") {
  TempDir tmp("emb");
  const FrameBundle b = rect_bundle(0, small_camera(), {{1, {0, 0, 5, 5}}, {2, {10, 10, 20, 20}}}, 2.0, 4);
  write_frame_bundle(b, tmp.path);
  CHECK(fs::file_size(tmp.path / "0" / "emb.f32") == (2 + 1) * 4 * 4);
}

TEST_CASE("bundle read errors") {
  TempDir tmp("err");
  const FrameBundle b = rect_bundle(0, small_camera(), {{1, {0, 0, 5, 5}}});
  write_frame_bundle(b, tmp.path);
  fs::remove(tmp.path / "0" / "depth.u16");
  try {
    read_frame_bundle(tmp.path, 0);
    FAIL("expected an error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("missing file") != std::string::npos);
  }

  write_frame_bundle(b, tmp.path);
  std::string mask = read_file(tmp.path / "0" / "mask.u16");
  mask[0] = static_cast<char>(mask[0] ^ 1);
  write_file(tmp.path / "0" / "mask.u16", mask);
  CHECK_THROWS_AS(read_frame_bundle(tmp.path, 0), IoError);

  write_frame_bundle(b, tmp.path);
  auto m = nlohmann::json::parse(read_file(tmp.path / "0" / "manifest.json"));
  m["instances"][0]["embedding_offset"] = 100;
  write_file(tmp.path / "0" / "manifest.json", m.dump());
  CHECK_THROWS_AS(read_frame_bundle(tmp.path, 0), IoError);

  auto bad = b;
  bad.mask(30, 30) = 9;
  CHECK_THROWS_AS(write_frame_bundle(bad, tmp.path), InvalidArgument);
}

TEST_CASE("map round trips") {
  TempDir tmp("map");
  auto g = rng(62);
  for (int t = 0; t < 10; ++t) {
    const InstanceMap m = random_map(g, uniform_int(g, 0, 8), uniform_int(g, 1, 16));
    const fs::path p = tmp.path / ("m" + std::to_string(t) + ".json");
    write_map(m, p);
    CHECK(read_map(p) == m);
  }
}

TEST_CASE("map layout, null refined name and empty maps") {
  TempDir tmp("layout");
  auto g = rng(63);
  const InstanceMap m = random_map(g, 2, 4);
  write_map(m, tmp.path / "out");
  CHECK(fs::exists(tmp.path / "out" / "map.json"));
  CHECK(fs::exists(tmp.path / "out" / "map_points.f32"));
  CHECK(fs::exists(tmp.path / "out" / "map_emb.f32"));
  const auto j = nlohmann::json::parse(read_file(tmp.path / "out" / "map.json"));
  CHECK(j["instances"][0]["refined_name"].is_null());
  CHECK(j["instances"][1]["refined_name"] == "refined 1");
  CHECK(read_map(tmp.path / "out") == m);

  InstanceMap empty;
  empty.embedding_dim = 4;
  write_map(empty, tmp.path / "empty.json");
  const auto e = nlohmann::json::parse(read_file(tmp.path / "empty.json"));
  CHECK(e["instances"].empty());
  CHECK(read_map(tmp.path / "empty.json") == empty);

  auto doc = j;
  doc["version"] = 99;
  write_file(tmp.path / "out" / "map.json", doc.dump());
  CHECK_THROWS_AS(read_map(tmp.path / "out"), IoError);
}

TEST_CASE("ply export") {
  const std::vector<Vec3> one{{1, 2, 3}};
  const std::vector<GlobalId> ids{7};
  const auto ply = parse_ply(export_ply(one, ids, ColorById{}));
  CHECK(ply.count == 1);
  CHECK(ply.column("x")[0] == 1.0);
  CHECK(ply.column("red")[0] == id_color(7).r);
  CHECK(ply.column("green")[0] == id_color(7).g);
  CHECK(ply.column("blue")[0] == id_color(7).b);
  CHECK(id_color(7) == id_color(7));
  CHECK_FALSE(id_color(7) == id_color(8));
  CHECK_THROWS_AS(export_ply(std::vector<Vec3>{}, std::vector<GlobalId>{}, ColorById{}), InvalidArgument);

  const std::vector<Vec3> two{{0, 0, 0}, {1, 1, 1}};
  const std::vector<GlobalId> ab{1, 2};
  const auto heat = parse_ply(export_ply(two, ab, ColorBySimilarity{{{1, 0.2}, {2, 0.9}}}));
  CHECK(heat.column("red")[0] == 0);
  CHECK(heat.column("blue")[0] == 255);
  CHECK(heat.column("red")[1] == 255);
  CHECK(heat.column("blue")[1] == 0);

  const auto flat = parse_ply(export_ply(two, ab, ColorBySimilarity{{{1, 0.4}, {2, 0.4}}}));
  CHECK(flat.column("red")[0] == flat.column("red")[1]);
  CHECK(flat.column("blue")[0] == flat.column("blue")[1]);
  CHECK(flat.column("green")[0] == flat.column("green")[1]);
}

TEST_CASE("ply export of a scene cloud and an ascii reader path") {
  ScenePointCloud scene(0.02);
  const GlobalId a = scene.issue_id();
  scene.append({0.5, 0.25, -1}, a);
  const auto ply = parse_ply(export_ply(scene, ColorById{}));
  CHECK(ply.count == 1);
  CHECK(ply.column("z")[0] == -1.0);
  const auto ascii = parse_ply(
      "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
      "end_header\n1 2 3\n4 5 6\n");
  CHECK(ascii.count == 2);
  CHECK(ascii.column("y")[1] == 5.0);
}

TEST_CASE("ground truth ply and label table round trip") {
  TempDir tmp("gt");
  GroundTruthScene gt;
  gt.points = {{0.5, 0.25, 1}, {1, 2, 3}};
  gt.labels = {1, 2};
  gt.instances = {10, 0};
  write_file(tmp.path / "gt.ply", encode_labeled_ply(gt));
  const std::vector<LabelEmbedding> labels{{1, "chair", one_hot(2, 0)}, {2, "table", one_hot(2, 1)}};
  write_label_embeddings(tmp.path / "labels.json", labels);
  const auto l = read_label_embeddings(tmp.path / "labels.json");
  REQUIRE(l.size() == 2);
  CHECK(l[1].name == "table");
  CHECK(same_embedding(l[1].embedding, labels[1].embedding));
  const auto r = read_ground_truth(tmp.path / "gt.ply", l);
  CHECK(r.points == gt.points);
  CHECK(r.labels == gt.labels);
  CHECK(r.instances == gt.instances);
  CHECK(r.vocabulary.at(1) == "chair");
}

TEST_CASE("config json round trip") {
  FusionConfig c;
  c.stride = 3;
  c.crop_levels = 2;
  c.crop_ratios = {1.0, 2.0};
  c.scheme = FusionScheme::kWeightedScale;
  c.dedup = false;
  CHECK(config_from_json(config_to_json(c)) == c);
}

TEST_CASE("embedding file") {
  TempDir tmp("q");
  auto g = rng(64);
  const Embedding e = random_embedding(g, 13);
  write_embedding_file(tmp.path / "q.f32", e);
  CHECK(fs::file_size(tmp.path / "q.f32") == 13 * 4);
  CHECK(same_embedding(read_embedding_file(tmp.path / "q.f32"), e));
}

}
