#include "opensu/fusion_tracker.hpp"
#include "opensu/metrics.hpp"
#include "opensu/pipeline.hpp"
#include "opensu/synthgen.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace testing;

namespace {

struct OracleSegment {
  std::size_t frame_count = 0;
  std::vector<SegmentOverlap> overlaps;
  double ratio = 0;
};

/// Exhaustive recomputation of one integration step's overlap bookkeeping.
std::map<LocalId, OracleSegment> overlap_oracle(const std::vector<Vec3>& scene_pos, const std::vector<GlobalId>& scene_ids,
                                                const FramePointCloud& frame, double eps) {
  std::vector<Vec3> fpos;
  std::vector<LocalId> flab;
  for (auto i : voxel_first_oracle(frame.positions, eps)) {
    fpos.push_back(frame.positions[i]);
    flab.push_back(frame.labels[i]);
  }
  const auto sub = crop_oracle(scene_pos, fpos, eps);
  std::vector<Vec3> sub_pos;
  for (auto i : sub) sub_pos.push_back(scene_pos[i]);
  const auto nn = nearest_oracle(fpos, sub_pos, eps);

  std::map<GlobalId, std::size_t> total;
  for (auto i : sub) ++total[scene_ids[i]];
  std::map<LocalId, OracleSegment> out;
  std::map<LocalId, std::set<std::int64_t>> hits;
  for (std::size_t i = 0; i < fpos.size(); ++i) {
    ++out[flab[i]].frame_count;
    if (nn[i] >= 0) hits[flab[i]].insert(nn[i]);
  }
  for (auto& [label, seg] : out) {
    std::map<GlobalId, std::size_t> per_id;
    for (auto s : hits[label]) ++per_id[scene_ids[sub[s]]];
    GlobalId dom = 0;
    std::size_t best = 0;
    for (const auto& [id, n] : per_id) {
      seg.overlaps.push_back({id, n, total[id]});
      if (n > best) {
        best = n;
        dom = id;
      }
    }
    if (best > 0) seg.ratio = static_cast<double>(best) / static_cast<double>(std::min(seg.frame_count, total[dom]));
  }
  return out;
}

synth::SynthScene two_cubes(int frames) {
  synth::SynthScene s;
  s.seed = 3;
  s.intrinsics = {100, 100, 79.5, 59.5, 160, 120};
  s.frames = frames;
  s.target = {0, 0, 0.3};
  s.orbit_radius = 2.5;
  s.orbit_height = 1.5;
  s.orbit_step = 0.25;
  synth::SynthObject a, b;
  a.name = "crate";
  a.center = {-0.5, 0, 0.3};
  a.half = {0.3, 0.3, 0.3};
  b.name = "box";
  b.center = {0.5, 0.1, 0.3};
  b.half = {0.3, 0.3, 0.3};
  b.yaw = 0.4;
  s.objects = {a, b};
  return s;
}

FramePointCloud frame_of(std::vector<std::pair<Vec3, LocalId>> pts, int index = 0) {
  FramePointCloud f;
  f.frame_index = index;
  for (auto& [p, l] : pts) {
    f.positions.push_back(p);
    f.labels.push_back(l);
    ++f.counts[l];
  }
  return f;
}

FramePointCloud grid_segments(int index) {
  std::vector<std::pair<Vec3, LocalId>> pts;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) {
      pts.push_back({Vec3(0.05 * i + 0.001, 0.05 * j + 0.001, 1.0), 1});
      pts.push_back({Vec3(0.05 * i + 2.001, 0.05 * j + 0.001, 1.0), 2});
    }
  return frame_of(pts, index);
}

}  // namespace

TEST_SUITE("fusion_tracker") {

TEST_CASE("crop_scene") {
  ScenePointCloud scene(0.02);
  const std::vector<Vec3> frame{{0, 0, 0}, {1, 1, 1}};
  CHECK(crop_scene(scene, frame, 0.02).size() == 0);
  const GlobalId id = scene.issue_id();
  scene.append({0.5, 0.5, 0.5}, id);
  scene.append({11, 0.5, 0.5}, id);
  scene.append({1.02, 1.0, 1.0}, id);
  const auto sub = crop_scene(scene, frame, 0.02);
  CHECK(sub.scene_indices == std::vector<std::uint32_t>{0, 2});
}

TEST_CASE("crop_scene equals the brute-force filter") {
  auto g = rng(21);
  for (int t = 0; t < 50; ++t) {
    const double eps = uniform(g, 0.01, 0.2);
    ScenePointCloud scene(eps);
    std::vector<Vec3> all;
    const GlobalId id = scene.issue_id();
    const int n = uniform_int(g, 0, 2000);
    for (int i = 0; i < n; ++i) {
      all.push_back(random_point(g, -3, 3));
      scene.append(all.back(), id);
    }
    std::vector<Vec3> frame;
    const Vec3 c = random_point(g, -2, 2);
    const double r = uniform(g, 0.05, 1.5);
    for (int i = 0; i < 200; ++i) frame.push_back(c + random_point(g, -r, r));
    REQUIRE(crop_scene(scene, frame, eps).scene_indices == crop_oracle(all, frame, eps));
  }
}

TEST_CASE("match_points") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 20; ++i) pts.push_back({0.1 * i, 0.03 * (i % 3), 0});
  const auto m = match_points(pts, pts, 0.02);
  REQUIRE(m.size() == pts.size());
  for (std::size_t i = 0; i < m.size(); ++i) CHECK((m[i].frame_index == i && m[i].sub_index == i));

  const std::vector<Vec3> a{{0, 0, 0}}, b{{0.02, 0, 0}}, c{{0.0199, 0, 0}};
  CHECK(match_points(a, b, 0.02).empty());
  CHECK(match_points(a, c, 0.02).size() == 1);
  CHECK_THROWS_AS(match_points(a, b, 0.0), InvalidArgument);
}

TEST_CASE("match_points equals all-pairs nearest neighbour") {
  auto g = rng(22);
  for (int t = 0; t < 50; ++t) {
    const double eps = uniform(g, 0.01, 0.1);
    std::vector<Vec3> f, s;
    for (int i = 0; i < uniform_int(g, 1, 400); ++i) f.push_back(random_point(g, 0, 0.5));
    for (int i = 0; i < uniform_int(g, 1, 400); ++i) s.push_back(random_point(g, 0, 0.5));
    const auto oracle = nearest_oracle(f, s, eps);
    std::vector<PointMatch> expect;
    for (std::uint32_t i = 0; i < f.size(); ++i)
      if (oracle[i] >= 0) expect.push_back({i, static_cast<std::uint32_t>(oracle[i])});
    REQUIRE(match_points(f, s, eps) == expect);
  }
}

TEST_CASE("overlap_ratio") {
  CHECK(overlap_ratio(10, {}) == 0.0);
  const std::vector<SegmentOverlap> one{{4, 50, 80}};
  CHECK(overlap_ratio(100, one) == 0.625);
  const std::vector<SegmentOverlap> tie{{7, 30, 100}, {3, 30, 40}};
  CHECK(dominant_overlap(tie) == 1);
  CHECK(overlap_ratio(100, tie) == 0.75);
  CHECK_THROWS_AS(overlap_ratio(0, one), InvalidArgument);
}

TEST_CASE("bootstrap and self-overlap") {
  FusionConfig cfg;
  ScenePointCloud scene(cfg.voxel);
  GlobalIdTable q;
  const FramePointCloud f = grid_segments(0);
  const auto r1 = integrate_frame(scene, q, f, cfg);
  CHECK(r1.reports.size() == 2);
  CHECK(q.size() == 2);
  CHECK(scene.id_counts().size() == 2);
  for (const auto& r : r1.reports) CHECK(r.action == SegmentAction::kNewId);
  const std::size_t n = scene.size();

  const auto r2 = integrate_frame(scene, q, f, cfg);
  for (const auto& r : r2.reports) {
    CHECK(r.action == SegmentAction::kMerge);
    CHECK(r.ratio == 1.0);
    CHECK(q.at(r.assigned_id).size() == 2);
  }
  CHECK(scene.size() == n);
  CHECK(q.size() == 2);
  CHECK(q.total_observations() == 4);
}

TEST_CASE("empty frame is a no-op and mismatched voxel is rejected") {
  FusionConfig cfg;
  ScenePointCloud scene(cfg.voxel);
  GlobalIdTable q;
  CHECK(integrate_frame(scene, q, FramePointCloud{}, cfg).reports.empty());
  ScenePointCloud other(0.05);
  CHECK_THROWS_AS(integrate_frame(other, q, grid_segments(0), cfg), InvalidArgument);
}

TEST_CASE("inconsistent table raises an integrity error") {
  FusionConfig cfg;
  ScenePointCloud scene(cfg.voxel);
  GlobalIdTable q;
  integrate_frame(scene, q, grid_segments(0), cfg);
  q.erase(q.entries().begin()->first);
  CHECK_THROWS_AS(check_consistency(scene, q), IntegrityError);
  CHECK_THROWS_AS(integrate_frame(scene, q, grid_segments(1), cfg), IntegrityError);
}

TEST_CASE("ratios on a two-cube replay equal the exhaustive oracle") {
  const auto out = synth::generate(two_cubes(6));
  FusionConfig cfg;
  cfg.border_px = 2;
  ScenePointCloud scene(cfg.voxel);
  GlobalIdTable q;
  std::size_t segments = 0;
  for (auto b : out.frames) {
    const FramePointCloud f = prepare_frame(b, cfg);
    const std::vector<Vec3> pos(scene.positions().begin(), scene.positions().end());
    const std::vector<GlobalId> ids(scene.ids().begin(), scene.ids().end());
    const auto oracle = overlap_oracle(pos, ids, f, cfg.voxel);
    const auto res = integrate_frame(scene, q, f, cfg);
    REQUIRE(res.reports.size() == oracle.size());
    for (const auto& r : res.reports) {
      const auto& o = oracle.at(r.local_id);
      CHECK(r.frame_count == o.frame_count);
      CHECK(r.overlaps == o.overlaps);
      CHECK(std::abs(r.ratio - o.ratio) <= 1e-12);
      CHECK(r.ratio >= 0.0);
      CHECK(r.ratio <= 1.0);
      for (const auto& ov : r.overlaps) CHECK(ov.overlap <= r.frame_count);
    }
    segments += res.reports.size();
    CHECK_NOTHROW(check_consistency(scene, q));
    CHECK(q.total_observations() == segments);
  }
  CHECK(q.size() == 2);
}

TEST_CASE("observation pairs are disjoint across entries") {
  const auto out = synth::generate(two_cubes(5));
  FusionConfig cfg;
  cfg.border_px = 2;
  cfg.stride = 1;
  const auto res = build_map(memory_source(out.frames), cfg);
  std::set<Observation> seen;
  std::size_t total = 0;
  for (const auto& [id, obs] : res.table.entries())
    for (const auto& o : obs) {
      seen.insert(o);
      ++total;
    }
  CHECK(seen.size() == total);
}

TEST_CASE("scripted two-object scene recovers the object partition") {
  const auto out = synth::generate(two_cubes(3));
  FusionConfig cfg;
  cfg.border_px = 2;
  cfg.stride = 1;
  const auto res = build_map(memory_source(out.frames), cfg);
  CHECK(res.map.instances.size() == 2);
  const auto opts = EvalOptions{};
  const auto report = evaluate(res.map, out.ground_truth, retrieve_labels(res.map, out.labels), opts);
  REQUIRE(report.ari.has_value());
  CHECK(*report.ari == 1.0);
}

TEST_CASE("integration is deterministic") {
  const auto out = synth::generate(two_cubes(4));
  FusionConfig cfg;
  cfg.border_px = 2;
  cfg.stride = 1;
  const auto a = build_map(memory_source(out.frames), cfg);
  const auto b = build_map(memory_source(out.frames), cfg);
  CHECK(std::equal(a.scene.positions().begin(), a.scene.positions().end(), b.scene.positions().begin(),
                   b.scene.positions().end()));
  CHECK(std::equal(a.scene.ids().begin(), a.scene.ids().end(), b.scene.ids().begin(), b.scene.ids().end()));
  CHECK(a.map == b.map);
}

TEST_CASE("dedup_voxels") {
  ScenePointCloud scene(0.02);
  const GlobalId id = scene.issue_id();
  scene.append({0.1, 0.1, 0.1}, id);
  scene.append({0.1, 0.1, 0.1}, id);
  dedup_voxels(scene, 0.02);
  CHECK(scene.size() == 1);

  ScenePointCloud grid(0.02);
  const GlobalId gid = grid.issue_id();
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) grid.append({0.05 * i + 0.001, 0.05 * j + 0.001, 0.001}, gid);
  dedup_voxels(grid, 0.02);
  CHECK(grid.size() == 25);
}

TEST_CASE("dedup_voxels keeps the same survivors as the voxel oracle") {
  auto g = rng(23);
  for (int t = 0; t < 30; ++t) {
    const double eps = uniform(g, 0.01, 0.1);
    ScenePointCloud scene(eps);
    const GlobalId a = scene.issue_id(), b = scene.issue_id();
    std::vector<Vec3> pts;
    std::vector<GlobalId> ids;
    for (int i = 0; i < uniform_int(g, 1, 3000); ++i) {
      pts.push_back(random_point(g, -0.4, 0.4));
      ids.push_back(uniform_int(g, 0, 1) ? a : b);
      scene.append(pts.back(), ids.back());
    }
    dedup_voxels(scene, eps);
    const auto keep = voxel_first_oracle(pts, eps);
    REQUIRE(scene.size() == keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
      REQUIRE(scene.positions()[i] == pts[keep[i]]);
      REQUIRE(scene.ids()[i] == ids[keep[i]]);
    }
  }
}

TEST_CASE("append refuses unissued ids") {
  ScenePointCloud scene(0.02);
  CHECK_THROWS_AS(scene.append({0, 0, 0}, 1), IntegrityError);
  CHECK_THROWS_AS(scene.append({0, 0, 0}, 0), IntegrityError);
}

}
