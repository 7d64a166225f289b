#include "opensu/synthgen.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace opensu::synth {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::Matrix3d yaw_matrix(double yaw) { return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix(); }

double bounding_radius(const SynthObject& o) { return o.shape == Shape::kSphere ? o.radius : o.half.norm(); }

double footprint_radius(const SynthObject& o) {
  return o.shape == Shape::kSphere ? o.radius : o.half.head<2>().norm();
}

Vec3 round_to_float(const Vec3& p) { return p.cast<float>().cast<double>(); }

json vec3_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
Vec3 vec3_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

const std::vector<std::string>& object_vocabulary() {
  static const std::vector<std::string> v{"chair", "table", "sofa",    "lamp",  "cabinet", "bed",
                                          "plant", "monitor", "stool", "box",   "ball",    "vase"};
  return v;
}

namespace {

double intersect_box(const SynthObject& obj, const Eigen::Matrix3d& rt, const Vec3& origin, const Vec3& dir) {
  const Vec3 o = rt * (origin - obj.center);
  const Vec3 d = rt * dir;
  double tmin = -kInf, tmax = kInf;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0) {
      if (std::abs(o[a]) > obj.half[a]) return kInf;
      continue;
    }
    double t0 = (-obj.half[a] - o[a]) / d[a], t1 = (obj.half[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
  }
  if (tmin > tmax) return kInf;
  if (tmin > 0) return tmin;
  return tmax > 0 ? tmax : kInf;
}

double intersect_sphere(const SynthObject& obj, const Vec3& origin, const Vec3& dir) {
  const Vec3 oc = origin - obj.center;
  const double a = dir.squaredNorm(), b = oc.dot(dir), c = oc.squaredNorm() - obj.radius * obj.radius;
  const double disc = b * b - a * c;
  if (disc < 0) return kInf;
  const double s = std::sqrt(disc);
  const double t0 = (-b - s) / a, t1 = (-b + s) / a;
  if (t0 > 0) return t0;
  return t1 > 0 ? t1 : kInf;
}

}  // namespace

double intersect(const SynthObject& obj, const Vec3& origin, const Vec3& dir) {
  if (obj.shape == Shape::kSphere) return intersect_sphere(obj, origin, dir);
  return intersect_box(obj, yaw_matrix(obj.yaw).transpose(), origin, dir);
}

SynthScene random_scene(std::uint64_t seed, int n_objects, int n_frames, double depth_noise) {
  const auto& vocab = object_vocabulary();
  if (n_objects < 0 || n_objects > static_cast<int>(vocab.size()))
    throw InvalidArgument("random_scene: object count must be in [0, " + std::to_string(vocab.size()) + "]");
  SynthScene s;
  s.seed = seed;
  s.frames = n_frames;
  s.depth_noise = depth_noise;
  s.floor = true;

  std::mt19937_64 rng(mix(seed, 0x5CE7E));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  std::vector<std::string> names = vocab;
  std::shuffle(names.begin(), names.end(), rng);
  // A slow arc above the layout, looking down at its center.
  const double disc = 1.0 + 0.2 * n_objects;
  s.target = Vec3::Zero();
  s.orbit_radius = 0.8 * disc;
  s.orbit_height = disc + 0.5;
  s.orbit_step = 0.15;

  for (int i = 0; i < n_objects; ++i) {
    SynthObject o;
    o.name = names[i];
    if (unit(rng) < 0.5) {
      o.shape = Shape::kBox;
      o.half = {uniform(0.25, 0.45), uniform(0.25, 0.45), uniform(0.25, 0.45)};
      o.yaw = uniform(0.0, std::numbers::pi);
    } else {
      o.shape = Shape::kSphere;
      o.radius = uniform(0.25, 0.4);
    }
    const double lift = o.shape == Shape::kSphere ? o.radius : o.half.z();
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      const double r = disc * std::sqrt(unit(rng)), a = uniform(0.0, 2 * std::numbers::pi);
      o.center = {r * std::cos(a), r * std::sin(a), lift};
      placed = std::all_of(s.objects.begin(), s.objects.end(), [&](const SynthObject& other) {
        return (o.center - other.center).head<2>().norm() >= footprint_radius(o) + footprint_radius(other) + 0.3;
      });
    }
    if (!placed) throw InvalidArgument("random_scene: could not place object " + std::to_string(i));
    s.objects.push_back(o);
  }
  return s;
}

json to_json(const SynthScene& s) {
  json objects = json::array();
  for (const auto& o : s.objects) {
    json j = {{"shape", o.shape == Shape::kBox ? "box" : "sphere"}, {"name", o.name}, {"center", vec3_json(o.center)}};
    if (o.shape == Shape::kBox) {
      j["half_extents"] = vec3_json(o.half);
      j["yaw"] = o.yaw;
    } else {
      j["radius"] = o.radius;
    }
    objects.push_back(j);
  }
  const auto& k = s.intrinsics;
  json j = {{"seed", s.seed},
            {"intrinsics", {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}}},
            {"frames", s.frames},
            {"orbit",
             {{"target", vec3_json(s.target)},
              {"radius", s.orbit_radius},
              {"height", s.orbit_height},
              {"start", s.orbit_start},
              {"step", s.orbit_step}}},
            {"depth_noise", s.depth_noise},
            {"dropout", s.dropout},
            {"one_hot", s.one_hot},
            {"embedding_dim", s.embedding_dim},
            {"floor", s.floor},
            {"floor_half_extent", s.floor_half_extent},
            {"gt_spacing", s.gt_spacing},
            {"objects", objects}};
  if (!s.poses.empty()) {
    json poses = json::array();
    for (const auto& p : s.poses) {
      json m = json::array();
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) m.push_back(p.matrix(r, c));
      poses.push_back(m);
    }
    j["poses"] = poses;
  }
  return j;
}

SynthScene scene_from_json(const json& j) {
  try {
    SynthScene s;
    s.seed = j.value("seed", s.seed);
    s.frames = j.value("frames", s.frames);
    s.depth_noise = j.value("depth_noise", s.depth_noise);
    if (j.contains("object_count") && !j.contains("objects"))
      s = random_scene(s.seed, j.at("object_count").get<int>(), s.frames, s.depth_noise);
    if (j.contains("intrinsics")) {
      const auto& k = j.at("intrinsics");
      s.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                      k.at("cy").get<double>(), k.at("width").get<int>(),  k.at("height").get<int>()};
    }
    if (j.contains("orbit")) {
      const auto& o = j.at("orbit");
      if (o.contains("target")) s.target = vec3_from(o.at("target"));
      s.orbit_radius = o.value("radius", s.orbit_radius);
      s.orbit_height = o.value("height", s.orbit_height);
      s.orbit_start = o.value("start", s.orbit_start);
      s.orbit_step = o.value("step", s.orbit_step);
    }
    s.dropout = j.value("dropout", s.dropout);
    s.one_hot = j.value("one_hot", s.one_hot);
    s.embedding_dim = j.value("embedding_dim", s.embedding_dim);
    s.floor = j.value("floor", s.floor);
    s.floor_half_extent = j.value("floor_half_extent", s.floor_half_extent);
    s.gt_spacing = j.value("gt_spacing", s.gt_spacing);
    if (j.contains("objects")) {
      s.objects.clear();
      for (const auto& jo : j.at("objects")) {
        SynthObject o;
        const std::string shape = jo.at("shape").get<std::string>();
        if (shape == "box") o.shape = Shape::kBox;
        else if (shape == "sphere") o.shape = Shape::kSphere;
        else throw InvalidArgument("scene: unknown shape '" + shape + "'");
        o.name = jo.at("name").get<std::string>();
        o.center = vec3_from(jo.at("center"));
        if (jo.contains("half_extents")) o.half = vec3_from(jo.at("half_extents"));
        o.yaw = jo.value("yaw", 0.0);
        o.radius = jo.value("radius", o.radius);
        s.objects.push_back(o);
      }
    }
    if (j.contains("poses")) {
      for (const auto& jp : j.at("poses")) {
        const auto v = jp.get<std::vector<double>>();
        if (v.size() != 16) throw InvalidArgument("scene: pose must have 16 entries");
        Pose p;
        for (int r = 0; r < 4; ++r)
          for (int c = 0; c < 4; ++c) p.matrix(r, c) = v[r * 4 + c];
        s.poses.push_back(p);
      }
    }
    return s;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("scene: ") + e.what());
  }
}

Pose orbit_pose(const SynthScene& s, int frame) {
  const double step = s.orbit_step != 0 ? s.orbit_step : 2 * std::numbers::pi / std::max(1, s.frames);
  const double a = s.orbit_start + step * frame;
  const Vec3 eye{s.target.x() + s.orbit_radius * std::cos(a), s.target.y() + s.orbit_radius * std::sin(a), s.orbit_height};
  const Vec3 forward = (s.target - eye).normalized();
  const Vec3 right = forward.cross(Vec3::UnitZ()).normalized();
  const Vec3 down = forward.cross(right);
  Eigen::Matrix3d r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return Pose::from_rt(r, eye);
}

std::vector<Pose> trajectory(const SynthScene& s) {
  if (!s.poses.empty()) return s.poses;
  std::vector<Pose> out;
  for (int i = 0; i < s.frames; ++i) out.push_back(orbit_pose(s, i));
  return out;
}

std::vector<Embedding> true_embeddings(const SynthScene& s) {
  const std::size_t n = s.objects.size() + (s.floor ? 1 : 0);
  std::vector<Embedding> out;
  if (s.one_hot) {
    const int dim = static_cast<int>(std::max<std::size_t>(n, 1));
    for (std::size_t i = 0; i < n; ++i) out.push_back(Embedding::Unit(dim, static_cast<Eigen::Index>(i)));
    return out;
  }
  if (s.embedding_dim < 1) throw InvalidArgument("scene: embedding_dim must be >= 1");
  std::mt19937_64 rng(mix(s.seed, 0xE3BED));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd v(s.embedding_dim);
    for (int k = 0; k < s.embedding_dim; ++k) v[k] = normal(rng);
    out.push_back((v / v.norm()).cast<float>());
  }
  return out;
}

namespace {

bool behind_camera(const SynthScene& s, const Pose& pose) {
  const Eigen::Matrix3d rt = pose.rotation().transpose();
  for (const auto& o : s.objects) {
    const double z = (rt * (o.center - pose.translation())).z();
    if (z - bounding_radius(o) <= 0) return true;
  }
  return false;
}

FrameBundle render(const SynthScene& s, const Pose& pose, int frame_index, const std::vector<Embedding>& emb) {
  const auto& k = s.intrinsics;
  FrameBundle b;
  b.frame_index = frame_index;
  b.intrinsics = k;
  b.pose = pose;
  b.depth = DepthImage(k.width, k.height, 0.0);
  MaskImage owner(k.width, k.height, 0);  // object index + 1, floor = n + 1

  std::mt19937_64 rng(mix(s.seed, 0xF000 + static_cast<std::uint64_t>(frame_index)));
  std::normal_distribution<double> noise(0.0, s.depth_noise > 0 ? s.depth_noise : 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const Eigen::Matrix3d r = pose.rotation();
  const Vec3 origin = pose.translation();
  const auto n = static_cast<LocalId>(s.objects.size());

  // Conservative screen rectangle of each object's bounding sphere; rays
  // outside it cannot hit the object. Poses with an object behind the
  // camera never reach this point.
  struct Candidate {
    Eigen::Matrix3d rt;
    int u0, v0, u1, v1;
  };
  std::vector<Candidate> cand(n);
  for (LocalId i = 0; i < n; ++i) {
    const auto& o = s.objects[i];
    const Vec3 c = r.transpose() * (o.center - origin);
    const double rad = bounding_radius(o);
    double xlo = kInf, xhi = -kInf, ylo = kInf, yhi = -kInf;
    for (double dz : {-rad, rad})
      for (double d : {-rad, rad}) {
        const double z = c.z() + dz;
        xlo = std::min(xlo, (c.x() + d) / z);
        xhi = std::max(xhi, (c.x() + d) / z);
        ylo = std::min(ylo, (c.y() + d) / z);
        yhi = std::max(yhi, (c.y() + d) / z);
      }
    cand[i] = {yaw_matrix(o.yaw).transpose(), static_cast<int>(std::floor(k.fx * xlo + k.cx)) - 1,
               static_cast<int>(std::floor(k.fy * ylo + k.cy)) - 1, static_cast<int>(std::ceil(k.fx * xhi + k.cx)) + 1,
               static_cast<int>(std::ceil(k.fy * yhi + k.cy)) + 1};
  }

  for (int v = 0; v < k.height; ++v)
    for (int u = 0; u < k.width; ++u) {
      const Vec3 dir = r * Vec3((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      double best = kInf;
      LocalId hit = 0;
      for (LocalId i = 0; i < n; ++i) {
        const auto& cd = cand[i];
        if (u < cd.u0 || u > cd.u1 || v < cd.v0 || v > cd.v1) continue;
        const auto& o = s.objects[i];
        const double t = o.shape == Shape::kSphere ? intersect_sphere(o, origin, dir) : intersect_box(o, cd.rt, origin, dir);
        if (t < best) {
          best = t;
          hit = i + 1;
        }
      }
      if (s.floor && dir.z() < 0) {
        const double t = -origin.z() / dir.z();
        const Vec3 p = origin + t * dir;
        if (t > 0 && t < best && std::abs(p.x()) <= s.floor_half_extent && std::abs(p.y()) <= s.floor_half_extent) {
          best = t;
          hit = n + 1;
        }
      }
      if (!hit) continue;
      owner(u, v) = hit;
      double d = best;
      if (s.depth_noise > 0) d += noise(rng);
      if (s.dropout > 0 && unit(rng) < s.dropout) d = 0;
      b.depth(u, v) = d > 0 ? d : 0.0;
    }

  // Visible owners in ascending order, then local IDs shuffled across them.
  std::vector<PixelBox> boxes(n + 2, PixelBox{k.width, k.height, 0, 0});
  std::vector<char> seen(n + 2, 0);
  for (int v = 0; v < k.height; ++v)
    for (int u = 0; u < k.width; ++u) {
      const LocalId o = owner(u, v);
      if (!o) continue;
      seen[o] = 1;
      auto& bb = boxes[o];
      bb = {std::min(bb.x0, u), std::min(bb.y0, v), std::max(bb.x1, u + 1), std::max(bb.y1, v + 1)};
    }
  std::vector<LocalId> visible;
  for (LocalId o = 1; o < n + 2; ++o)
    if (seen[o]) visible.push_back(o);
  std::vector<LocalId> ids(visible.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<LocalId>(i + 1);
  std::shuffle(ids.begin(), ids.end(), rng);

  std::vector<LocalId> local_of(n + 2, 0);
  const int dim = emb.empty() ? (s.one_hot ? 1 : s.embedding_dim) : static_cast<int>(emb.front().size());
  Eigen::VectorXd global = Eigen::VectorXd::Zero(dim);
  for (std::size_t i = 0; i < visible.size(); ++i) {
    const LocalId o = visible[i];
    local_of[o] = ids[i];
    InstanceRecord rec;
    rec.local_id = ids[i];
    rec.name = o <= n ? s.objects[o - 1].name : "floor";
    rec.caption = o <= n ? "a " + rec.name + " in a scene" : "the floor of a room";
    rec.pred_score = 1.0;
    rec.bbox = boxes[o];
    rec.embedding = emb[o - 1];
    global += rec.embedding.cast<double>();
    b.instances.push_back(std::move(rec));
  }
  std::sort(b.instances.begin(), b.instances.end(),
            [](const InstanceRecord& a, const InstanceRecord& c) { return a.local_id < c.local_id; });
  if (!visible.empty()) global /= static_cast<double>(visible.size());
  b.global_embedding = global.cast<float>();

  b.mask = MaskImage(k.width, k.height, 0);
  for (std::size_t i = 0; i < owner.data.size(); ++i) b.mask.data[i] = local_of[owner.data[i]];
  return b;
}

void sample_box(const SynthObject& o, double spacing, bool skip_bottom, std::vector<Vec3>& out) {
  const Eigen::Matrix3d r = yaw_matrix(o.yaw);
  for (int axis = 0; axis < 3; ++axis)
    for (int sign : {-1, 1}) {
      if (skip_bottom && axis == 2 && sign < 0) continue;
      const int a = (axis + 1) % 3, c = (axis + 2) % 3;
      const int na = std::max(1, static_cast<int>(std::ceil(2 * o.half[a] / spacing)));
      const int nc = std::max(1, static_cast<int>(std::ceil(2 * o.half[c] / spacing)));
      for (int i = 0; i < na; ++i)
        for (int j = 0; j < nc; ++j) {
          Vec3 p;
          p[axis] = sign * o.half[axis];
          p[a] = -o.half[a] + (i + 0.5) * 2 * o.half[a] / na;
          p[c] = -o.half[c] + (j + 0.5) * 2 * o.half[c] / nc;
          out.push_back(o.center + r * p);
        }
    }
}

void sample_sphere(const SynthObject& o, double spacing, std::vector<Vec3>& out) {
  const double area = 4 * std::numbers::pi * o.radius * o.radius;
  const int count = std::max(1, static_cast<int>(std::ceil(area / (spacing * spacing))));
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / count;
    const double rho = std::sqrt(1.0 - z * z);
    const double phi = golden * i;
    out.push_back(o.center + o.radius * Vec3(rho * std::cos(phi), rho * std::sin(phi), z));
  }
}

}  // namespace

SynthOutput generate(const SynthScene& s) {
  if (!s.intrinsics.valid()) throw InvalidArgument("scene: invalid intrinsics");
  if (s.objects.size() + 2 > std::numeric_limits<LocalId>::max()) throw InvalidArgument("scene: too many objects");
  if (!(s.gt_spacing > 0)) throw InvalidArgument("scene: gt_spacing must be positive");
  const auto emb = true_embeddings(s);
  const auto poses = trajectory(s);

  SynthOutput out;
  std::vector<int> rendered;
  for (int i = 0; i < static_cast<int>(poses.size()); ++i) {
    if (!poses[i].valid()) throw InvalidArgument("scene: pose " + std::to_string(i) + " is not rigid");
    if (behind_camera(s, poses[i])) out.skipped.push_back(i);
    else rendered.push_back(i);
  }
  out.frames.resize(rendered.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < rendered.size(); ++i) out.frames[i] = render(s, poses[rendered[i]], rendered[i], emb);

  auto& gt = out.ground_truth;
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    const auto& o = s.objects[i];
    std::vector<Vec3> pts;
    if (o.shape == Shape::kBox)
      sample_box(o, s.gt_spacing, s.floor && o.center.z() - o.half.z() <= 1e-9, pts);
    else
      sample_sphere(o, s.gt_spacing, pts);
    for (const auto& p : pts) {
      gt.points.push_back(round_to_float(p));
      gt.labels.push_back(static_cast<int>(i + 1));
      gt.instances.push_back(static_cast<int>(i + 1));
    }
    gt.vocabulary[static_cast<int>(i + 1)] = o.name;
    out.labels.push_back({static_cast<int>(i + 1), o.name, emb[i]});
  }
  return out;
}

}  // namespace opensu::synth
