#pragma once

// Ray-cast test scenes: boxes and spheres resting on a floor, seen by an
// orbiting depth camera, with per-frame masks, detector records and
// embeddings, plus the labeled reference cloud.

#include "opensu/metrics.hpp"
#include "opensu/scene_model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace opensu::synth {

enum class Shape { kBox, kSphere };

struct SynthObject {
  Shape shape = Shape::kBox;
  std::string name;
  Vec3 center = Vec3::Zero();      // geometric center, world frame (z up)
  Vec3 half = Vec3::Constant(0.3);  // box half extents before yaw
  double yaw = 0;                   // box rotation about z
  double radius = 0.3;              // sphere
};

struct SynthScene {
  std::uint64_t seed = 1;
  CameraIntrinsics intrinsics{600.0, 600.0, 599.5, 339.5, 1200, 680};
  int frames = 24;
  Vec3 target{0, 0, 0.3};
  double orbit_radius = 3.5;
  double orbit_height = 1.8;
  double orbit_start = 0;  // radians
  double orbit_step = 0;   // radians between poses; 0 spreads `frames` over a full turn
  double depth_noise = 0;  // sigma of additive Gaussian depth noise, meters
  double dropout = 0;      // probability a pixel loses its depth
  /// Explicit camera-to-world poses; when empty, `frames` poses on a circle
  /// around `target` are used.
  std::vector<Pose> poses;
  bool one_hot = false;  // true embeddings one-hot, else fixed random unit vectors
  int embedding_dim = 16;  // random embeddings only
  bool floor = false;
  double floor_half_extent = 4.0;
  double gt_spacing = 0.01;
  std::vector<SynthObject> objects;
};

/// Names the generator draws from; none of them is a background word.
const std::vector<std::string>& object_vocabulary();

/// n objects (at most the vocabulary size) with unique names, placed on the
/// floor at least 0.3 m apart.
SynthScene random_scene(std::uint64_t seed, int n_objects, int n_frames, double depth_noise);

nlohmann::json to_json(const SynthScene& s);
/// Missing keys keep their defaults; "object_count" without "objects"
/// places that many random objects.
SynthScene scene_from_json(const nlohmann::json& j);

Pose orbit_pose(const SynthScene& s, int frame);
/// The explicit poses, or the orbit.
std::vector<Pose> trajectory(const SynthScene& s);

/// True embedding per object (pairwise distinct), then the floor's.
std::vector<Embedding> true_embeddings(const SynthScene& s);

struct SynthOutput {
  std::vector<FrameBundle> frames;
  std::vector<int> skipped;  // poses with an object behind the camera
  GroundTruthScene ground_truth;  // label = object index + 1, instance = object index + 1
  std::vector<LabelEmbedding> labels;
};

/// Deterministic for a given scene; frames render in parallel.
SynthOutput generate(const SynthScene& s);

/// Ray parameter (= camera depth for z-normalized rays) of the nearest hit,
/// or +inf. Exposed for tests.
double intersect(const SynthObject& obj, const Vec3& origin, const Vec3& dir);

}  // namespace opensu::synth
