#pragma once

#include "opensu/scene_model.hpp"

#include <map>
#include <vector>

namespace opensu {

/// Labeled world-frame points lifted from one frame.
struct FramePointCloud {
  int frame_index = 0;
  std::vector<Vec3> positions;
  std::vector<LocalId> labels;
  std::map<LocalId, std::size_t> counts;  // c_Pf per local segment

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
};

/// {0, s, 2s, ...} below n_total.
std::vector<int> sample_frames(int n_total, int stride);

/// Erodes every instance region by px pixels (Chebyshev); image edges count
/// as region boundary.
MaskImage pad_mask_borders(const MaskImage& mask, int px);

/// Pads the bundle's mask and drops records whose region vanished.
FrameBundle pad_bundle(FrameBundle bundle, int px);

/// Removes background-named and oversized instances, clearing their pixels.
FrameBundle filter_instances(FrameBundle bundle, const FusionConfig& config);

FramePointCloud backproject(const FrameBundle& bundle);

struct PixelProjection {
  double u = 0, v = 0, depth = 0;
};

/// Inverse of back-projection: world point to pixel coordinates + depth.
PixelProjection project(const Vec3& world, const CameraIntrinsics& k, const Pose& pose);

/// pad -> filter -> back-project, the per-frame work ahead of integration.
FramePointCloud prepare_frame(FrameBundle& bundle, const FusionConfig& config);

}  // namespace opensu
