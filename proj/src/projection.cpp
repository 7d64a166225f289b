#include "opensu/projection.hpp"

#include "opensu/kernels.hpp"

#include <algorithm>
#include <set>

namespace opensu {

std::vector<int> sample_frames(int n_total, int stride) {
  if (n_total < 1) throw InvalidArgument("sample_frames: n_total must be >= 1");
  if (stride < 1) throw InvalidArgument("sample_frames: stride must be >= 1");
  std::vector<int> out;
  for (int i = 0; i < n_total; i += stride) out.push_back(i);
  return out;
}

MaskImage pad_mask_borders(const MaskImage& mask, int px) {
  if (px < 0) throw InvalidArgument("pad_mask_borders: px must be >= 0");
  return kernels::omp::erode_labels(mask, px);
}

namespace {

void drop_records_without_pixels(FrameBundle& b) {
  std::set<LocalId> present(b.mask.data.begin(), b.mask.data.end());
  std::erase_if(b.instances, [&](const InstanceRecord& r) { return !present.count(r.local_id); });
}

}  // namespace

FrameBundle pad_bundle(FrameBundle bundle, int px) {
  bundle.mask = pad_mask_borders(bundle.mask, px);
  drop_records_without_pixels(bundle);
  return bundle;
}

FrameBundle filter_instances(FrameBundle bundle, const FusionConfig& config) {
  std::set<LocalId> removed;
  for (const auto& r : bundle.instances)
    if (is_background_name(r.name, config.background_names) ||
        area_fraction(r, bundle.intrinsics) > config.bbox_area_max)
      removed.insert(r.local_id);
  if (removed.empty()) return bundle;
  std::erase_if(bundle.instances, [&](const InstanceRecord& r) { return removed.count(r.local_id) != 0; });
  for (auto& px : bundle.mask.data)
    if (px != 0 && removed.count(px)) px = 0;
  return bundle;
}

FramePointCloud backproject(const FrameBundle& bundle) {
  auto lifted = kernels::omp::backproject(bundle.depth, bundle.mask, bundle.intrinsics, bundle.pose);
  FramePointCloud out;
  out.frame_index = bundle.frame_index;
  out.positions = std::move(lifted.positions);
  out.labels = std::move(lifted.labels);
  for (LocalId l : out.labels) ++out.counts[l];
  return out;
}

PixelProjection project(const Vec3& world, const CameraIntrinsics& k, const Pose& pose) {
  const Eigen::Matrix3d r = pose.rotation();
  const Vec3 cam = r.transpose() * (world - pose.translation());
  return {k.fx * cam.x() / cam.z() + k.cx, k.fy * cam.y() / cam.z() + k.cy, cam.z()};
}

FramePointCloud prepare_frame(FrameBundle& bundle, const FusionConfig& config) {
  bundle = filter_instances(pad_bundle(std::move(bundle), config.border_px), config);
  return backproject(bundle);
}

}  // namespace opensu
