#include "opensu/feature_fusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace opensu {

namespace {

void require_nonempty(std::size_t n, const char* op) {
  if (n == 0) throw InvalidArgument(std::string(op) + ": empty input list");
}

void require_uniform(std::span<const VecXd> vs, const char* op) {
  for (const auto& v : vs)
    if (v.size() != vs.front().size()) throw InvalidArgument(std::string(op) + ": dimension mismatch");
}

VecXd mean(std::span<const VecXd> vs) {
  VecXd acc = VecXd::Zero(vs.front().size());
  for (const auto& v : vs) acc += v;
  return acc / static_cast<double>(vs.size());
}

}  // namespace

double cosine(const VecXd& a, const VecXd& b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine: dimension mismatch");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw InvalidArgument("cosine: zero vector");
  return a.dot(b) / (na * nb);
}

VecXd fuse_multiscale_direct(std::span<const VecXd> crops) {
  require_nonempty(crops.size(), "fuse_multiscale_direct");
  require_uniform(crops, "fuse_multiscale_direct");
  return mean(crops);
}

VecXd fuse_multiscale_weighted(std::span<const VecXd> crops) {
  require_nonempty(crops.size(), "fuse_multiscale_weighted");
  require_uniform(crops, "fuse_multiscale_weighted");
  const VecXd& best = crops.front();
  VecXd acc = best;  // self weight is exactly 1
  for (const auto& f : crops.subspan(1)) acc += cosine(best, f) * f;
  return acc / static_cast<double>(crops.size());
}

VecXd fuse_multiview_direct(std::span<const VecXd> views) {
  require_nonempty(views.size(), "fuse_multiview_direct");
  require_uniform(views, "fuse_multiview_direct");
  return mean(views);
}

VecXd fuse_multiview_global(std::span<const ViewFeature> views) {
  require_nonempty(views.size(), "fuse_multiview_global");
  const auto dim = views.front().instance.size();
  VecXd acc = VecXd::Zero(dim);
  for (const auto& v : views) {
    if (v.instance.size() != dim || v.global.size() != dim)
      throw InvalidArgument("fuse_multiview_global: dimension mismatch");
    acc += v.instance + cosine(v.instance, v.global) * v.global;
  }
  return acc / static_cast<double>(views.size());
}

std::size_t best_fit_crop(std::span<const double> ratios) {
  if (ratios.empty()) return 0;
  for (std::size_t i = 0; i < ratios.size(); ++i)
    if (ratios[i] == 1.0) return i;
  return static_cast<std::size_t>(std::min_element(ratios.begin(), ratios.end()) - ratios.begin());
}

VecXd fuse_multiscale(FusionScheme scheme, std::span<const VecXd> crops, std::span<const double> ratios) {
  if (!uses_weighted_multiscale(scheme)) return fuse_multiscale_direct(crops);
  require_nonempty(crops.size(), "fuse_multiscale");
  if (!ratios.empty() && ratios.size() != crops.size())
    throw InvalidArgument("fuse_multiscale: one ratio per crop required");
  std::vector<VecXd> ordered(crops.begin(), crops.end());
  const std::size_t best = best_fit_crop(ratios);
  std::rotate(ordered.begin(), ordered.begin() + static_cast<std::ptrdiff_t>(best),
              ordered.begin() + static_cast<std::ptrdiff_t>(best) + 1);
  return fuse_multiscale_weighted(ordered);
}

VecXd fuse_multiview(FusionScheme scheme, std::span<const ViewFeature> views) {
  if (uses_global_multiview(scheme)) return fuse_multiview_global(views);
  std::vector<VecXd> inst;
  inst.reserve(views.size());
  for (const auto& v : views) inst.push_back(v.instance);
  return fuse_multiview_direct(inst);
}

VecXd fuse_for_scheme(FusionScheme scheme, const std::vector<std::vector<VecXd>>& view_crops,
                      std::span<const VecXd> view_globals, std::span<const double> ratios) {
  require_nonempty(view_crops.size(), "fuse_for_scheme");
  if (uses_global_multiview(scheme) && view_globals.size() != view_crops.size())
    throw InvalidArgument("fuse_for_scheme: one global vector per view required");
  std::vector<ViewFeature> views;
  views.reserve(view_crops.size());
  for (std::size_t i = 0; i < view_crops.size(); ++i) {
    ViewFeature vf;
    vf.instance = fuse_multiscale(scheme, view_crops[i], ratios);
    if (i < view_globals.size()) vf.global = view_globals[i];
    views.push_back(std::move(vf));
  }
  return fuse_multiview(scheme, views);
}

}  // namespace opensu
