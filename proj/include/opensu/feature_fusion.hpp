#pragma once

#include "opensu/scene_model.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace opensu {

using VecXd = Eigen::VectorXd;

/// a.b / (|a| |b|). Throws on zero vectors or dimension mismatch.
double cosine(const VecXd& a, const VecXd& b);

/// Mean of the per-crop vectors.
VecXd fuse_multiscale_direct(std::span<const VecXd> crops);

/// (1/k) sum_i cos(f_1, f_i) f_i with f_1 = crops[0], the best-fit crop.
VecXd fuse_multiscale_weighted(std::span<const VecXd> crops);

/// Mean of the per-view vectors.
VecXd fuse_multiview_direct(std::span<const VecXd> views);

struct ViewFeature {
  VecXd instance;  // f_MS of the view
  VecXd global;    // f_G of the same image
};

/// (1/m) sum_i [f_MS,i + cos(f_MS,i, f_G,i) f_G,i].
VecXd fuse_multiview_global(std::span<const ViewFeature> views);

/// Position of the best-fit crop: ratio 1.0 if present, else the smallest.
std::size_t best_fit_crop(std::span<const double> ratios);

/// Multi-scale step of a scheme for one view. `crops` are ordered like
/// `ratios`; the weighted scheme moves the best-fit crop to the front.
VecXd fuse_multiscale(FusionScheme scheme, std::span<const VecXd> crops, std::span<const double> ratios);

/// Multi-view step of a scheme over already multi-scale-fused views.
VecXd fuse_multiview(FusionScheme scheme, std::span<const ViewFeature> views);

/// Full chain: multi-scale per view, then multi-view.
VecXd fuse_for_scheme(FusionScheme scheme, const std::vector<std::vector<VecXd>>& view_crops,
                      std::span<const VecXd> view_globals, std::span<const double> ratios);

inline VecXd to_double(const Embedding& e) { return e.cast<double>(); }
inline Embedding to_float(const VecXd& v) { return v.cast<float>(); }

}  // namespace opensu
