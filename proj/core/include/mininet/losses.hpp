#pragma once

#include <string>
#include <vector>

#include "mininet/tensor.hpp"

namespace mininet {

struct LossConfig {
  double alpha = 0.85;
  double ssim_c1 = 0.01 * 0.01;
  double ssim_c2 = 0.03 * 0.03;
  double md_constant = 10.0;
  double lambda = 0.001;
  int ssim_window = 3;

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

struct ScaleLoss {
  int scale = 0;
  double photometric = 0;
  double smoothness = 0;
};

template <typename T>
struct LossReport {
  Tensor<T> total;
  Tensor<T> photometric;
  Tensor<T> md_smoothness;
  std::vector<ScaleLoss> per_scale;
  /// Detached residual behind each scale's smoothness weight.
  std::vector<Tensor<T>> smoothness_residuals;
};

/// Per-pixel SSIM with local statistics from a box filter; same shape as x.
template <typename T>
Tensor<T> ssim(const Tensor<T>& x, const Tensor<T>& y, const LossConfig& cfg = {});

/// Channel mean of |a - b|, N x 1 x H x W.
template <typename T>
Tensor<T> l1_residual(const Tensor<T>& a, const Tensor<T>& b);

/// alpha (1 - SSIM) / 2 + (1 - alpha) |a - b|, channel-averaged, N x 1 x H x W.
template <typename T>
Tensor<T> photometric_rho(const Tensor<T>& target, const Tensor<T>& warped, const LossConfig& cfg = {});

/// Per-pixel minimum over source cost maps followed by a mean. With masks,
/// invalid entries never win the minimum and pixels without any valid source
/// are excluded from the mean.
template <typename T>
Tensor<T> min_reprojection(const std::vector<Tensor<T>>& costs, const std::vector<Tensor<T>>& masks = {});

/// |dx d*| exp(-|dx I|) + |dy d*| exp(-|dy I|) with d* = d / mean(d) per image.
template <typename T>
Tensor<T> edge_aware_smoothness(const Tensor<T>& disparity, const Tensor<T>& image);

/// beta = exp(-c r / mean(r)), computed outside the tape. With a mask, the
/// mean runs over valid pixels and invalid pixels get beta = 1; mean(r) = 0
/// gives beta = 1 everywhere.
template <typename T>
Tensor<T> model_driven_weight(const Tensor<T>& residual, double c_md, const Tensor<T>& mask = {});

/// mean(beta * edge_aware_smoothness(d, I)).
template <typename T>
Tensor<T> md_smoothness_loss(const Tensor<T>& disparity, const Tensor<T>& image, const Tensor<T>& residual,
                             const LossConfig& cfg, const Tensor<T>& mask = {});

/// Everything needed to score one predicted scale, already at input resolution.
template <typename T>
struct ScaleInputs {
  Tensor<T> disparity;             // N x 1 x H x W
  Tensor<T> target;                // N x 3 x H x W, in [0, 1]
  std::vector<Tensor<T>> warped;   // one per source
  std::vector<Tensor<T>> valid;    // one per source, or empty
  /// Replaces the residual the smoothness weight is derived from. Lets a
  /// finite-difference check hold the stop-gradient weight fixed.
  Tensor<T> frozen_residual;
};

template <typename T>
LossReport<T> total_loss(const std::vector<ScaleInputs<T>>& scales, const LossConfig& cfg = {});

}  // namespace mininet
