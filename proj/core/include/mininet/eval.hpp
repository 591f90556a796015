#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mininet/geometry.hpp"
#include "mininet/posenet.hpp"
#include "mininet/tensor.hpp"

namespace mininet {

struct DepthEvalConfig {
  double cap_min = 1e-3;
  double cap_max = 80.0;
  bool median_scaling = true;

  static DepthEvalConfig kitti_80m() { return {}; }
  static DepthEvalConfig kitti_50m() { return {1e-3, 50.0, true}; }
  static DepthEvalConfig make3d() { return {1e-3, 70.0, true}; }

  void validate() const;
};

struct DepthMetrics {
  double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0;
  double delta1 = 0, delta2 = 0, delta3 = 0;
  /// Number of pixels that entered the averages.
  std::int64_t count = 0;
};

/// Metrics over pixels whose ground truth lies in (cap_min, cap_max) and, if
/// given, whose mask entry is non-zero. With median scaling each prediction
/// is replaced by (pred / median(pred)) * median(gt) before being clamped to
/// [cap_min, cap_max]. rmse_log uses log10. Throws EmptyEvaluation when no
/// pixel qualifies.
DepthMetrics depth_metrics(std::span<const double> pred, std::span<const double> gt, const DepthEvalConfig& cfg,
                           std::span<const std::uint8_t> mask = {});

template <typename T>
DepthMetrics depth_metrics(const Tensor<T>& pred, const Tensor<T>& gt, const DepthEvalConfig& cfg);

/// Pixel-weighted average of per-image metrics.
DepthMetrics average(const std::vector<DepthMetrics>& per_image);

std::string metrics_csv_header();
std::string metrics_csv_row(const DepthMetrics& m);

struct CropWindow {
  std::int64_t top = 0;
  std::int64_t height = 0;
};

/// Vertically centred 2:1 (width:height) window for an image of the given size.
CropWindow make3d_crop_window(std::int64_t height, std::int64_t width);
/// The same window mapped to a map with `rows` rows covering the full image height.
CropWindow proportional_crop_window(std::int64_t rows, std::int64_t image_height, std::int64_t image_width);

/// Rows [top, top + height) of the last-but-one dimension.
template <typename T>
Tensor<T> crop_rows(const Tensor<T>& x, const CropWindow& w);

/// Central 2:1 crop of a ... x H x W image.
template <typename T>
Tensor<T> make3d_crop(const Tensor<T>& image);

/// Crop of a depth map whose rows span an image of the given size.
template <typename T>
Tensor<T> make3d_crop_depth(const Tensor<T>& depth, std::int64_t image_height, std::int64_t image_width);

/// Absolute trajectory error over a 5-frame snippet.
///
/// `pred` holds the 4 consecutive relative motions, each the pose of camera
/// i+1 in camera i's frame. `gt` holds 5 camera-to-world poses. Both
/// trajectories are taken relative to their first frame, the prediction is
/// scaled by the least-squares factor sum(g.p) / sum(p.p) (1 if the
/// prediction has zero length), and the result is
/// sqrt(sum |s p - g|^2) / 5.
double ate_5frame(const std::vector<RigidTransform>& pred, const std::vector<RigidTransform>& gt);
double ate_5frame(const std::vector<Pose6DoF>& pred, const std::vector<RigidTransform>& gt);

/// The same error over translation vectors already expressed relative to the
/// first frame of the snippet.
double ate_from_positions(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt);

/// Converts a predicted T_{t->t+1} (target-to-source) into the pose of camera
/// t+1 in camera t's frame.
RigidTransform next_camera_in_current(const Pose6DoF& t_to_next);

struct MeanStd {
  double mean = 0;
  double std = 0;
};

/// Population mean and standard deviation.
MeanStd mean_std(std::span<const double> values);
/// "0.0123 ± 0.0045".
std::string format_mean_std(const MeanStd& m, int precision = 4);

}  // namespace mininet
