#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mininet/tensor.hpp"

namespace mininet {

using Mat3 = std::array<std::array<double, 3>, 3>;
using Vec3 = std::array<double, 3>;

/// Pinhole intrinsics in pixels. Pixel (u, v) sits at integer coordinates.
struct Intrinsics {
  double fx = 1, fy = 1, cx = 0, cy = 0;

  void validate() const;
  /// Intrinsics for the same camera after resizing (half-pixel-centre
  /// convention, matching bilinear_resize).
  Intrinsics resized(std::int64_t from_w, std::int64_t from_h, std::int64_t to_w, std::int64_t to_h) const;
  /// Intrinsics after mirroring an image of the given width.
  Intrinsics flipped(std::int64_t width) const { return {fx, fy, static_cast<double>(width - 1) - cx, cy}; }
};

/// Intrinsics together with the resolution they were calibrated for.
struct CameraFile {
  Intrinsics k;
  std::int64_t width = 0;
  std::int64_t height = 0;
};

/// Reads "fx fy cx cy" followed by "width height".
CameraFile read_intrinsics(const std::string& path);
void write_intrinsics(const std::string& path, const CameraFile& cam);

/// 4x4 homogeneous rigid transform, row-major.
struct RigidTransform {
  std::array<std::array<double, 4>, 4> m{{{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}}};

  static RigidTransform identity() { return {}; }
  static RigidTransform from_rt(const Mat3& r, const Vec3& t);
  Mat3 rotation() const;
  Vec3 translation() const;
  RigidTransform operator*(const RigidTransform& o) const;
  RigidTransform inverse() const;
  Vec3 apply(const Vec3& p) const;
};

struct DepthConstants {
  double a = 10.0;
  double b = 0.01;
};

/// Rotation matrix of an axis-angle vector.
Mat3 rodrigues(const Vec3& omega);
/// dR/d(omega_k) for k = 0, 1, 2; exact at and near omega = 0.
std::array<Mat3, 3> rodrigues_jacobian(const Vec3& omega);
/// Inverse of rodrigues for rotation matrices.
Vec3 rotation_log(const Mat3& r);

/// D = 1 / (a P + b), differentiable.
template <typename T>
Tensor<T> disp_to_depth(const Tensor<T>& disparity, const DepthConstants& k = {});

template <typename T>
struct Projection {
  /// N x 2 x H x W continuous source coordinates (u, v).
  Tensor<T> coords;
  /// N x 1 x H x W, 1 where the point lands in front of the source camera.
  Tensor<T> in_front;
};

/// p' = K T D(p) K^-1 p for every target pixel p. `pose` is N x 6 (axis-angle
/// rotation, translation); differentiable w.r.t. depth and pose.
template <typename T>
Projection<T> project(const Tensor<T>& depth, const Tensor<T>& pose, const Intrinsics& k);

/// Same projection with fixed transforms (one per batch element, or one for
/// all); differentiable w.r.t. depth only.
template <typename T>
Projection<T> project(const Tensor<T>& depth, const std::vector<RigidTransform>& transforms, const Intrinsics& k);

template <typename T>
struct WarpResult {
  Tensor<T> image;  // N x C x H x W
  Tensor<T> valid;  // N x 1 x H x W, 0/1
};

/// Bilinear sampling of `source` at `coords` (N x 2 x H x W). Coordinates
/// outside the frame are clamped to the border and flagged invalid.
/// Differentiable w.r.t. both the image and the coordinates.
template <typename T>
WarpResult<T> inverse_warp(const Tensor<T>& source, const Tensor<T>& coords);

/// project() followed by inverse_warp(); the mask combines both validity tests.
template <typename T>
WarpResult<T> synthesize_view(const Tensor<T>& source, const Tensor<T>& depth, const Tensor<T>& pose,
                              const Intrinsics& k);

/// Integer pixel grid as coordinates, N x 2 x H x W.
template <typename T>
Tensor<T> pixel_grid(std::int64_t n, std::int64_t h, std::int64_t w);

}  // namespace mininet
