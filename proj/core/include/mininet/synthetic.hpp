#pragma once

#include <cstdint>
#include <vector>

#include "mininet/geometry.hpp"
#include "mininet/posenet.hpp"
#include "mininet/trainer.hpp"

namespace mininet {

enum class SceneKind {
  /// Ground plane below the camera meeting a fronto-parallel back wall.
  TwoPlane,
  /// A single fronto-parallel wall.
  FrontoParallel,
};

struct SynthSceneConfig {
  std::int64_t width = 128;
  std::int64_t height = 64;
  int num_frames = 48;
  SceneKind scene = SceneKind::TwoPlane;
  /// fx = fy = focal_scale * width; the principal point is the image centre.
  double focal_scale = 0.6;
  double camera_height = 1.5;
  double wall_depth = 20.0;
  /// Mean sideways translation per frame, in scene units.
  double lateral_speed = 0.15;
  double translation_jitter = 0.02;
  /// Standard deviation of the per-frame rotation, radians per axis.
  double rotation_jitter = 0.004;
  /// Finest texture period in pixels at the reference depth of each plane.
  double texture_period_px = 10.0;
  int supersample = 3;
  /// Fraction of target pixels that must stay in view of the next frame.
  double min_in_frame = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SynthSceneConfig&) const = default;
};

/// Rendered frames with exact depth and camera poses.
struct SynthSequence {
  CameraFile camera;
  std::vector<Tensor<float>> frames;  // 1 x 3 x H x W, values in [0, 1]
  std::vector<Tensor<float>> depths;  // 1 x 1 x H x W, camera-frame z
  /// Camera-to-world transform of every frame.
  std::vector<RigidTransform> poses;

  std::size_t size() const { return frames.size(); }
  /// Transform taking points from frame t's camera to frame s's camera.
  RigidTransform relative(std::size_t t, std::size_t s) const;
  Pose6DoF relative_pose(std::size_t t, std::size_t s) const;
  /// Frames (center - 1, center, center + 1).
  template <typename T>
  Triplet<T> triplet(std::size_t center) const;
};

/// Deterministic for a given config. A step whose motion would push more
/// than 1 - min_in_frame of the pixels out of view is halved until it fits.
SynthSequence generate_synthetic_sequence(const SynthSceneConfig& cfg);

/// Fraction of pixels of a depth map that land inside the frame after moving
/// the camera by `t_to_s`.
double in_frame_fraction(const Tensor<float>& depth, const RigidTransform& t_to_s, const Intrinsics& k);

}  // namespace mininet
