#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mininet/geometry.hpp"
#include "mininet/layers.hpp"

namespace mininet {

/// Axis-angle rotation (radians) and translation of T_{t->s}.
struct Pose6DoF {
  std::array<double, 3> rotation{};
  std::array<double, 3> translation{};
};

struct PoseNetConfig {
  /// 1.0 gives the full ResNet-18 widths (64/128/256/512, head 256).
  double width_multiplier = 1.0;
  /// Multiplier applied to the pooled head output.
  double output_scale = 0.01;

  std::int64_t width(std::int64_t full) const;
  bool operator==(const PoseNetConfig&) const = default;
};

/// ResNet-18-topology encoder over a channel-concatenated (target, source)
/// pair followed by four 3x3 convolutions (ReLU on the first three) and a
/// global average pool. Batch norm lives only in the encoder.
template <typename T>
class PoseNet {
 public:
  PoseNet(PoseNetConfig cfg, Rng& rng);

  const PoseNetConfig& config() const { return cfg_; }

  /// Scaled pose vectors, shape N x 6: (rx, ry, rz, tx, ty, tz).
  Tensor<T> forward(const Tensor<T>& target, const Tensor<T>& source, Tape<T>* tape, bool training);
  /// Unscaled pooled head output, N x 6.
  Tensor<T> raw_output(const Tensor<T>& target, const Tensor<T>& source, Tape<T>* tape, bool training);

  ParamList<T> parameters();
  std::int64_t parameter_count() { return trainable_count(parameters()); }

  /// The last head convolution, exposed for zero-initialisation in tests.
  Conv2d<T>& final_conv() { return head_.back(); }

 private:
  struct BasicBlock {
    Conv2d<T> conv1, conv2;
    BatchNorm2d<T> bn1, bn2;
    bool has_downsample = false;
    Conv2d<T> down;
    BatchNorm2d<T> down_bn;
  };

  Tensor<T> block_forward(BasicBlock& b, const Tensor<T>& x, Tape<T>* tape, bool training);

  PoseNetConfig cfg_;
  Conv2d<T> stem_;
  BatchNorm2d<T> stem_bn_;
  std::vector<BasicBlock> blocks_;
  std::vector<Conv2d<T>> head_;
};

/// Rodrigues rotation plus translation as a homogeneous 4x4 [R|t; 0 1].
RigidTransform pose_to_matrix(const Pose6DoF& p);

/// Splits an N x 6 pose tensor row into a Pose6DoF.
template <typename T>
Pose6DoF pose_from_row(const Tensor<T>& poses, std::int64_t row);

extern template class PoseNet<float>;
extern template class PoseNet<double>;

}  // namespace mininet
