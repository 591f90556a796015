#include "mininet/posenet.hpp"

#include <cmath>

namespace mininet {

std::int64_t PoseNetConfig::width(std::int64_t full) const {
  if (!(width_multiplier > 0)) throw ConfigError("PoseNet width multiplier must be positive");
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::lround(static_cast<double>(full) * width_multiplier)));
}

template <typename T>
PoseNet<T>::PoseNet(PoseNetConfig cfg, Rng& rng) : cfg_(cfg) {
  const auto c1 = cfg.width(64);
  // Six input channels: target and source RGB stacked.
  stem_ = Conv2d<T>(6, c1, 7, {2, 3, 1}, false, rng);
  stem_bn_ = BatchNorm2d<T>(c1);
  std::int64_t in = c1;
  const std::int64_t stage_widths[4] = {cfg.width(64), cfg.width(128), cfg.width(256), cfg.width(512)};
  for (int stage = 0; stage < 4; ++stage) {
    for (int i = 0; i < 2; ++i) {
      const std::int64_t out = stage_widths[stage];
      const int stride = (stage > 0 && i == 0) ? 2 : 1;
      BasicBlock b;
      b.conv1 = Conv2d<T>(in, out, 3, {stride, 1, 1}, false, rng);
      b.bn1 = BatchNorm2d<T>(out);
      b.conv2 = Conv2d<T>(out, out, 3, {1, 1, 1}, false, rng);
      b.bn2 = BatchNorm2d<T>(out);
      if (stride != 1 || in != out) {
        b.has_downsample = true;
        b.down = Conv2d<T>(in, out, 1, {stride, 0, 1}, false, rng);
        b.down_bn = BatchNorm2d<T>(out);
      }
      blocks_.push_back(std::move(b));
      in = out;
    }
  }
  const auto hw = cfg.width(256);
  head_.emplace_back(in, hw, 3, Conv2dParams{1, 1, 1}, true, rng);
  head_.emplace_back(hw, hw, 3, Conv2dParams{1, 1, 1}, true, rng);
  head_.emplace_back(hw, hw, 3, Conv2dParams{1, 1, 1}, true, rng);
  head_.emplace_back(hw, 6, 3, Conv2dParams{1, 1, 1}, true, rng);
}

template <typename T>
Tensor<T> PoseNet<T>::block_forward(BasicBlock& b, const Tensor<T>& x, Tape<T>* tape, bool training) {
  auto h = relu(b.bn1.forward(b.conv1.forward(x, tape), tape, training));
  h = b.bn2.forward(b.conv2.forward(h, tape), tape, training);
  auto shortcut = b.has_downsample ? b.down_bn.forward(b.down.forward(x, tape), tape, training) : x;
  return relu(add(h, shortcut));
}

template <typename T>
Tensor<T> PoseNet<T>::raw_output(const Tensor<T>& target, const Tensor<T>& source, Tape<T>* tape, bool training) {
  if (target.shape() != source.shape() || target.rank() != 4 || target.dim(1) != 3) {
    throw InvalidShape("PoseNet expects two N x 3 x H x W frames of equal shape, got " + to_string(target.shape()) +
                       " and " + to_string(source.shape()));
  }
  auto h = concat_channels<T>({target, source});
  h = relu(stem_bn_.forward(stem_.forward(h, tape), tape, training));
  h = max_pool2d(h, 3, 2, 1);
  for (auto& b : blocks_) h = block_forward(b, h, tape, training);
  for (std::size_t i = 0; i < head_.size(); ++i) {
    h = head_[i].forward(h, tape);
    if (i + 1 < head_.size()) h = relu(h);
  }
  return global_avg_pool(h);
}

template <typename T>
Tensor<T> PoseNet<T>::forward(const Tensor<T>& target, const Tensor<T>& source, Tape<T>* tape, bool training) {
  return scalar_mul(raw_output(target, source, tape, training), static_cast<T>(cfg_.output_scale));
}

template <typename T>
ParamList<T> PoseNet<T>::parameters() {
  ParamList<T> out;
  stem_.collect(out, "pose.conv1");
  stem_bn_.collect(out, "pose.bn1");
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    auto& b = blocks_[i];
    const std::string p = "pose.layer" + std::to_string(i / 2 + 1) + "." + std::to_string(i % 2);
    b.conv1.collect(out, p + ".conv1");
    b.bn1.collect(out, p + ".bn1");
    b.conv2.collect(out, p + ".conv2");
    b.bn2.collect(out, p + ".bn2");
    if (b.has_downsample) {
      b.down.collect(out, p + ".downsample.conv");
      b.down_bn.collect(out, p + ".downsample.bn");
    }
  }
  for (std::size_t i = 0; i < head_.size(); ++i) head_[i].collect(out, "pose.head" + std::to_string(i));
  return out;
}

RigidTransform pose_to_matrix(const Pose6DoF& p) {
  RigidTransform out;
  const auto r = rodrigues(p.rotation);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out.m[i][j] = r[i][j];
    out.m[i][3] = p.translation[static_cast<std::size_t>(i)];
  }
  return out;
}

template <typename T>
Pose6DoF pose_from_row(const Tensor<T>& poses, std::int64_t row) {
  if (poses.rank() != 2 || poses.dim(1) != 6 || row < 0 || row >= poses.dim(0)) {
    throw InvalidShape("pose_from_row: expected N x 6 poses, got " + to_string(poses.shape()));
  }
  Pose6DoF p;
  for (std::size_t i = 0; i < 3; ++i) {
    p.rotation[i] = static_cast<double>(poses[row * 6 + static_cast<std::int64_t>(i)]);
    p.translation[i] = static_cast<double>(poses[row * 6 + 3 + static_cast<std::int64_t>(i)]);
  }
  return p;
}

template class PoseNet<float>;
template class PoseNet<double>;
template Pose6DoF pose_from_row(const Tensor<float>&, std::int64_t);
template Pose6DoF pose_from_row(const Tensor<double>&, std::int64_t);

}  // namespace mininet
