#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mininet/depthnet.hpp"
#include "mininet/geometry.hpp"
#include "mininet/losses.hpp"
#include "mininet/optim.hpp"
#include "mininet/posenet.hpp"

namespace mininet {

struct TrainConfig {
  std::int64_t batch_size = 6;
  int epochs = 40;
  /// Optional cap on optimizer steps; 0 runs every epoch to completion.
  std::int64_t max_steps = 0;
  double lr0 = 1e-4;
  /// The learning rate halves after this many epochs.
  int lr_decay_epochs = 30;
  std::uint64_t seed = 0;
  bool augment = true;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Three consecutive frames; the middle one is the target. Frames are
/// N x 3 x H x W with values in [0, 1], and K applies to every batch element.
template <typename T>
struct Triplet {
  Tensor<T> prev, target, next;
  Intrinsics k;

  void validate() const;
};

/// Stacks single-sample triplets along the batch dimension; intrinsics must match.
template <typename T>
Triplet<T> stack_triplets(const std::vector<Triplet<T>>& items);

/// One draw of the augmentation parameters.
struct AugmentParams {
  bool flip = false;
  bool jitter = false;
  double brightness = 1, contrast = 1, saturation = 1;
  /// Hue shift as a fraction of the colour wheel.
  double hue_shift = 0;
};

/// Flip with probability 1/2; jitter with probability 1/2 using factors from
/// [0.8, 1.2] (brightness, contrast, saturation) and a hue factor from
/// [0.9, 1.1], applied as a shift of (factor - 1) around the wheel.
AugmentParams sample_augment(Rng& rng);

/// Applies the same parameters to all three frames. Colour ops run in the
/// order brightness, contrast, saturation, hue, and the result is clamped to
/// [0, 1] once at the end. A flip also mirrors cx.
template <typename T>
Triplet<T> apply_augment(const Triplet<T>& t, const AugmentParams& p);

template <typename T>
Triplet<T> augment(const Triplet<T>& t, Rng& rng) {
  return apply_augment(t, sample_augment(rng));
}

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& x);

/// Colour jitter on an N x 3 x H x W tensor, clamped to [0, 1].
template <typename T>
Tensor<T> color_jitter(const Tensor<T>& x, const AugmentParams& p);

/// (x - 0.45) / 0.225.
template <typename T>
Tensor<T> normalize(const Tensor<T>& x);

double lr_at_epoch(int epoch, const TrainConfig& cfg);

/// Builds the full objective for one triplet on `tape` (which may be null):
/// depth for the target, poses target->prev and target->next, one warp per
/// source and scale, then total_loss. `frozen_residuals`, when given, fixes
/// the smoothness weight of every scale (see ScaleInputs::frozen_residual).
template <typename T>
LossReport<T> compute_loss(const DepthNet<T>& depth, PoseNet<T>& pose, const Triplet<T>& t, Tape<T>* tape,
                           const LossConfig& loss_cfg, bool training = true,
                           const std::vector<Tensor<T>>* frozen_residuals = nullptr);

/// Owns optimizer state for a depth/pose network pair.
template <typename T>
class Trainer {
 public:
  Trainer(DepthNet<T>& depth, PoseNet<T>& pose, TrainConfig cfg, LossConfig loss_cfg = {});

  /// Forward, backward and one Adam step over all trainable parameters at
  /// learning rate `lr`. The returned report holds detached values. A
  /// non-finite loss or gradient throws NonFiniteError before any parameter
  /// changes.
  LossReport<T> step(const Triplet<T>& t, double lr);

  std::int64_t steps_taken() const { return state_.step; }
  const TrainConfig& config() const { return cfg_; }
  const LossConfig& loss_config() const { return loss_cfg_; }

 private:
  DepthNet<T>& depth_;
  PoseNet<T>& pose_;
  TrainConfig cfg_;
  LossConfig loss_cfg_;
  AdamState<T> state_;
};

template <typename T>
LossReport<T> train_step(Trainer<T>& trainer, const Triplet<T>& t, double lr) {
  return trainer.step(t, lr);
}

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace mininet
