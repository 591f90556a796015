#pragma once

#include <algorithm>
#include <cstdint>
#include <string>

#include "mininet/layers.hpp"

// Reusable DepthNet building blocks: the squeeze-and-excitation gate, the
// inverted residual bottleneck of the recurrent encoder, the residual
// depthwise-separable convolution and the decoder's upsample block. Every
// block exposes a closed-form parameter count used by the profiler.

namespace mininet {

struct SEBlockConfig {
  std::int64_t channels = 0;
  int reduction = 16;

  /// Bottleneck width floor(C / r), never below 1.
  std::int64_t hidden() const { return std::max<std::int64_t>(1, channels / reduction); }
};

/// Global pool -> FC(C -> C/r) -> ReLU -> FC(C/r -> C) -> sigmoid -> scale.
template <typename T>
class SEBlock {
 public:
  SEBlock() = default;
  SEBlock(SEBlockConfig cfg, Rng& rng)
      : cfg_(cfg), squeeze_(cfg.channels, cfg.hidden(), rng), excite_(cfg.hidden(), cfg.channels, rng) {}

  Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) const {
    if (x.rank() != 4 || x.dim(1) != cfg_.channels) {
      throw InvalidShape("SE block expects " + std::to_string(cfg_.channels) + " channels, got " +
                         to_string(x.shape()));
    }
    return scale_channels(x, gate(x, tape));
  }

  /// Per-channel gate in (0,1), shape N x C.
  Tensor<T> gate(const Tensor<T>& x, Tape<T>* tape) const {
    auto pooled = global_avg_pool(x);
    return sigmoid(excite_.forward(relu(squeeze_.forward(pooled, tape)), tape));
  }

  void collect(ParamList<T>& out, const std::string& prefix) {
    squeeze_.collect(out, prefix + ".fc1");
    excite_.collect(out, prefix + ".fc2");
  }

  const SEBlockConfig& config() const { return cfg_; }
  Linear<T>& squeeze() { return squeeze_; }
  Linear<T>& excite() { return excite_; }

  static std::int64_t param_count(const SEBlockConfig& c) {
    return Linear<T>::param_count(c.channels, c.hidden()) + Linear<T>::param_count(c.hidden(), c.channels);
  }

 private:
  SEBlockConfig cfg_;
  Linear<T> squeeze_;
  Linear<T> excite_;
};

struct InvertedResidualConfig {
  std::int64_t channels = 0;  // input == output
  int expansion = 2;
  int stride = 1;
  int reduction = 16;

  std::int64_t hidden() const { return channels * expansion; }
  SEBlockConfig se() const { return {hidden(), reduction}; }
  bool has_shortcut() const { return stride == 1; }
};

/// 1x1 expand + ReLU6 -> 3x3 depthwise (stride s) + ReLU6 -> SE -> linear 1x1
/// projection, plus identity shortcut at stride 1.
template <typename T>
class InvertedResidual {
 public:
  InvertedResidual() = default;
  InvertedResidual(InvertedResidualConfig cfg, Rng& rng)
      : cfg_(cfg),
        expand_(cfg.channels, cfg.hidden(), 1, {1, 0, 1}, true, rng),
        depthwise_(cfg.hidden(), cfg.hidden(), 3, {cfg.stride, 1, static_cast<int>(cfg.hidden())}, true, rng),
        se_(cfg.se(), rng),
        project_(cfg.hidden(), cfg.channels, 1, {1, 0, 1}, true, rng) {
    if (cfg.stride != 1 && cfg.stride != 2) throw ConfigError("inverted residual stride must be 1 or 2");
  }

  Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) const {
    if (x.rank() != 4 || x.dim(1) != cfg_.channels) {
      throw InvalidShape("inverted residual expects " + std::to_string(cfg_.channels) + " channels, got " +
                         to_string(x.shape()));
    }
    auto h = relu6(expand_.forward(x, tape));
    h = relu6(depthwise_.forward(h, tape));
    h = se_.forward(h, tape);
    h = project_.forward(h, tape);
    return cfg_.has_shortcut() ? add(h, x) : h;
  }

  void collect(ParamList<T>& out, const std::string& prefix) {
    expand_.collect(out, prefix + ".expand");
    depthwise_.collect(out, prefix + ".dw");
    se_.collect(out, prefix + ".se");
    project_.collect(out, prefix + ".project");
  }

  const InvertedResidualConfig& config() const { return cfg_; }

  static std::int64_t param_count(const InvertedResidualConfig& c) {
    const auto hid = c.hidden();
    return Conv2d<T>::param_count(c.channels, hid, 1, 1, true) + Conv2d<T>::param_count(hid, hid, 3, hid, true) +
           SEBlock<T>::param_count(c.se()) + Conv2d<T>::param_count(hid, c.channels, 1, 1, true);
  }

 private:
  InvertedResidualConfig cfg_;
  Conv2d<T> expand_;
  Conv2d<T> depthwise_;
  SEBlock<T> se_;
  Conv2d<T> project_;
};

struct ResidualDSConvConfig {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  int stride = 1;
  /// Disparity head: no ReLU after the point-wise conv (the caller applies sigmoid).
  bool head = false;
  /// false selects the "standard convolution" ablation: one dense 3x3 conv,
  /// no shortcut.
  bool lightweight = true;

  bool has_shortcut() const { return lightweight && in_channels == out_channels; }
};

/// 3x3 depthwise -> 1x1 point-wise -> ReLU (except heads), with an identity
/// shortcut when input and output widths agree.
template <typename T>
class ResidualDSConv {
 public:
  ResidualDSConv() = default;
  ResidualDSConv(ResidualDSConvConfig cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.stride != 1) throw ConfigError("residual DSconv blocks only support stride 1");
    if (cfg.lightweight) {
      depthwise_ = Conv2d<T>(cfg.in_channels, cfg.in_channels, 3, {1, 1, static_cast<int>(cfg.in_channels)}, true,
                             rng);
      pointwise_ = Conv2d<T>(cfg.in_channels, cfg.out_channels, 1, {1, 0, 1}, true, rng);
    } else {
      pointwise_ = Conv2d<T>(cfg.in_channels, cfg.out_channels, 3, {1, 1, 1}, true, rng);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) const {
    if (x.rank() != 4 || x.dim(1) != cfg_.in_channels) {
      throw InvalidShape("residual DSconv expects " + std::to_string(cfg_.in_channels) + " channels, got " +
                         to_string(x.shape()));
    }
    auto h = cfg_.lightweight ? pointwise_.forward(depthwise_.forward(x, tape), tape) : pointwise_.forward(x, tape);
    if (!cfg_.head) h = relu(h);
    return cfg_.has_shortcut() ? add(h, x) : h;
  }

  void collect(ParamList<T>& out, const std::string& prefix) {
    if (cfg_.lightweight) {
      depthwise_.collect(out, prefix + ".dw");
      pointwise_.collect(out, prefix + ".pw");
    } else {
      pointwise_.collect(out, prefix + ".conv");
    }
  }

  const ResidualDSConvConfig& config() const { return cfg_; }

  static std::int64_t param_count(const ResidualDSConvConfig& c) {
    if (!c.lightweight) return Conv2d<T>::param_count(c.in_channels, c.out_channels, 3, 1, true);
    return Conv2d<T>::param_count(c.in_channels, c.in_channels, 3, static_cast<int>(c.in_channels), true) +
           Conv2d<T>::param_count(c.in_channels, c.out_channels, 1, 1, true);
  }

 private:
  ResidualDSConvConfig cfg_;
  Conv2d<T> depthwise_;
  Conv2d<T> pointwise_;
};

struct UpsampleBlockConfig {
  std::int64_t channels = 0;
  bool has_skip = true;
  bool emits_disparity = true;
  bool lightweight = true;

  ResidualDSConvConfig first() const { return {channels, channels, 1, false, lightweight}; }
  ResidualDSConvConfig second() const { return {has_skip ? 2 * channels : channels, channels, 1, false, lightweight}; }
  ResidualDSConvConfig head() const { return {channels, 1, 1, true, lightweight}; }
};

template <typename T>
struct UpsampleOutput {
  Tensor<T> features;
  Tensor<T> disparity;  // empty unless the block emits disparity
};

/// DSconv(c->c) -> nearest x2 -> [concat skip] -> DSconv(2c|c -> c), plus an
/// optional sigmoid(DSconv(c->1)) disparity head on the result.
template <typename T>
class UpsampleBlock {
 public:
  UpsampleBlock() = default;
  UpsampleBlock(UpsampleBlockConfig cfg, Rng& rng) : cfg_(cfg), first_(cfg.first(), rng), second_(cfg.second(), rng) {
    if (cfg.emits_disparity) head_ = ResidualDSConv<T>(cfg.head(), rng);
  }

  UpsampleOutput<T> forward(const Tensor<T>& x, const Tensor<T>* skip, Tape<T>* tape) const {
    if ((skip != nullptr) != cfg_.has_skip) {
      throw InvalidShape(cfg_.has_skip ? "upsample block requires a skip input" : "upsample block takes no skip input");
    }
    auto h = nearest_upsample2x(first_.forward(x, tape));
    if (skip) {
      if (skip->rank() != 4 || skip->dim(0) != h.dim(0) || skip->dim(1) != cfg_.channels ||
          skip->dim(2) != h.dim(2) || skip->dim(3) != h.dim(3)) {
        throw InvalidShape("upsample block skip " + to_string(skip->shape()) + " does not match upsampled " +
                           to_string(h.shape()));
      }
      h = concat_channels<T>({h, *skip});
    }
    UpsampleOutput<T> out;
    out.features = second_.forward(h, tape);
    if (cfg_.emits_disparity) out.disparity = sigmoid(head_.forward(out.features, tape));
    return out;
  }

  void collect(ParamList<T>& out, const std::string& prefix) {
    first_.collect(out, prefix + ".ds1");
    second_.collect(out, prefix + ".ds2");
    if (cfg_.emits_disparity) head_.collect(out, prefix + ".head");
  }

  const UpsampleBlockConfig& config() const { return cfg_; }

  static std::int64_t param_count(const UpsampleBlockConfig& c) {
    return ResidualDSConv<T>::param_count(c.first()) + ResidualDSConv<T>::param_count(c.second()) +
           (c.emits_disparity ? ResidualDSConv<T>::param_count(c.head()) : 0);
  }

 private:
  UpsampleBlockConfig cfg_;
  ResidualDSConv<T> first_;
  ResidualDSConv<T> second_;
  ResidualDSConv<T> head_;
};

}  // namespace mininet
