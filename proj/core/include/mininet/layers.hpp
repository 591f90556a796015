#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mininet/ops.hpp"
#include "mininet/tensor.hpp"

namespace mininet {

using Rng = std::mt19937_64;

/// Named handle to a tensor owned by a network. Buffers (batch-norm running
/// statistics) are listed with trainable == false so checkpoints include them
/// while the optimizer skips them.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* tensor;
  bool trainable = true;
};

template <typename T>
using ParamList = std::vector<ParamRef<T>>;

/// Sum of element counts over trainable entries.
template <typename T>
std::int64_t trainable_count(const ParamList<T>& params) {
  std::int64_t n = 0;
  for (const auto& p : params) {
    if (p.trainable) n += p.tensor->size();
  }
  return n;
}

/// Uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> xavier_uniform(Shape shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.mutable_data()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
struct Conv2d {
  Tensor<T> weight;  // out x in/groups x k x k
  Tensor<T> bias;    // out, or empty
  Conv2dParams params;

  Conv2d() = default;
  Conv2d(std::int64_t in, std::int64_t out, int kernel, Conv2dParams p, bool with_bias, Rng& rng)
      : params(p) {
    const std::int64_t in_per_group = in / p.groups;
    const std::int64_t rf = static_cast<std::int64_t>(kernel) * kernel;
    weight = xavier_uniform<T>({out, in_per_group, kernel, kernel}, in_per_group * rf, (out / p.groups) * rf, rng);
    if (with_bias) bias = Tensor<T>({out});
  }

  Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) const {
    return conv2d(x, bind(tape, weight), bias.empty() ? bias : bind(tape, bias), params);
  }

  std::int64_t in_channels() const { return weight.dim(1) * params.groups; }
  std::int64_t out_channels() const { return weight.dim(0); }

  void collect(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", &weight, true});
    if (!bias.empty()) out.push_back({prefix + ".bias", &bias, true});
  }

  /// Closed-form parameter count of a convolution.
  static std::int64_t param_count(std::int64_t in, std::int64_t out, int kernel, int groups, bool with_bias) {
    return out * (in / groups) * kernel * kernel + (with_bias ? out : 0);
  }
};

template <typename T>
struct Linear {
  Tensor<T> weight;  // out x in
  Tensor<T> bias;    // out

  Linear() = default;
  Linear(std::int64_t in, std::int64_t out, Rng& rng)
      : weight(xavier_uniform<T>({out, in}, in, out, rng)), bias(Shape{out}) {}

  Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) const {
    return fully_connected(x, bind(tape, weight), bind(tape, bias));
  }

  void collect(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", &weight, true});
    out.push_back({prefix + ".bias", &bias, true});
  }

  static std::int64_t param_count(std::int64_t in, std::int64_t out) { return in * out + out; }
};

template <typename T>
struct BatchNorm2d {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;

  BatchNorm2d() = default;
  explicit BatchNorm2d(std::int64_t channels)
      : gamma(Shape{channels}, T(1)),
        beta(Shape{channels}),
        running_mean(Shape{channels}),
        running_var(Shape{channels}, T(1)) {}

  /// Running statistics are updated in place when `training` is true.
  Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape, bool training) {
    return batch_norm2d(x, bind(tape, gamma), bind(tape, beta), running_mean, running_var, training);
  }

  void collect(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", &gamma, true});
    out.push_back({prefix + ".beta", &beta, true});
    out.push_back({prefix + ".running_mean", &running_mean, false});
    out.push_back({prefix + ".running_var", &running_var, false});
  }
};

}  // namespace mininet
