#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mininet/tensor.hpp"

namespace mininet {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update applied in place to `params`.
///
/// All gradients are checked before any parameter is touched; a NaN/Inf
/// gradient rejects the whole step with a NonFiniteError naming the offending
/// tensor (by index, or by `names` when provided).
template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               const AdamConfig& cfg, const std::vector<std::string>& names = {});

}  // namespace mininet
