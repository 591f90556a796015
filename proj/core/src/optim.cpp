#include "mininet/optim.hpp"

#include <cmath>

namespace mininet {

template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               const AdamConfig& cfg, const std::vector<std::string>& names) {
  if (params.size() != grads.size()) {
    throw InvalidShape("adam_step: " + std::to_string(params.size()) + " params vs " + std::to_string(grads.size()) +
                       " grads");
  }
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw InvalidShape("adam_step: optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i]->shape() || state.m[i].shape() != params[i]->shape()) {
      throw InvalidShape("adam_step: shape mismatch for parameter " +
                         (i < names.size() ? names[i] : std::to_string(i)));
    }
    for (T g : grads[i].data()) {
      if (!std::isfinite(g)) {
        throw NonFiniteError("adam_step: non-finite gradient in parameter " +
                             (i < names.size() ? names[i] : std::to_string(i)) + "; step rejected");
      }
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T step_size = static_cast<T>(cfg.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->mutable_data();
    auto g = grads[i].data();
    auto m = state.m[i].mutable_data();
    auto v = state.v[i].mutable_data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (T(1) - b1) * g[k];
      v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      p[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_bc2 + eps);
    }
  }
}

template void adam_step(const std::vector<Tensor<float>*>&, const std::vector<Tensor<float>>&, AdamState<float>&,
                        const AdamConfig&, const std::vector<std::string>&);
template void adam_step(const std::vector<Tensor<double>*>&, const std::vector<Tensor<double>>&, AdamState<double>&,
                        const AdamConfig&, const std::vector<std::string>&);

}  // namespace mininet
