#include "mininet/losses.hpp"

#include <cmath>
#include <limits>

#include "mininet/ops.hpp"

namespace mininet {

namespace {

// Added to the cost of invalid samples so they never win the per-pixel minimum.
constexpr double kInvalidCost = 1e4;

template <typename T>
void check_same(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw InvalidShape(std::string(what) + ": shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                       " differ");
  }
}

// 1 where at least one mask is set.
template <typename T>
Tensor<T> any_valid(const std::vector<Tensor<T>>& masks) {
  Tensor<T> out(masks.front().shape());
  auto o = out.mutable_data();
  for (const auto& m : masks) {
    auto d = m.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = (o[i] > T(0) || d[i] > T(0)) ? T(1) : T(0);
  }
  return out;
}

}  // namespace

void LossConfig::validate() const {
  if (!(alpha >= 0 && alpha <= 1)) throw ConfigError("loss alpha must lie in [0, 1]");
  if (!(lambda >= 0)) throw ConfigError("loss lambda must be non-negative");
  if (ssim_window < 1 || ssim_window % 2 == 0) throw ConfigError("ssim_window must be a positive odd integer");
  if (!(md_constant >= 0)) throw ConfigError("md_constant must be non-negative");
}

template <typename T>
Tensor<T> ssim(const Tensor<T>& x, const Tensor<T>& y, const LossConfig& cfg) {
  check_same(x, y, "ssim");
  const int w = cfg.ssim_window;
  const T c1 = static_cast<T>(cfg.ssim_c1), c2 = static_cast<T>(cfg.ssim_c2);
  auto mu_x = box_filter(x, w);
  auto mu_y = box_filter(y, w);
  auto mu_xx = square(mu_x);
  auto mu_yy = square(mu_y);
  auto mu_xy = mul(mu_x, mu_y);
  auto sigma_x = sub(box_filter(square(x), w), mu_xx);
  auto sigma_y = sub(box_filter(square(y), w), mu_yy);
  auto sigma_xy = sub(box_filter(mul(x, y), w), mu_xy);
  auto num = mul(add_scalar(scalar_mul(mu_xy, T(2)), c1), add_scalar(scalar_mul(sigma_xy, T(2)), c2));
  auto den = mul(add_scalar(add(mu_xx, mu_yy), c1), add_scalar(add(sigma_x, sigma_y), c2));
  return div(num, den);
}

template <typename T>
Tensor<T> l1_residual(const Tensor<T>& a, const Tensor<T>& b) {
  check_same(a, b, "l1_residual");
  return channel_mean(abs(sub(a, b)));
}

template <typename T>
Tensor<T> photometric_rho(const Tensor<T>& target, const Tensor<T>& warped, const LossConfig& cfg) {
  check_same(target, warped, "photometric_rho");
  const T alpha = static_cast<T>(cfg.alpha);
  auto dssim = scalar_mul(add_scalar(scalar_mul(ssim(target, warped, cfg), T(-1)), T(1)), alpha / T(2));
  auto l1 = scalar_mul(abs(sub(target, warped)), T(1) - alpha);
  return channel_mean(add(dssim, l1));
}

template <typename T>
Tensor<T> min_reprojection(const std::vector<Tensor<T>>& costs, const std::vector<Tensor<T>>& masks) {
  if (costs.empty()) throw ContractViolation("min_reprojection needs at least one source cost");
  if (!masks.empty() && masks.size() != costs.size()) {
    throw ContractViolation("min_reprojection: " + std::to_string(masks.size()) + " masks for " +
                            std::to_string(costs.size()) + " costs");
  }
  for (std::size_t i = 0; i < costs.size(); ++i) {
    check_same(costs[0], costs[i], "min_reprojection");
    if (!masks.empty()) check_same(costs[0], masks[i], "min_reprojection mask");
  }
  if (masks.empty()) {
    Tensor<T> m = costs[0];
    for (std::size_t i = 1; i < costs.size(); ++i) m = elementwise_min(m, costs[i]);
    return mean(m);
  }
  auto penalised = [&](std::size_t i) {
    Tensor<T> pen(costs[i].shape());
    auto p = pen.mutable_data();
    auto mv = masks[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) p[j] = mv[j] > T(0) ? T(0) : static_cast<T>(kInvalidCost);
    return add(costs[i], pen);
  };
  Tensor<T> m = penalised(0);
  for (std::size_t i = 1; i < costs.size(); ++i) m = elementwise_min(m, penalised(i));
  auto any = any_valid(masks);
  T count = 0;
  for (auto v : any.data()) count += v;
  return scalar_mul(sum(mul(m, any)), T(1) / std::max(count, T(1)));
}

template <typename T>
Tensor<T> edge_aware_smoothness(const Tensor<T>& disparity, const Tensor<T>& image) {
  if (disparity.rank() != 4 || disparity.dim(1) != 1 || image.rank() != 4 || image.dim(0) != disparity.dim(0) ||
      image.dim(2) != disparity.dim(2) || image.dim(3) != disparity.dim(3)) {
    throw InvalidShape("edge_aware_smoothness: disparity " + to_string(disparity.shape()) + " vs image " +
                       to_string(image.shape()));
  }
  auto norm = scale_channels(disparity, reciprocal(spatial_mean(disparity)));
  const Tensor<T> img = image.detach();
  auto wx = exp(scalar_mul(channel_mean(abs(diff_x(img))), T(-1)));
  auto wy = exp(scalar_mul(channel_mean(abs(diff_y(img))), T(-1)));
  return add(mul(abs(diff_x(norm)), wx), mul(abs(diff_y(norm)), wy));
}

template <typename T>
Tensor<T> model_driven_weight(const Tensor<T>& residual, double c_md, const Tensor<T>& mask) {
  if (!mask.empty()) check_same(residual, mask, "model_driven_weight");
  auto r = residual.data();
  double total = 0, count = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (mask.empty() || mask[static_cast<std::int64_t>(i)] > T(0)) {
      total += static_cast<double>(r[i]);
      count += 1;
    }
  }
  Tensor<T> beta(residual.shape(), T(1));
  const double m = count > 0 ? total / count : 0.0;
  if (!(m > 0)) return beta;
  auto b = beta.mutable_data();
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (mask.empty() || mask[static_cast<std::int64_t>(i)] > T(0)) {
      b[i] = static_cast<T>(std::exp(-c_md * static_cast<double>(r[i]) / m));
    }
  }
  return beta;
}

template <typename T>
Tensor<T> md_smoothness_loss(const Tensor<T>& disparity, const Tensor<T>& image, const Tensor<T>& residual,
                             const LossConfig& cfg, const Tensor<T>& mask) {
  auto sm = edge_aware_smoothness(disparity, image);
  check_same(sm, residual, "md_smoothness_loss");
  auto beta = model_driven_weight(residual.detach(), cfg.md_constant, mask);
  return mean(mul(sm, beta));
}

template <typename T>
LossReport<T> total_loss(const std::vector<ScaleInputs<T>>& scales, const LossConfig& cfg) {
  cfg.validate();
  if (scales.empty()) throw ContractViolation("total_loss needs at least one scale");
  LossReport<T> report;
  Tensor<T> ph_sum, md_sum;
  for (std::size_t l = 0; l < scales.size(); ++l) {
    const auto& s = scales[l];
    if (s.warped.empty()) throw ContractViolation("total_loss: scale " + std::to_string(l) + " has no sources");
    const bool masked = !s.valid.empty();
    std::vector<Tensor<T>> costs;
    Tensor<T> residual;
    for (std::size_t i = 0; i < s.warped.size(); ++i) {
      costs.push_back(photometric_rho(s.target, s.warped[i], cfg));
      // Detached minimum-over-sources L1 residual for the smoothness weight.
      auto r = l1_residual(s.target.detach(), s.warped[i].detach());
      if (masked) {
        auto rd = r.mutable_data();
        auto v = s.valid[i].data();
        for (std::size_t j = 0; j < rd.size(); ++j) {
          if (!(v[j] > T(0))) rd[j] = std::numeric_limits<T>::infinity();
        }
      }
      if (i == 0) {
        residual = r;
      } else {
        auto rd = residual.mutable_data();
        auto nd = r.data();
        for (std::size_t j = 0; j < rd.size(); ++j) rd[j] = std::min(rd[j], nd[j]);
      }
    }
    Tensor<T> mask;
    if (masked) {
      mask = any_valid(s.valid);
      for (auto& v : residual.mutable_data()) {
        if (std::isinf(v)) v = T(0);
      }
    }
    if (!s.frozen_residual.empty()) {
      if (s.frozen_residual.shape() != residual.shape()) {
        throw InvalidShape("frozen residual " + to_string(s.frozen_residual.shape()) + " does not match " +
                           to_string(residual.shape()));
      }
      residual = s.frozen_residual;
    }
    report.smoothness_residuals.push_back(residual);
    auto ph = min_reprojection(costs, s.valid);
    auto md = md_smoothness_loss(s.disparity, s.target, residual, cfg, mask);
    const double phv = static_cast<double>(ph.item()), mdv = static_cast<double>(md.item());
    if (!std::isfinite(phv) || !std::isfinite(mdv)) {
      throw NonFiniteError("non-finite loss at scale " + std::to_string(l) + " (photometric " + std::to_string(phv) +
                           ", smoothness " + std::to_string(mdv) + ")");
    }
    report.per_scale.push_back({static_cast<int>(l), phv, mdv});
    ph_sum = l == 0 ? ph : add(ph_sum, ph);
    md_sum = l == 0 ? md : add(md_sum, md);
  }
  report.photometric = ph_sum;
  report.md_smoothness = md_sum;
  report.total = add(ph_sum, scalar_mul(md_sum, static_cast<T>(cfg.lambda)));
  return report;
}

#define MININET_INSTANTIATE_LOSSES(T)                                                                             \
  template Tensor<T> ssim(const Tensor<T>&, const Tensor<T>&, const LossConfig&);                                 \
  template Tensor<T> l1_residual(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> photometric_rho(const Tensor<T>&, const Tensor<T>&, const LossConfig&);                      \
  template Tensor<T> min_reprojection(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&);              \
  template Tensor<T> edge_aware_smoothness(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> model_driven_weight(const Tensor<T>&, double, const Tensor<T>&);                             \
  template Tensor<T> md_smoothness_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const LossConfig&, \
                                        const Tensor<T>&);                                                        \
  template LossReport<T> total_loss(const std::vector<ScaleInputs<T>>&, const LossConfig&);

MININET_INSTANTIATE_LOSSES(float)
MININET_INSTANTIATE_LOSSES(double)

}  // namespace mininet
