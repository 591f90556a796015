#include "mininet/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "mininet/ops.hpp"

namespace mininet {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (!(lr0 > 0)) throw ConfigError("lr0 must be positive");
  if (lr_decay_epochs < 1) throw ConfigError("lr_decay_epochs must be >= 1");
}

template <typename T>
void Triplet<T>::validate() const {
  if (target.rank() != 4 || target.dim(1) != 3 || prev.shape() != target.shape() || next.shape() != target.shape()) {
    throw InvalidShape("triplet frames must share one N x 3 x H x W shape, got " + to_string(prev.shape()) + ", " +
                       to_string(target.shape()) + ", " + to_string(next.shape()));
  }
  k.validate();
}

template <typename T>
Triplet<T> stack_triplets(const std::vector<Triplet<T>>& items) {
  if (items.empty()) throw ContractViolation("stack_triplets needs at least one triplet");
  std::vector<Tensor<T>> p, t, n;
  for (const auto& it : items) {
    it.validate();
    const auto& k = it.k;
    const auto& k0 = items.front().k;
    if (k.fx != k0.fx || k.fy != k0.fy || k.cx != k0.cx || k.cy != k0.cy) {
      throw ContractViolation("stack_triplets: intrinsics differ within a batch");
    }
    p.push_back(it.prev);
    t.push_back(it.target);
    n.push_back(it.next);
  }
  auto cat = [](const std::vector<Tensor<T>>& parts) {
    Shape s = parts.front().shape();
    std::int64_t batch = 0;
    for (const auto& x : parts) {
      if (x.shape()[1] != s[1] || x.shape()[2] != s[2] || x.shape()[3] != s[3]) {
        throw InvalidShape("stack_triplets: frame shapes differ");
      }
      batch += x.dim(0);
    }
    s[0] = batch;
    std::vector<T> values;
    values.reserve(static_cast<std::size_t>(numel(s)));
    for (const auto& x : parts) values.insert(values.end(), x.data().begin(), x.data().end());
    return Tensor<T>(s, std::move(values));
  };
  return {cat(p), cat(t), cat(n), items.front().k};
}

AugmentParams sample_augment(Rng& rng) {
  // Every draw happens regardless of the branches taken so the stream of
  // random numbers consumed per call is fixed.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> factor(0.8, 1.2);
  std::uniform_real_distribution<double> hue(0.9, 1.1);
  AugmentParams p;
  p.flip = unit(rng) < 0.5;
  p.jitter = unit(rng) < 0.5;
  const double b = factor(rng), c = factor(rng), s = factor(rng), h = hue(rng);
  if (p.jitter) {
    p.brightness = b;
    p.contrast = c;
    p.saturation = s;
    p.hue_shift = h - 1.0;
  }
  return p;
}

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& x) {
  if (x.rank() != 4) throw InvalidShape("flip_horizontal expects NCHW, got " + to_string(x.shape()));
  Tensor<T> out(x.shape());
  const std::int64_t rows = x.dim(0) * x.dim(1) * x.dim(2), w = x.dim(3);
  auto s = x.data();
  auto d = out.mutable_data();
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t j = 0; j < w; ++j) d[r * w + j] = s[r * w + (w - 1 - j)];
  }
  return out;
}

namespace {

double gray(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

// Rotates the hue of one pixel; max and min of the channels are preserved.
void shift_hue(double& r, double& g, double& b, double shift) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double c = mx - mn;
  if (c <= 0) return;
  double h;
  if (mx == r) {
    h = std::fmod((g - b) / c, 6.0);
  } else if (mx == g) {
    h = (b - r) / c + 2.0;
  } else {
    h = (r - g) / c + 4.0;
  }
  h = std::fmod(h + 6.0 * shift, 6.0);
  if (h < 0) h += 6.0;
  const double x = c * (1.0 - std::fabs(std::fmod(h, 2.0) - 1.0));
  double r1 = 0, g1 = 0, b1 = 0;
  switch (static_cast<int>(h)) {
    case 0: r1 = c, g1 = x; break;
    case 1: r1 = x, g1 = c; break;
    case 2: g1 = c, b1 = x; break;
    case 3: g1 = x, b1 = c; break;
    case 4: r1 = x, b1 = c; break;
    default: r1 = c, b1 = x; break;
  }
  r = r1 + mn;
  g = g1 + mn;
  b = b1 + mn;
}

}  // namespace

template <typename T>
Tensor<T> color_jitter(const Tensor<T>& x, const AugmentParams& p) {
  if (x.rank() != 4 || x.dim(1) != 3) throw InvalidShape("color_jitter expects N x 3 x H x W, got " + to_string(x.shape()));
  const std::int64_t n = x.dim(0), hw = x.dim(2) * x.dim(3);
  std::vector<double> v(x.data().begin(), x.data().end());
  for (std::int64_t b = 0; b < n; ++b) {
    double* r = v.data() + b * 3 * hw;
    double* g = r + hw;
    double* bl = g + hw;
    for (std::int64_t i = 0; i < hw; ++i) {
      r[i] *= p.brightness;
      g[i] *= p.brightness;
      bl[i] *= p.brightness;
    }
    double m = 0;
    for (std::int64_t i = 0; i < hw; ++i) m += gray(r[i], g[i], bl[i]);
    m /= static_cast<double>(hw);
    for (std::int64_t i = 0; i < hw; ++i) {
      r[i] = (r[i] - m) * p.contrast + m;
      g[i] = (g[i] - m) * p.contrast + m;
      bl[i] = (bl[i] - m) * p.contrast + m;
    }
    for (std::int64_t i = 0; i < hw; ++i) {
      const double y = gray(r[i], g[i], bl[i]);
      r[i] = y + (r[i] - y) * p.saturation;
      g[i] = y + (g[i] - y) * p.saturation;
      bl[i] = y + (bl[i] - y) * p.saturation;
    }
    if (p.hue_shift != 0) {
      for (std::int64_t i = 0; i < hw; ++i) shift_hue(r[i], g[i], bl[i], p.hue_shift);
    }
  }
  Tensor<T> out(x.shape());
  auto d = out.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(std::clamp(v[i], 0.0, 1.0));
  return out;
}

template <typename T>
Triplet<T> apply_augment(const Triplet<T>& t, const AugmentParams& p) {
  t.validate();
  Triplet<T> out = t;
  if (p.flip) {
    out.prev = flip_horizontal(out.prev);
    out.target = flip_horizontal(out.target);
    out.next = flip_horizontal(out.next);
    out.k = t.k.flipped(t.target.dim(3));
  }
  if (p.jitter) {
    out.prev = color_jitter(out.prev, p);
    out.target = color_jitter(out.target, p);
    out.next = color_jitter(out.next, p);
  }
  return out;
}

template <typename T>
Tensor<T> normalize(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  auto s = x.data();
  auto d = out.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = (s[i] - T(0.45)) / T(0.225);
  return out;
}

double lr_at_epoch(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw ContractViolation("lr_at_epoch: negative epoch");
  return cfg.lr0 * std::pow(0.5, epoch / cfg.lr_decay_epochs);
}

template <typename T>
LossReport<T> compute_loss(const DepthNet<T>& depth, PoseNet<T>& pose, const Triplet<T>& t, Tape<T>* tape,
                           const LossConfig& loss_cfg, bool training,
                           const std::vector<Tensor<T>>* frozen_residuals) {
  t.validate();
  const auto target_in = normalize(t.target);
  const auto disparities = depth.forward(target_in, tape);
  const Tensor<T>* sources[2] = {&t.prev, &t.next};
  std::vector<Tensor<T>> poses;
  for (const auto* s : sources) poses.push_back(pose.forward(target_in, normalize(*s), tape, training));
  std::vector<ScaleInputs<T>> scales;
  for (const auto& d : disparities) {
    ScaleInputs<T> in;
    in.disparity = d;
    in.target = t.target;
    if (frozen_residuals) in.frozen_residual = frozen_residuals->at(scales.size());
    const auto depth_map = disp_to_depth(d);
    for (std::size_t i = 0; i < 2; ++i) {
      auto w = synthesize_view(*sources[i], depth_map, poses[i], t.k);
      in.warped.push_back(w.image);
      in.valid.push_back(w.valid);
    }
    scales.push_back(std::move(in));
  }
  return total_loss(scales, loss_cfg);
}

template <typename T>
Trainer<T>::Trainer(DepthNet<T>& depth, PoseNet<T>& pose, TrainConfig cfg, LossConfig loss_cfg)
    : depth_(depth), pose_(pose), cfg_(cfg), loss_cfg_(loss_cfg) {
  cfg_.validate();
  loss_cfg_.validate();
}

template <typename T>
LossReport<T> Trainer<T>::step(const Triplet<T>& t, double lr) {
  Tape<T> tape;
  auto report = compute_loss(depth_, pose_, t, &tape, loss_cfg_, true);
  if (!std::isfinite(static_cast<double>(report.total.item()))) {
    throw NonFiniteError("non-finite total loss at step " + std::to_string(state_.step));
  }
  tape.backward(report.total);
  std::vector<Tensor<T>*> params;
  std::vector<Tensor<T>> grads;
  std::vector<std::string> names;
  auto gather = [&](ParamList<T> ps) {
    for (auto& p : ps) {
      if (!p.trainable) continue;
      params.push_back(p.tensor);
      grads.push_back(tape.grad(*p.tensor));
      names.push_back(p.name);
    }
  };
  gather(depth_.parameters());
  gather(pose_.parameters());
  AdamConfig acfg;
  acfg.lr = lr;
  adam_step(params, grads, state_, acfg, names);
  return {report.total.detach(), report.photometric.detach(), report.md_smoothness.detach(), report.per_scale,
          report.smoothness_residuals};
}

#define MININET_INSTANTIATE_TRAINER(T)                                                                     \
  template struct Triplet<T>;                                                                              \
  template Triplet<T> stack_triplets(const std::vector<Triplet<T>>&);                                      \
  template Tensor<T> flip_horizontal(const Tensor<T>&);                                                    \
  template Tensor<T> color_jitter(const Tensor<T>&, const AugmentParams&);                                 \
  template Triplet<T> apply_augment(const Triplet<T>&, const AugmentParams&);                              \
  template Tensor<T> normalize(const Tensor<T>&);                                                          \
  template LossReport<T> compute_loss(const DepthNet<T>&, PoseNet<T>&, const Triplet<T>&, Tape<T>*,       \
                                      const LossConfig&, bool, const std::vector<Tensor<T>>*);             \
  template class Trainer<T>;

MININET_INSTANTIATE_TRAINER(float)
MININET_INSTANTIATE_TRAINER(double)

}  // namespace mininet
