#include "mininet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mininet/blocks.hpp"
#include "mininet/depthnet.hpp"
#include "mininet/geometry.hpp"
#include "mininet/losses.hpp"
#include "mininet/posenet.hpp"
#include "mininet/synthetic.hpp"
#include "mininet/trainer.hpp"

namespace mininet {

namespace {

using Td = Tensor<double>;

double weighted_sum(const Td& out, const Td& r) {
  double acc = 0;
  for (std::int64_t i = 0; i < out.size(); ++i) acc += out[i] * r[i];
  return acc;
}

std::vector<std::int64_t> probe_indices(std::int64_t n, int count, Rng& rng) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  if (n <= count) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(count));
  return idx;
}

class Maker {
 public:
  explicit Maker(std::uint64_t seed) : rng_(seed) {}

  Td uniform(Shape s, double lo, double hi) {
    Td t(std::move(s));
    std::uniform_real_distribution<double> d(lo, hi);
    for (auto& v : t.mutable_data()) v = d(rng_);
    return t;
  }
  /// Magnitudes in [lo, hi] with random sign, keeping values off kinks at zero.
  Td signed_away(Shape s, double lo = 0.2, double hi = 1.0) {
    Td t = uniform(std::move(s), lo, hi);
    std::bernoulli_distribution flip(0.5);
    for (auto& v : t.mutable_data()) {
      if (flip(rng_)) v = -v;
    }
    return t;
  }
  Td mask(Shape s, double p_valid) {
    Td t(std::move(s));
    std::bernoulli_distribution d(p_valid);
    for (auto& v : t.mutable_data()) v = d(rng_) ? 1.0 : 0.0;
    return t;
  }
  Rng& rng() { return rng_; }

 private:
  Rng rng_;
};

void init_params(ParamList<double> params, Maker& m, double scale) {
  for (auto& p : params) {
    if (!p.trainable) continue;
    auto fresh = m.uniform(p.tensor->shape(), -scale, scale);
    std::copy(fresh.data().begin(), fresh.data().end(), p.tensor->mutable_data().begin());
  }
}

/// Zero-initialised biases put units fed by all-zero inputs exactly on a
/// ReLU kink, where central differences and the tape disagree by design.
void jitter_biases(ParamList<double> params, Maker& m) {
  for (auto& p : params) {
    const auto& n = p.name;
    if (n.size() < 5 || n.compare(n.size() - 5, 5, ".bias") != 0) continue;
    auto fresh = m.signed_away(p.tensor->shape(), 0.05, 0.2);
    std::copy(fresh.data().begin(), fresh.data().end(), p.tensor->mutable_data().begin());
  }
}

std::vector<Td*> trainable(ParamList<double> params) {
  std::vector<Td*> out;
  for (auto& p : params) {
    if (p.trainable) out.push_back(p.tensor);
  }
  return out;
}

}  // namespace

GradCheckResult gradcheck(const std::string& name, const std::vector<Td*>& variables, const GradCheckFn& f,
                          const GradCheckConfig& cfg) {
  Rng rng(cfg.seed ^ std::hash<std::string>{}(name));
  const Td base = f(nullptr);
  Td r(base.shape());
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (auto& v : r.mutable_data()) v = d(rng);
  const double f0 = weighted_sum(base, r);

  Tape<double> tape;
  const Td out = f(&tape);
  Td rt = r;
  auto loss = sum(mul(out, rt));
  tape.backward(loss);

  struct Probe {
    double analytic, numeric;
    std::size_t variable;
    std::int64_t index;
  };
  std::vector<Probe> probes;
  for (std::size_t vi = 0; vi < variables.size(); ++vi) {
    auto* var = variables[vi];
    const Td g = tape.grad(*var);
    auto data = var->mutable_data();
    for (auto i : probe_indices(var->size(), cfg.probes_per_tensor, rng)) {
      const auto k = static_cast<std::size_t>(i);
      const double x0 = data[k];
      // Try successively smaller steps and keep the one whose forward and
      // backward differences agree best: a stencil straddling a ReLU, max
      // or sampling kink shows up as asymmetry, and so does round-off.
      double numeric = 0, best = INFINITY;
      double h = cfg.step;
      for (int level = 0; level < cfg.step_levels; ++level, h /= 10) {
        data[k] = x0 + h;
        const double fp = weighted_sum(f(nullptr), r);
        data[k] = x0 - h;
        const double fm = weighted_sum(f(nullptr), r);
        data[k] = x0;
        const double asym = std::abs((fp - f0) - (f0 - fm)) / h;
        if (asym < best) {
          best = asym;
          numeric = (fp - fm) / (2 * h);
        }
      }
      probes.push_back({g[i], numeric, vi, i});
    }
  }
  double largest = 0;
  for (const auto& p : probes) largest = std::max(largest, std::abs(p.numeric));
  const double floor = std::max(cfg.floor_fraction * largest, 1e-12);
  GradCheckResult res;
  res.name = name;
  res.probes = static_cast<std::int64_t>(probes.size());
  for (const auto& p : probes) {
    const double denom = std::max({std::abs(p.analytic), std::abs(p.numeric), floor});
    const double e = std::abs(p.analytic - p.numeric) / denom;
    const double err = std::isfinite(e) ? e : INFINITY;
    if (err >= res.max_rel_error) {
      res.max_rel_error = err;
      res.worst_variable = p.variable;
      res.worst_index = p.index;
      res.worst_analytic = p.analytic;
      res.worst_numeric = p.numeric;
    }
  }
  res.passed = res.max_rel_error < cfg.tolerance;
  return res;
}

std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckConfig& cfg) {
  std::vector<GradCheckResult> results;
  Maker m(cfg.seed);
  auto run = [&](const std::string& name, std::vector<Td*> vars, const GradCheckFn& f) {
    results.push_back(gradcheck(name, vars, f, cfg));
  };

  // --- tensor ops ----------------------------------------------------------
  {
    Td a = m.signed_away({2, 3, 4, 5}, 0.1, 5.5);
    Td b = m.signed_away({2, 3, 4, 5}, 0.3, 2.0);
    Td p = m.uniform({2, 3, 4, 5}, 0.5, 2.0);
    run("op.relu", {&a}, [&](Tape<double>* t) { return relu(bind(t, a)); });
    run("op.relu6", {&a}, [&](Tape<double>* t) { return relu6(bind(t, a)); });
    run("op.sigmoid", {&a}, [&](Tape<double>* t) { return sigmoid(bind(t, a)); });
    run("op.exp", {&b}, [&](Tape<double>* t) { return exp(bind(t, b)); });
    run("op.abs", {&a}, [&](Tape<double>* t) { return abs(bind(t, a)); });
    run("op.square", {&a}, [&](Tape<double>* t) { return square(bind(t, a)); });
    run("op.reciprocal", {&p}, [&](Tape<double>* t) { return reciprocal(bind(t, p)); });
    run("op.add", {&a, &b}, [&](Tape<double>* t) { return add(bind(t, a), bind(t, b)); });
    run("op.sub", {&a, &b}, [&](Tape<double>* t) { return sub(bind(t, a), bind(t, b)); });
    run("op.mul", {&a, &b}, [&](Tape<double>* t) { return mul(bind(t, a), bind(t, b)); });
    run("op.div", {&a, &p}, [&](Tape<double>* t) { return div(bind(t, a), bind(t, p)); });
    run("op.elementwise_min", {&a, &b}, [&](Tape<double>* t) { return elementwise_min(bind(t, a), bind(t, b)); });
    run("op.scalar_mul", {&a}, [&](Tape<double>* t) { return scalar_mul(bind(t, a), -1.7); });
    run("op.add_scalar", {&a}, [&](Tape<double>* t) { return add_scalar(bind(t, a), 0.3); });
    run("op.sum", {&a}, [&](Tape<double>* t) { return sum(bind(t, a)); });
    run("op.mean", {&a}, [&](Tape<double>* t) { return mean(bind(t, a)); });
    run("op.channel_mean", {&a}, [&](Tape<double>* t) { return channel_mean(bind(t, a)); });
    run("op.spatial_mean", {&a}, [&](Tape<double>* t) { return spatial_mean(bind(t, a)); });
    run("op.global_avg_pool", {&a}, [&](Tape<double>* t) { return global_avg_pool(bind(t, a)); });
    Td s = m.uniform({2, 3}, -1.0, 1.0);
    run("op.scale_channels", {&a, &s}, [&](Tape<double>* t) { return scale_channels(bind(t, a), bind(t, s)); });
    Td c = m.uniform({2, 2, 4, 5}, -1.0, 1.0);
    run("op.concat_channels", {&a, &c},
        [&](Tape<double>* t) { return concat_channels<double>({bind(t, a), bind(t, c)}); });
    run("op.slice_channels", {&a}, [&](Tape<double>* t) { return slice_channels(bind(t, a), 1, 3); });
    run("op.nearest_upsample2x", {&a}, [&](Tape<double>* t) { return nearest_upsample2x(bind(t, a)); });
    run("op.bilinear_resize.up", {&a}, [&](Tape<double>* t) { return bilinear_resize(bind(t, a), 7, 13); });
    run("op.bilinear_resize.down", {&a}, [&](Tape<double>* t) { return bilinear_resize(bind(t, a), 3, 2); });
    run("op.max_pool2d", {&a}, [&](Tape<double>* t) { return max_pool2d(bind(t, a), 3, 2, 1); });
    run("op.box_filter", {&a}, [&](Tape<double>* t) { return box_filter(bind(t, a), 3); });
    run("op.diff_x", {&a}, [&](Tape<double>* t) { return diff_x(bind(t, a)); });
    run("op.diff_y", {&a}, [&](Tape<double>* t) { return diff_y(bind(t, a)); });

    Td x = m.uniform({2, 4, 7, 6}, -1.0, 1.0);
    Td w = m.uniform({6, 4, 3, 3}, -0.5, 0.5), bias = m.uniform({6}, -0.5, 0.5);
    run("op.conv2d.3x3", {&x, &w, &bias},
        [&](Tape<double>* t) { return conv2d(bind(t, x), bind(t, w), bind(t, bias), {1, 1, 1}); });
    run("op.conv2d.stride2", {&x, &w, &bias},
        [&](Tape<double>* t) { return conv2d(bind(t, x), bind(t, w), bind(t, bias), {2, 1, 1}); });
    Td wg = m.uniform({6, 2, 3, 3}, -0.5, 0.5);
    run("op.conv2d.grouped", {&x, &wg, &bias},
        [&](Tape<double>* t) { return conv2d(bind(t, x), bind(t, wg), bind(t, bias), {1, 1, 2}); });
    Td wd = m.uniform({4, 1, 3, 3}, -0.5, 0.5), bd = m.uniform({4}, -0.5, 0.5);
    run("op.conv2d.depthwise", {&x, &wd, &bd},
        [&](Tape<double>* t) { return conv2d(bind(t, x), bind(t, wd), bind(t, bd), {1, 1, 4}); });
    run("op.conv2d.depthwise_stride2", {&x, &wd, &bd},
        [&](Tape<double>* t) { return conv2d(bind(t, x), bind(t, wd), bind(t, bd), {2, 1, 4}); });
    Td w1 = m.uniform({5, 4, 1, 1}, -0.5, 0.5);
    run("op.conv2d.1x1_nobias", {&x, &w1},
        [&](Tape<double>* t) { return conv2d(bind(t, x), bind(t, w1), Td{}, {1, 0, 1}); });
    Td w7 = m.uniform({3, 4, 7, 7}, -0.2, 0.2), b7 = m.uniform({3}, -0.5, 0.5);
    run("op.conv2d.7x7_stride2", {&x, &w7, &b7},
        [&](Tape<double>* t) { return conv2d(bind(t, x), bind(t, w7), bind(t, b7), {2, 3, 1}); });
    Td fx = m.uniform({3, 8}, -1.0, 1.0), fw = m.uniform({5, 8}, -0.5, 0.5), fb = m.uniform({5}, -0.5, 0.5);
    run("op.fully_connected", {&fx, &fw, &fb},
        [&](Tape<double>* t) { return fully_connected(bind(t, fx), bind(t, fw), bind(t, fb)); });
    Td gamma = m.uniform({4}, 0.5, 1.5), beta = m.uniform({4}, -0.5, 0.5);
    run("op.batch_norm2d.train", {&x, &gamma, &beta}, [&](Tape<double>* t) {
      Td rm({4}), rv({4}, 1.0);
      return batch_norm2d(bind(t, x), bind(t, gamma), bind(t, beta), rm, rv, true);
    });
    Td rm_eval = m.uniform({4}, -0.2, 0.2), rv_eval = m.uniform({4}, 0.5, 2.0);
    run("op.batch_norm2d.eval", {&x, &gamma, &beta}, [&](Tape<double>* t) {
      return batch_norm2d(bind(t, x), bind(t, gamma), bind(t, beta), rm_eval, rv_eval, false);
    });
  }

  // --- blocks ----------------------------------------------------------------
  {
    Td x = m.uniform({2, 16, 8, 8}, -1.0, 1.0);
    SEBlock<double> se({16, 4}, m.rng());
    auto vars = trainable([&] { ParamList<double> l; se.collect(l, "se"); return l; }());
    vars.push_back(&x);
    run("block.se", vars, [&](Tape<double>* t) { return se.forward(bind(t, x), t); });

    for (int stride : {1, 2}) {
      InvertedResidual<double> ir({16, 2, stride, 4}, m.rng());
      ParamList<double> l;
      ir.collect(l, "ir");
      init_params(l, m, 0.3);
      auto v = trainable(l);
      v.push_back(&x);
      run("block.inverted_residual.stride" + std::to_string(stride), v,
          [&](Tape<double>* t) { return ir.forward(bind(t, x), t); });
    }

    for (bool light : {true, false}) {
      for (bool head : {false, true}) {
        ResidualDSConvConfig c{16, head ? 1 : 16, 1, head, light};
        ResidualDSConv<double> ds(c, m.rng());
        ParamList<double> l;
        ds.collect(l, "ds");
        init_params(l, m, 0.3);
        auto v = trainable(l);
        v.push_back(&x);
        run(std::string("block.residual_dsconv") + (light ? "" : ".standard") + (head ? ".head" : ""), v,
            [&](Tape<double>* t) { return ds.forward(bind(t, x), t); });
      }
    }

    Td coarse = m.uniform({2, 8, 4, 4}, -1.0, 1.0), skip = m.uniform({2, 8, 8, 8}, -1.0, 1.0);
    for (bool has_skip : {true, false}) {
      UpsampleBlock<double> up({8, has_skip, true, true}, m.rng());
      ParamList<double> l;
      up.collect(l, "up");
      init_params(l, m, 0.3);
      auto v = trainable(l);
      v.push_back(&coarse);
      if (has_skip) v.push_back(&skip);
      run(std::string("block.upsample") + (has_skip ? ".skip" : ".noskip"), v, [&, has_skip](Tape<double>* t) {
        const Td s = bind(t, skip);
        auto o = up.forward(bind(t, coarse), has_skip ? &s : nullptr, t);
        return concat_channels<double>({o.features, o.disparity});
      });
    }

    DepthNetConfig dc;
    dc.variant = Variant::Small;
    dc.base_channels = 8;
    dc.iterations = 3;
    DepthNet<double> net(dc, m.rng());
    jitter_biases(net.parameters(), m);
    Td img = m.uniform({1, 3, 16, 32}, -1.0, 1.0);
    auto nv = trainable(net.parameters());
    nv.push_back(&img);
    run("block.depthnet", nv, [&](Tape<double>* t) { return concat_channels(net.forward(bind(t, img), t)); });

    PoseNetConfig pc;
    pc.width_multiplier = 0.125;
    pc.output_scale = 1.0;
    PoseNet<double> pose(pc, m.rng());
    Td tgt = m.uniform({2, 3, 64, 64}, -1.0, 1.0), src = m.uniform({2, 3, 64, 64}, -1.0, 1.0);
    auto pv = trainable(pose.parameters());
    pv.push_back(&tgt);
    pv.push_back(&src);
    run("block.posenet", pv, [&](Tape<double>* t) { return pose.forward(bind(t, tgt), bind(t, src), t, true); });
  }

  // --- geometry --------------------------------------------------------------
  {
    const Intrinsics k{14.0, 13.0, 7.6, 4.3};
    Td depth = m.uniform({2, 1, 9, 15}, 1.0, 4.0);
    Td pose({2, 6}, std::vector<double>{0.05, -0.08, 0.03, 0.2, -0.1, 0.15, -0.04, 0.02, 0.07, -0.25, 0.05, -0.1});
    run("geometry.project.coords", {&depth, &pose},
        [&](Tape<double>* t) { return project(bind(t, depth), bind(t, pose), k).coords; });
    const std::vector<RigidTransform> fixed{pose_to_matrix({{0.02, 0.01, -0.03}, {0.1, 0.05, -0.2}})};
    run("geometry.project.fixed", {&depth}, [&](Tape<double>* t) { return project(bind(t, depth), fixed, k).coords; });
    Td disp = m.uniform({2, 1, 9, 15}, 0.05, 0.95);
    run("geometry.disp_to_depth", {&disp}, [&](Tape<double>* t) { return disp_to_depth(bind(t, disp)); });

    Td src = m.uniform({2, 3, 9, 15}, 0.0, 1.0);
    Td coords = pixel_grid<double>(2, 9, 15);
    {
      auto off = m.uniform({2, 2, 9, 15}, -2.5, 2.5);
      auto cd = coords.mutable_data();
      for (std::size_t i = 0; i < cd.size(); ++i) cd[i] += off[static_cast<std::int64_t>(i)];
    }
    run("geometry.inverse_warp", {&src, &coords},
        [&](Tape<double>* t) { return inverse_warp(bind(t, src), bind(t, coords)).image; });
    run("geometry.synthesize_view", {&src, &depth, &pose},
        [&](Tape<double>* t) { return synthesize_view(bind(t, src), bind(t, depth), bind(t, pose), k).image; });
  }

  // --- losses ----------------------------------------------------------------
  {
    const LossConfig lc;
    Td x = m.uniform({2, 3, 8, 10}, 0.0, 1.0);
    Td y = m.uniform({2, 3, 8, 10}, 0.0, 1.0);
    run("loss.ssim", {&x, &y}, [&](Tape<double>* t) { return ssim(bind(t, x), bind(t, y), lc); });
    run("loss.l1_residual", {&x, &y}, [&](Tape<double>* t) { return l1_residual(bind(t, x), bind(t, y)); });
    run("loss.photometric_rho", {&x, &y}, [&](Tape<double>* t) { return photometric_rho(bind(t, x), bind(t, y), lc); });
    Td c0 = m.uniform({2, 1, 8, 10}, 0.0, 1.0), c1 = m.uniform({2, 1, 8, 10}, 0.0, 1.0);
    Td m0 = m.mask({2, 1, 8, 10}, 0.7), m1 = m.mask({2, 1, 8, 10}, 0.7);
    run("loss.min_reprojection", {&c0, &c1},
        [&](Tape<double>* t) { return min_reprojection<double>({bind(t, c0), bind(t, c1)}); });
    run("loss.min_reprojection.masked", {&c0, &c1},
        [&](Tape<double>* t) { return min_reprojection<double>({bind(t, c0), bind(t, c1)}, {m0, m1}); });
    Td d = m.uniform({2, 1, 8, 10}, 0.05, 0.95);
    run("loss.edge_aware_smoothness", {&d}, [&](Tape<double>* t) { return edge_aware_smoothness(bind(t, d), x); });
    Td res = m.uniform({2, 1, 8, 10}, 0.0, 0.5);
    run("loss.md_smoothness", {&d}, [&](Tape<double>* t) { return md_smoothness_loss(bind(t, d), x, res, lc); });
    run("loss.md_smoothness.masked", {&d},
        [&](Tape<double>* t) { return md_smoothness_loss(bind(t, d), x, res, lc, m0); });

    Td d2 = m.uniform({2, 1, 8, 10}, 0.05, 0.95);
    Td w0 = m.uniform({2, 3, 8, 10}, 0.0, 1.0), w1 = m.uniform({2, 3, 8, 10}, 0.0, 1.0);
    LossConfig heavy = lc;
    heavy.lambda = 0.5;  // make the smoothness contribution visible to the check
    auto build = [&](Tape<double>* t, const std::vector<Td>* frozen) {
      std::vector<ScaleInputs<double>> scales;
      for (const Td* disp : {&d, &d2}) {
        ScaleInputs<double> s;
        s.disparity = bind(t, *disp);
        s.target = x;
        s.warped = {bind(t, w0), bind(t, w1)};
        s.valid = {m0, m1};
        if (frozen) s.frozen_residual = (*frozen)[scales.size()];
        scales.push_back(std::move(s));
      }
      return total_loss(scales, heavy);
    };
    const auto frozen = build(nullptr, nullptr).smoothness_residuals;
    run("loss.total", {&d, &d2, &w0, &w1}, [&](Tape<double>* t) { return build(t, &frozen).total; });
  }

  // --- end to end -----------------------------------------------------------
  if (cfg.include_end_to_end) {
    SynthSceneConfig sc;
    sc.width = 32;
    sc.height = 16;
    sc.num_frames = 4;
    sc.supersample = 2;
    sc.texture_period_px = 6;
    sc.seed = cfg.seed;
    const auto seq = generate_synthetic_sequence(sc);
    const auto batch = stack_triplets<double>({seq.triplet<double>(1), seq.triplet<double>(2)});

    DepthNetConfig dc;
    dc.variant = Variant::Small;
    dc.iterations = 3;  // 16 rows only admit an output stride of 16
    DepthNet<double> depth(dc, m.rng());
    jitter_biases(depth.parameters(), m);
    PoseNetConfig pc;
    pc.width_multiplier = 0.125;
    PoseNet<double> pose(pc, m.rng());
    jitter_biases(pose.parameters(), m);
    LossConfig lc;
    lc.lambda = 0.1;
    // At 16 x 32 the PoseNet's last stage sees 1 x 1 maps, and batch
    // statistics over two samples make the objective so sharply curved that
    // central differences only settle below h ~ 1e-7. Batch norm therefore
    // runs on its running statistics here; its batch-statistics backward is
    // covered by op.batch_norm2d.train and block.posenet.
    const bool batch_stats = false;
    const auto frozen = compute_loss<double>(depth, pose, batch, nullptr, lc, batch_stats).smoothness_residuals;
    std::vector<Td*> vars = trainable(depth.parameters());
    for (auto* p : trainable(pose.parameters())) vars.push_back(p);
    GradCheckConfig e2e = cfg;
    e2e.probes_per_tensor = std::min(cfg.probes_per_tensor, 3);
    // The loss is a mean over thousands of terms, so round-off calls for
    // wider steps than the single-op cases.
    e2e.step = std::max(cfg.step, 1e-3);
    e2e.step_levels = std::max(cfg.step_levels, 4);
    results.push_back(gradcheck("end_to_end.train_objective", vars, [&](Tape<double>* t) {
      return compute_loss(depth, pose, batch, t, lc, batch_stats, &frozen).total;
    }, e2e));
  }
  return results;
}

}  // namespace mininet
