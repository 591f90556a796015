#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mininet/losses.hpp"
#include "mininet/ops.hpp"

using namespace mininet;

namespace {

Tensor<double> uniform(Shape s, std::uint64_t seed, double lo = 0, double hi = 1) {
  Tensor<double> t(std::move(s));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.mutable_data()) v = d(rng);
  return t;
}

double mean_of(const Tensor<double>& t) {
  double s = 0;
  for (auto v : t.data()) s += v;
  return s / static_cast<double>(t.size());
}

}  // namespace

TEST(Ssim, ConstantImagesClosedForm) {
  Tensor<double> x({1, 1, 5, 5}, 0.2), y({1, 1, 5, 5}, 0.8);
  auto s = ssim(x, y);
  const double c1 = 1e-4, c2 = 9e-4;
  const double expected = (2 * 0.2 * 0.8 + c1) * c2 / ((0.04 + 0.64 + c1) * c2);
  EXPECT_NEAR(expected, 0.4707, 1e-4);
  for (auto v : s.data()) EXPECT_NEAR(v, expected, 1e-12);
}

TEST(Ssim, SelfSimilarityIsOne) {
  auto x = uniform({2, 3, 6, 7}, 1);
  for (const auto held = ssim(x, x); auto v : held.data()) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Ssim, ShapeMismatchThrows) {
  EXPECT_THROW(ssim(Tensor<double>({1, 1, 3, 3}), Tensor<double>({1, 1, 3, 4})), InvalidShape);
}

TEST(PhotometricRho, IdenticalImagesCostNothing) {
  auto x = uniform({1, 3, 5, 5}, 2);
  for (const auto held = photometric_rho(x, x); auto v : held.data()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(PhotometricRho, AlphaZeroIsMeanAbsoluteDifference) {
  auto x = uniform({1, 3, 4, 4}, 3), y = uniform({1, 3, 4, 4}, 4);
  LossConfig cfg;
  cfg.alpha = 0;
  auto rho = photometric_rho(x, y, cfg);
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 4; ++j) {
      double l1 = 0;
      for (std::int64_t c = 0; c < 3; ++c) l1 += std::abs(x.at(0, c, i, j) - y.at(0, c, i, j));
      EXPECT_NEAR(rho.at(0, 0, i, j), l1 / 3, 1e-15);
    }
}

TEST(PhotometricRho, MixesSsimAndL1) {
  // Per pixel: alpha * (1 - SSIM) / 2 + (1 - alpha) * L1, from independent pieces.
  auto x = uniform({1, 1, 4, 4}, 5), y = uniform({1, 1, 4, 4}, 6);
  auto s = ssim(x, y);
  auto rho = photometric_rho(x, y);
  for (std::int64_t i = 0; i < 16; ++i) {
    EXPECT_NEAR(rho[i], 0.85 * (1 - s[i]) / 2 + 0.15 * std::abs(x[i] - y[i]), 1e-15);
  }
  EXPECT_DOUBLE_EQ(0.85 * (1 - 0.5) / 2 + 0.15 * 0.1, 0.2275);
}

TEST(MinReprojection, Examples) {
  Tensor<double> a({1, 1, 1, 2}, {0.1, 0.9}), b({1, 1, 1, 2}, {0.5, 0.2});
  EXPECT_NEAR(min_reprojection<double>({a, b}).item(), 0.15, 1e-15);
  EXPECT_NEAR(min_reprojection<double>({a}).item(), 0.5, 1e-15);
  Tensor<double> c({1, 1, 2, 2}, 0.2), d({1, 1, 2, 2}, 0.4);
  EXPECT_NEAR(min_reprojection<double>({c, d}).item(), 0.2, 1e-15);
  EXPECT_THROW(min_reprojection<double>({}), ContractViolation);
}

TEST(MinReprojection, MaskedSourcesNeverWinAndUncoveredPixelsAreDropped) {
  Tensor<double> a({1, 1, 1, 3}, {0.1, 0.9, 0.3}), b({1, 1, 1, 3}, {0.5, 0.2, 0.7});
  Tensor<double> ma({1, 1, 1, 3}, {0, 1, 0}), mb({1, 1, 1, 3}, {1, 0, 0});
  // pixel 0 -> b (0.5), pixel 1 -> a (0.9), pixel 2 has no valid source.
  EXPECT_NEAR(min_reprojection<double>({a, b}, {ma, mb}).item(), (0.5 + 0.9) / 2, 1e-12);
}

TEST(MinReprojection, NotAboveAverageOfSourceMeans) {
  for (int trial = 0; trial < 100; ++trial) {
    auto a = uniform({1, 1, 4, 5}, 100 + trial), b = uniform({1, 1, 4, 5}, 300 + trial);
    const double m = min_reprojection<double>({a, b}).item();
    EXPECT_LE(m, 0.5 * (mean_of(a) + mean_of(b)) + 1e-15);
  }
}

TEST(EdgeAwareSmoothness, ConstantDisparityIsZero) {
  Tensor<double> d({1, 1, 5, 6}, 0.3);
  auto img = uniform({1, 3, 5, 6}, 7);
  const auto sm = edge_aware_smoothness(d, img);
  for (auto v : sm.data()) EXPECT_EQ(v, 0.0);
}

TEST(EdgeAwareSmoothness, ConstantImageGivesNormalisedGradient) {
  // d = 1 + j along x, mean 2.5 over a 4-wide row: |dx d*| = 1 / 2.5.
  Tensor<double> d({1, 1, 3, 4});
  auto dd = d.mutable_data();
  for (std::int64_t i = 0; i < 3; ++i)
    for (std::int64_t j = 0; j < 4; ++j) dd[static_cast<std::size_t>(i * 4 + j)] = 1.0 + static_cast<double>(j);
  Tensor<double> img({1, 3, 3, 4}, 0.6);
  auto s = edge_aware_smoothness(d, img);
  for (std::int64_t i = 0; i < 3; ++i) {
    for (std::int64_t j = 0; j < 3; ++j) EXPECT_NEAR(s.at(0, 0, i, j), 1.0 / 2.5, 1e-15);
    EXPECT_EQ(s.at(0, 0, i, 3), 0.0);
  }
}

TEST(EdgeAwareSmoothness, ImageEdgesDownWeight) {
  Tensor<double> d({1, 1, 1, 3}, {1.0, 2.0, 3.0});
  Tensor<double> img({1, 1, 1, 3}, {0.0, 0.5, 0.5});
  auto s = edge_aware_smoothness(d, img);
  EXPECT_NEAR(s[0], 0.5 * std::exp(-0.5), 1e-15);
  EXPECT_NEAR(s[1], 0.5, 1e-15);
}

TEST(ModelDrivenWeight, Examples) {
  Tensor<double> uniform_r({1, 1, 2, 2}, 0.3);
  for (const auto held = model_driven_weight(uniform_r, 10.0); auto v : held.data()) EXPECT_NEAR(v, std::exp(-10.0), 1e-18);
  EXPECT_NEAR(std::exp(-10.0), 4.54e-5, 1e-7);
  Tensor<double> r({1, 1, 1, 2}, {0.0, 0.4});
  auto beta = model_driven_weight(r, 10.0);
  EXPECT_EQ(beta[0], 1.0);
  EXPECT_NEAR(beta[1], std::exp(-20.0), 1e-20);
  Tensor<double> zero({1, 1, 2, 2}, 0.0);
  for (const auto held = model_driven_weight(zero, 10.0); auto v : held.data()) EXPECT_EQ(v, 1.0);
}

TEST(ModelDrivenWeight, MaskedPixelsGetOneAndLeaveTheMean) {
  Tensor<double> r({1, 1, 1, 3}, {0.2, 0.4, 100.0});
  Tensor<double> m({1, 1, 1, 3}, {1, 1, 0});
  auto beta = model_driven_weight(r, 10.0, m);
  EXPECT_NEAR(beta[0], std::exp(-10.0 * 0.2 / 0.3), 1e-15);
  EXPECT_NEAR(beta[1], std::exp(-10.0 * 0.4 / 0.3), 1e-15);
  EXPECT_EQ(beta[2], 1.0);
}

TEST(ModelDrivenWeight, PowerOfTwoScalingIsBitExact) {
  auto r = uniform({1, 1, 4, 4}, 9);
  auto base = model_driven_weight(r, 10.0);
  for (double k : {0.25, 2.0, 1024.0}) {
    auto beta = model_driven_weight(scalar_mul(r, k), 10.0);
    for (std::int64_t i = 0; i < 16; ++i) EXPECT_EQ(beta[i], base[i]);
  }
}

TEST(MdSmoothness, ToyWeightedMean) {
  // Two pixels with smoothness [0.2, 0.4] and weights [1, 0.5].
  const double s[2] = {0.2, 0.4}, b[2] = {1.0, 0.5};
  EXPECT_DOUBLE_EQ((s[0] * b[0] + s[1] * b[1]) / 2, 0.2);
  // Same through the library: r = [0, x] gives beta = [1, exp(-2c)], so c =
  // ln(2) / 2 yields [1, 0.5].
  Tensor<double> r({1, 1, 1, 2}, {0.0, 0.7});
  auto beta = model_driven_weight(r, std::log(2.0) / 2);
  EXPECT_DOUBLE_EQ(beta[0], 1.0);
  EXPECT_NEAR(beta[1], 0.5, 1e-15);
}

TEST(MdSmoothness, EqualsMeanOfWeightedSmoothness) {
  auto d = uniform({2, 1, 5, 6}, 10, 0.1, 0.9), img = uniform({2, 3, 5, 6}, 11), r = uniform({2, 1, 5, 6}, 12);
  LossConfig cfg;
  auto sm = edge_aware_smoothness(d, img);
  auto beta = model_driven_weight(r, cfg.md_constant);
  double acc = 0;
  for (std::int64_t i = 0; i < sm.size(); ++i) acc += sm[i] * beta[i];
  EXPECT_NEAR(md_smoothness_loss(d, img, r, cfg).item(), acc / static_cast<double>(sm.size()), 1e-15);
  EXPECT_EQ(md_smoothness_loss(Tensor<double>({2, 1, 5, 6}, 0.4), img, r, cfg).item(), 0.0);
  Tensor<double> zero({2, 1, 5, 6});
  double plain = 0;
  for (auto v : sm.data()) plain += v;
  EXPECT_NEAR(md_smoothness_loss(d, img, zero, cfg).item(), plain / static_cast<double>(sm.size()), 1e-15);
}

TEST(MdSmoothness, WeightIsDetached) {
  auto d = uniform({1, 1, 4, 4}, 13, 0.1, 0.9), img = uniform({1, 3, 4, 4}, 14), r = uniform({1, 1, 4, 4}, 15);
  Tape<double> tape;
  auto rt = tape.watch(r);
  auto loss = md_smoothness_loss(tape.watch(d), img, rt, LossConfig{});
  tape.backward(loss);
  for (const auto held = tape.grad(r); auto v : held.data()) EXPECT_EQ(v, 0.0);
}

TEST(TotalLoss, PerfectReconstructionAndConstantDisparityIsZero) {
  auto img = uniform({1, 3, 6, 8}, 16);
  ScaleInputs<double> s{Tensor<double>({1, 1, 6, 8}, 0.5), img, {img, img}, {}, {}};
  auto rep = total_loss<double>({s, s});
  EXPECT_NEAR(rep.total.item(), 0.0, 1e-12);
}

TEST(TotalLoss, CombinesTermsWithLambda) {
  auto t = uniform({1, 3, 6, 8}, 17), w1 = uniform({1, 3, 6, 8}, 18), w2 = uniform({1, 3, 6, 8}, 19);
  auto d = uniform({1, 1, 6, 8}, 20, 0.1, 0.9);
  ScaleInputs<double> s{d, t, {w1, w2}, {}, {}};
  LossConfig cfg;
  auto rep = total_loss<double>({s, s}, cfg);
  EXPECT_NEAR(rep.total.item(), rep.photometric.item() + cfg.lambda * rep.md_smoothness.item(), 1e-15);
  ASSERT_EQ(rep.per_scale.size(), 2u);
  EXPECT_NEAR(rep.photometric.item(), rep.per_scale[0].photometric + rep.per_scale[1].photometric, 1e-15);
  cfg.lambda = 0;
  auto rep0 = total_loss<double>({s}, cfg);
  EXPECT_EQ(rep0.total.item(), rep0.photometric.item());
  EXPECT_DOUBLE_EQ(0.5 + 0.001 * 2.0, 0.502);
}

TEST(TotalLoss, NonFiniteScaleIsNamed) {
  auto t = uniform({1, 3, 4, 4}, 21);
  auto bad = t.clone();
  bad.mutable_data()[3] = std::nan("");
  ScaleInputs<double> good{Tensor<double>({1, 1, 4, 4}, 0.5), t, {t}, {}, {}};
  ScaleInputs<double> broken{Tensor<double>({1, 1, 4, 4}, 0.5), t, {bad}, {}, {}};
  try {
    total_loss<double>({good, broken});
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("scale 1"), std::string::npos) << e.what();
  }
}

TEST(TotalLoss, BadConfigRejected) {
  LossConfig cfg;
  cfg.alpha = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.ssim_window = 4;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(LossProperties, RandomInstances) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> scale(0.05, 20.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto seed = static_cast<std::uint64_t>(1000 + 10 * trial);
    auto x = uniform({1, 3, 5, 6}, seed), y = uniform({1, 3, 5, 6}, seed + 1);
    auto d = uniform({1, 1, 5, 6}, seed + 2, 0.05, 1.0), r = uniform({1, 1, 5, 6}, seed + 3);
    const double k = scale(rng);
    for (const auto held = ssim(x, x); auto v : held.data()) ASSERT_NEAR(v, 1.0, 1e-12);
    auto b1 = model_driven_weight(r, 10.0), b2 = model_driven_weight(scalar_mul(r, k), 10.0);
    for (std::int64_t i = 0; i < b1.size(); ++i) ASSERT_NEAR(b1[i], b2[i], 1e-12 * std::max(1e-300, b1[i]) + 1e-300);
    auto s1 = edge_aware_smoothness(d, x), s2 = edge_aware_smoothness(scalar_mul(d, k), x);
    for (std::int64_t i = 0; i < s1.size(); ++i) ASSERT_NEAR(s1[i], s2[i], 1e-12);
    for (const auto held = photometric_rho(x, y); auto v : held.data()) ASSERT_GE(v, 0.0);
  }
}
