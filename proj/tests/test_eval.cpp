#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mininet/eval.hpp"

using namespace mininet;

namespace {

// Straightforward per-pixel evaluation, sharing no code with the library.
DepthMetrics brute_force(std::vector<double> pred, const std::vector<double>& gt, double lo, double hi, bool scale) {
  std::vector<double> p, g;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] > lo && gt[i] < hi) {
      p.push_back(pred[i]);
      g.push_back(gt[i]);
    }
  }
  auto med = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  if (scale) {
    const double r = med(g) / med(p);
    for (auto& v : p) v *= r;
  }
  DepthMetrics m;
  double se = 0, sel = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double q = std::min(std::max(p[i], lo), hi);
    m.abs_rel += std::abs(g[i] - q) / g[i];
    m.sq_rel += (g[i] - q) * (g[i] - q) / g[i];
    se += (g[i] - q) * (g[i] - q);
    sel += std::pow(std::log10(g[i]) - std::log10(q), 2);
    const double t = std::max(g[i] / q, q / g[i]);
    m.delta1 += t < 1.25;
    m.delta2 += t < std::pow(1.25, 2);
    m.delta3 += t < std::pow(1.25, 3);
  }
  const double n = static_cast<double>(g.size());
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse = std::sqrt(se / n);
  m.rmse_log = std::sqrt(sel / n);
  m.delta1 /= n;
  m.delta2 /= n;
  m.delta3 /= n;
  m.count = static_cast<std::int64_t>(g.size());
  return m;
}

void expect_metrics_near(const DepthMetrics& a, const DepthMetrics& b, double tol) {
  EXPECT_NEAR(a.abs_rel, b.abs_rel, tol);
  EXPECT_NEAR(a.sq_rel, b.sq_rel, tol);
  EXPECT_NEAR(a.rmse, b.rmse, tol);
  EXPECT_NEAR(a.rmse_log, b.rmse_log, tol);
  EXPECT_NEAR(a.delta1, b.delta1, tol);
  EXPECT_NEAR(a.delta2, b.delta2, tol);
  EXPECT_NEAR(a.delta3, b.delta3, tol);
  EXPECT_EQ(a.count, b.count);
}

void expect_metrics_identical(const DepthMetrics& a, const DepthMetrics& b) {
  EXPECT_EQ(a.abs_rel, b.abs_rel);
  EXPECT_EQ(a.sq_rel, b.sq_rel);
  EXPECT_EQ(a.rmse, b.rmse);
  EXPECT_EQ(a.rmse_log, b.rmse_log);
  EXPECT_EQ(a.delta1, b.delta1);
  EXPECT_EQ(a.delta2, b.delta2);
  EXPECT_EQ(a.delta3, b.delta3);
}

std::vector<double> random_depths(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

std::vector<RigidTransform> chain_to_absolute(const std::vector<RigidTransform>& rel) {
  std::vector<RigidTransform> out{RigidTransform::identity()};
  for (const auto& r : rel) out.push_back(out.back() * r);
  return out;
}

}  // namespace

TEST(DepthMetrics, PerfectPrediction) {
  std::vector<double> g = {1.0, 5.0, 12.0, 40.0};
  auto m = depth_metrics(g, g, DepthEvalConfig{1e-3, 80, false});
  EXPECT_EQ(m.abs_rel, 0);
  EXPECT_EQ(m.rmse, 0);
  EXPECT_EQ(m.rmse_log, 0);
  EXPECT_EQ(m.delta1, 1);
  EXPECT_EQ(m.delta3, 1);
}

TEST(DepthMetrics, DoubledPredictionWithMedianScalingIsPerfect) {
  std::vector<double> g = {1.0, 5.0, 12.0, 40.0, 7.0}, p;
  for (double v : g) p.push_back(2 * v);
  auto m = depth_metrics(p, g, DepthEvalConfig{});
  EXPECT_EQ(m.abs_rel, 0);
  EXPECT_EQ(m.delta1, 1);
}

TEST(DepthMetrics, SinglePixelHandArithmetic) {
  std::vector<double> p = {2.0}, g = {1.0};
  auto m = depth_metrics(p, g, DepthEvalConfig{1e-3, 80, false});
  EXPECT_DOUBLE_EQ(m.abs_rel, 1.0);
  EXPECT_DOUBLE_EQ(m.sq_rel, 1.0);
  EXPECT_DOUBLE_EQ(m.rmse, 1.0);
  EXPECT_NEAR(m.rmse_log, 0.30103, 1e-5);
  // Ratio 2 exceeds 1.25, 1.5625 and 1.953125, so every threshold fails.
  EXPECT_EQ(m.delta1, 0.0);
  EXPECT_EQ(m.delta2, 0.0);
  EXPECT_EQ(m.delta3, 0.0);
  std::vector<double> p2 = {1.9};
  EXPECT_EQ(depth_metrics(p2, g, DepthEvalConfig{1e-3, 80, false}).delta3, 1.0);
}

TEST(DepthMetrics, MatchesBruteForceOnRandomMaps) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    auto g = random_depths(rng, 25, 0.5, 90.0);
    auto p = random_depths(rng, 25, 0.1, 100.0);
    for (bool scale : {false, true}) {
      DepthEvalConfig cfg{1e-3, 80.0, scale};
      expect_metrics_near(depth_metrics(p, g, cfg), brute_force(p, g, 1e-3, 80.0, scale), 1e-12);
    }
  }
}

TEST(DepthMetrics, MedianScalingInvariantToPowerOfTwoScaling) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    auto g = random_depths(rng, 25, 0.5, 70.0);
    auto p = random_depths(rng, 25, 0.1, 30.0);
    const auto base = depth_metrics(p, g, DepthEvalConfig{});
    for (double k : {0.125, 0.5, 2.0, 64.0, 1024.0}) {
      std::vector<double> q;
      for (double v : p) q.push_back(k * v);
      expect_metrics_identical(depth_metrics(q, g, DepthEvalConfig{}), base);
    }
  }
}

TEST(DepthMetrics, MedianScalingNearlyInvariantToArbitraryScaling) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 100.0);
  for (int trial = 0; trial < 100; ++trial) {
    auto g = random_depths(rng, 25, 0.5, 70.0);
    auto p = random_depths(rng, 25, 0.1, 30.0);
    std::vector<double> q;
    const double k = u(rng);
    for (double v : p) q.push_back(k * v);
    expect_metrics_near(depth_metrics(q, g, DepthEvalConfig{}), depth_metrics(p, g, DepthEvalConfig{}), 1e-12);
  }
}

TEST(DepthMetrics, PredictionsAboveCapBehaveAsCap) {
  std::vector<double> g = {10, 20, 30}, p1 = {10, 20, 500}, p2 = {10, 20, 80};
  DepthEvalConfig cfg{1e-3, 80, false};
  expect_metrics_identical(depth_metrics(p1, g, cfg), depth_metrics(p2, g, cfg));
}

TEST(DepthMetrics, GroundTruthOutsideCapsIsIgnored) {
  std::vector<double> g = {10, 95, 0.0}, p = {10, 3, 4};
  auto m = depth_metrics(p, g, DepthEvalConfig{1e-3, 80, false});
  EXPECT_EQ(m.count, 1);
  EXPECT_EQ(m.abs_rel, 0);
  std::vector<double> none = {0.0, 100.0};
  EXPECT_THROW(depth_metrics(std::vector<double>{1, 1}, none, DepthEvalConfig{}), EmptyEvaluation);
}

TEST(DepthMetrics, MaskRemovesPixels) {
  std::vector<double> g = {10, 20}, p = {10, 40};
  std::vector<std::uint8_t> mask = {1, 0};
  auto m = depth_metrics(p, g, DepthEvalConfig{1e-3, 80, false}, mask);
  EXPECT_EQ(m.count, 1);
  EXPECT_EQ(m.abs_rel, 0);
}

TEST(DepthMetrics, DeltasAreOrdered) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    auto g = random_depths(rng, 30, 1, 50), p = random_depths(rng, 30, 1, 50);
    auto m = depth_metrics(p, g, DepthEvalConfig{1e-3, 80, false});
    EXPECT_LE(m.delta1, m.delta2);
    EXPECT_LE(m.delta2, m.delta3);
  }
}

TEST(DepthMetrics, CsvFormatting) {
  DepthMetrics m;
  m.delta1 = m.delta2 = m.delta3 = 1;
  EXPECT_EQ(metrics_csv_header(), "abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3");
  EXPECT_EQ(metrics_csv_row(m), "0.000000,0.000000,0.000000,0.000000,1.000000,1.000000,1.000000");
}

TEST(Make3dCrop, StandardImageSizes) {
  auto w = make3d_crop_window(2272, 1704);
  EXPECT_EQ(w.height, 852);
  EXPECT_EQ(w.top, (2272 - 852) / 2);
  auto d = proportional_crop_window(55, 2272, 1704);
  EXPECT_EQ(d.height, 21);
  EXPECT_EQ(d.top, 17);
  Tensor<float> depth({55, 305}, 1.0f);
  EXPECT_EQ(make3d_crop_depth(depth, 2272, 1704).shape(), (Shape{21, 305}));
}

TEST(Make3dCrop, AlreadyTwoToOneIsUnchanged) {
  Tensor<double> img({3, 4, 8});
  auto d = img.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<double>(i);
  auto c = make3d_crop(img);
  ASSERT_EQ(c.shape(), img.shape());
  for (std::int64_t i = 0; i < img.size(); ++i) EXPECT_EQ(c[i], img[i]);
}

TEST(Make3dCrop, CentredRows) {
  Tensor<double> img({1, 10, 8});
  auto d = img.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<double>(i / 8);
  auto c = make3d_crop(img);
  EXPECT_EQ(c.shape(), (Shape{1, 4, 8}));
  EXPECT_EQ(c[0], 3.0);
  EXPECT_THROW(make3d_crop(Tensor<double>({1, 3, 8})), InvalidCrop);
}

TEST(Ate, ExactChainIsZero) {
  std::vector<Pose6DoF> rel = {{{0.01, 0.02, 0.0}, {0.1, 0.0, 1.0}},
                               {{0.0, -0.01, 0.01}, {0.12, 0.01, 0.9}},
                               {{0.02, 0.0, -0.01}, {0.0, 0.02, 1.1}},
                               {{-0.01, 0.01, 0.0}, {-0.05, 0.0, 1.0}}};
  std::vector<RigidTransform> m;
  for (const auto& p : rel) m.push_back(pose_to_matrix(p));
  auto world = pose_to_matrix({{0.3, -0.2, 0.1}, {5, 6, 7}});
  auto gt = chain_to_absolute(m);
  for (auto& g : gt) g = world * g;
  EXPECT_NEAR(ate_5frame(rel, gt), 0.0, 1e-12);
  std::vector<Pose6DoF> scaled = rel;
  for (auto& p : scaled)
    for (auto& t : p.translation) t *= 3;
  EXPECT_NEAR(ate_5frame(scaled, gt), 0.0, 1e-12);
}

TEST(Ate, SingleFrameErrorWithNeutralScale) {
  // Error e on frame 2 chosen with g.e = -|e|^2, so the least-squares scale
  // stays exactly 1 and the result is |e| / 5.
  std::vector<Vec3> g = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}, {4, 0, 0}};
  auto p = g;
  const double ey = std::sqrt(0.01 - 0.005 * 0.005);
  p[2] = {2 - 0.005, ey, 0};
  EXPECT_NEAR(0.005 * 0.005 + ey * ey, 0.01, 1e-15);
  EXPECT_NEAR(ate_from_positions(p, g), 0.02, 1e-9);
}

TEST(Ate, SingleFrameErrorMatchesLeastSquaresOracle) {
  std::vector<Vec3> g = {{0, 0, 0}, {0, 0, 1}, {0, 0, 2}, {0, 0, 3}, {0, 0, 4}};
  auto p = g;
  p[3][0] += 0.1;
  // s = sum(g.p) / sum(p.p) = 30 / 30.01; error^2 = sum |s p - g|^2.
  const double s = 30.0 / 30.01;
  double e2 = 0;
  for (int i = 0; i < 5; ++i)
    for (int a = 0; a < 3; ++a) e2 += std::pow(s * p[i][a] - g[i][a], 2);
  EXPECT_NEAR(ate_from_positions(p, g), std::sqrt(e2) / 5, 1e-12);
  EXPECT_NEAR(ate_from_positions(p, g), 0.02, 1e-5);
}

TEST(Ate, InvariantToUniformScaling) {
  std::vector<Vec3> g = {{0, 0, 0}, {0.1, 0, 1}, {0.2, 0.1, 2}, {0.2, 0.1, 3.1}, {0.3, 0, 4}};
  std::vector<Vec3> p = {{0, 0, 0}, {0.12, 0, 0.9}, {0.2, 0.05, 2.1}, {0.25, 0.1, 3}, {0.3, 0.02, 4.2}};
  const double base = ate_from_positions(p, g);
  for (double k : {0.1, 3.0, 17.0}) {
    auto q = p;
    for (auto& v : q)
      for (auto& c : v) c *= k;
    EXPECT_NEAR(ate_from_positions(q, g), base, 1e-12);
  }
}

TEST(Ate, ZeroLengthPredictionUsesUnitScaleAndWrongLengthsThrow) {
  std::vector<Vec3> g = {{0, 0, 0}, {0, 0, 1}, {0, 0, 2}, {0, 0, 3}, {0, 0, 4}};
  std::vector<Vec3> p(5, Vec3{0, 0, 0});
  EXPECT_NEAR(ate_from_positions(p, g), std::sqrt(30.0) / 5, 1e-12);
  EXPECT_THROW(ate_5frame(std::vector<RigidTransform>(3), std::vector<RigidTransform>(5)), InvalidShape);
}

TEST(Ate, NextCameraIsInverseOfTargetToSource) {
  Pose6DoF p{{0.02, -0.01, 0.03}, {0.1, 0.2, -0.3}};
  auto a = next_camera_in_current(p) * pose_to_matrix(p);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(a.m[i][j], i == j ? 1.0 : 0.0, 1e-12);
}

TEST(MeanStd, PopulationStatisticsAndFormat) {
  std::vector<double> v = {0.01, 0.02, 0.03};
  auto m = mean_std(v);
  EXPECT_NEAR(m.mean, 0.02, 1e-15);
  EXPECT_NEAR(m.std, std::sqrt(2.0 / 3.0) * 0.01, 1e-15);
  EXPECT_EQ(format_mean_std({0.0123, 0.0045}), "0.0123 ± 0.0045");
  EXPECT_THROW(mean_std(std::vector<double>{}), EmptyEvaluation);
}
