#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mininet/posenet.hpp"

using namespace mininet;

namespace {

Tensor<double> image(std::uint64_t seed, std::int64_t n = 2, std::int64_t h = 32, std::int64_t w = 64) {
  Tensor<double> t({n, 3, h, w});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& v : t.mutable_data()) v = u(rng);
  return t;
}

void fill(Tensor<double>& t, double v) { std::fill(t.mutable_data().begin(), t.mutable_data().end(), v); }

Mat3 matmul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Mat3 transpose(const Mat3& a) {
  Mat3 t{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t[i][j] = a[j][i];
  return t;
}

double det(const Mat3& m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

}  // namespace

TEST(PoseNet, ZeroHeadGivesZeroPose) {
  Rng rng(1);
  PoseNet<double> net({0.25, 0.01}, rng);
  fill(net.final_conv().weight, 0);
  fill(net.final_conv().bias, 0);
  auto p = net.forward(image(1), image(2), nullptr, false);
  ASSERT_EQ(p.shape(), (Shape{2, 6}));
  for (auto v : p.data()) EXPECT_EQ(v, 0.0);
  auto m = pose_to_matrix(pose_from_row(p, 0));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_EQ(m.m[i][j], i == j ? 1.0 : 0.0);
}

TEST(PoseNet, UnitRawOutputScalesToOneHundredth) {
  Rng rng(2);
  PoseNet<double> net({0.25, 0.01}, rng);
  fill(net.final_conv().weight, 0);
  fill(net.final_conv().bias, 1.0);
  auto p = net.forward(image(3), image(4), nullptr, false);
  for (auto v : p.data()) EXPECT_DOUBLE_EQ(v, 0.01);
}

TEST(PoseNet, DoublingRawOutputDoublesPose) {
  Rng rng(3);
  PoseNet<double> net({0.25, 0.01}, rng);
  auto a = image(5), b = image(6);
  auto p1 = net.forward(a, b, nullptr, false);
  auto raw = net.raw_output(a, b, nullptr, false);
  for (std::int64_t i = 0; i < p1.size(); ++i) EXPECT_EQ(p1[i], raw[i] * 0.01);
  auto& w = net.final_conv().weight;
  auto& bias = net.final_conv().bias;
  for (auto& v : w.mutable_data()) v *= 2;
  for (auto& v : bias.mutable_data()) v *= 2;
  auto p2 = net.forward(a, b, nullptr, false);
  for (std::int64_t i = 0; i < p1.size(); ++i) EXPECT_EQ(p2[i], 2 * p1[i]);
}

TEST(PoseNet, FirstConvTakesSixChannels) {
  Rng rng(4);
  PoseNet<double> net({1.0, 0.01}, rng);
  auto ps = net.parameters();
  ASSERT_FALSE(ps.empty());
  EXPECT_EQ(ps.front().tensor->dim(1), 6);
}

TEST(PoseNet, ParameterCountIndependentOfSourceCount) {
  Rng rng(5);
  PoseNet<double> net({0.25, 0.01}, rng);
  const auto before = net.parameter_count();
  auto t = image(7);
  net.forward(t, image(8), nullptr, true);
  net.forward(t, image(9), nullptr, true);
  EXPECT_EQ(net.parameter_count(), before);
}

TEST(PoseNet, FullWidthMatchesResNet18EncoderPlusHead) {
  // ResNet-18 stack of bias-free convs plus BN affine pairs, 6-channel stem.
  std::int64_t enc = 6 * 64 * 49 + 2 * 64;
  auto block = [](std::int64_t in, std::int64_t out, bool down) {
    std::int64_t n = in * out * 9 + 2 * out + out * out * 9 + 2 * out;
    if (down) n += in * out + 2 * out;
    return n;
  };
  enc += 2 * block(64, 64, false);
  enc += block(64, 128, true) + block(128, 128, false);
  enc += block(128, 256, true) + block(256, 256, false);
  enc += block(256, 512, true) + block(512, 512, false);
  const std::int64_t head = (512 * 256 * 9 + 256) + 2 * (256 * 256 * 9 + 256) + (256 * 6 * 9 + 6);
  Rng rng(6);
  PoseNet<float> net({1.0, 0.01}, rng);
  EXPECT_EQ(net.parameter_count(), enc + head);
}

TEST(PoseNet, MismatchedFramesThrow) {
  Rng rng(7);
  PoseNet<double> net({0.25, 0.01}, rng);
  EXPECT_THROW(net.forward(image(1, 1, 32, 64), image(2, 1, 32, 32), nullptr, false), InvalidShape);
}

TEST(PoseToMatrix, QuarterTurnAboutZ) {
  Pose6DoF p;
  p.rotation = {0, 0, std::numbers::pi / 2};
  auto m = pose_to_matrix(p);
  auto v = m.apply({1, 0, 0});
  EXPECT_NEAR(v[0], 0, 1e-6);
  EXPECT_NEAR(v[1], 1, 1e-6);
  EXPECT_NEAR(v[2], 0, 1e-6);
}

TEST(PoseToMatrix, InverseComposesToIdentity) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int trial = 0; trial < 50; ++trial) {
    Pose6DoF p;
    for (int i = 0; i < 3; ++i) {
      p.rotation[i] = u(rng);
      p.translation[i] = 4 * u(rng);
    }
    auto m = pose_to_matrix(p);
    auto id = m * m.inverse();
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) EXPECT_NEAR(id.m[i][j], i == j ? 1.0 : 0.0, 1e-6);
    EXPECT_EQ(m.m[3][0], 0.0);
    EXPECT_EQ(m.m[3][3], 1.0);
  }
}

TEST(PoseToMatrix, RandomRotationsAreOrthonormal) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int trial = 0; trial < 100; ++trial) {
    Vec3 w{u(rng), u(rng), u(rng)};
    auto r = rodrigues(w);
    auto rtr = matmul(transpose(r), r);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) EXPECT_NEAR(rtr[i][j], i == j ? 1.0 : 0.0, 1e-6);
    EXPECT_NEAR(det(r), 1.0, 1e-6);
  }
}
