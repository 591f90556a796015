#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mininet/layers.hpp"
#include "mininet/ops.hpp"
#include "mininet/optim.hpp"

using namespace mininet;

namespace {

Tensor<double> random_tensor(Shape s, std::uint64_t seed, double lo = -2, double hi = 2) {
  Tensor<double> t(std::move(s));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.mutable_data()) v = d(rng);
  return t;
}

// Direct summation, written independently of the library kernels.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int stride,
                           int pad, int groups) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto o = w.dim(0), k = w.dim(2);
  const auto oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  const auto cpg = c / groups, opg = o / groups;
  Tensor<double> out({n, o, oh, ow});
  auto od = out.mutable_data();
  for (std::int64_t bi = 0; bi < n; ++bi)
    for (std::int64_t oc = 0; oc < o; ++oc)
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t xx = 0; xx < ow; ++xx) {
          double acc = b.empty() ? 0.0 : b[oc];
          const auto g = oc / opg;
          for (std::int64_t ic = 0; ic < cpg; ++ic)
            for (std::int64_t ky = 0; ky < k; ++ky)
              for (std::int64_t kx = 0; kx < k; ++kx) {
                const auto iy = y * stride - pad + ky, ix = xx * stride - pad + kx;
                if (iy < 0 || ix < 0 || iy >= h || ix >= wd) continue;
                acc += x.at(bi, g * cpg + ic, iy, ix) * w.at(oc, ic, ky, kx);
              }
          od[static_cast<std::size_t>(((bi * o + oc) * oh + y) * ow + xx)] = acc;
        }
  return out;
}

void expect_near_all(const Tensor<double>& a, const Tensor<double>& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

}  // namespace

TEST(Conv2d, IdentityKernelReturnsInput) {
  auto x = random_tensor({1, 1, 3, 3}, 1);
  Tensor<double> w({1, 1, 1, 1}, 1.0);
  auto y = conv2d(x, w, Tensor<double>{}, {1, 0, 1});
  expect_near_all(y, x, 0);
}

TEST(Conv2d, TwoByTwoDiagonalKernel) {
  Tensor<double> x({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor<double> w({1, 1, 2, 2}, {1, 0, 0, 1});
  auto y = conv2d(x, w, Tensor<double>{}, {1, 0, 1});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y[0], 5.0);
}

TEST(Conv2d, DepthwiseStrideTwoShape) {
  Tensor<float> x({1, 64, 96, 320}, 0.5f);
  Tensor<float> w({64, 1, 3, 3}, 0.1f);
  auto y = conv2d(x, w, Tensor<float>{}, {2, 1, 64});
  EXPECT_EQ(y.shape(), (Shape{1, 64, 48, 160}));
}

TEST(Conv2d, MatchesDirectSummation) {
  struct Case {
    std::int64_t c, o;
    int k, stride, pad, groups;
  };
  int seed = 10;
  for (auto cs : {Case{3, 4, 3, 1, 1, 1}, Case{4, 6, 3, 2, 1, 2}, Case{4, 4, 3, 2, 1, 4}, Case{5, 3, 1, 1, 0, 1},
                  Case{2, 4, 7, 2, 3, 1}, Case{6, 6, 3, 1, 0, 3}}) {
    auto x = random_tensor({2, cs.c, 7, 9}, ++seed);
    auto w = random_tensor({cs.o, cs.c / cs.groups, cs.k, cs.k}, ++seed);
    auto b = random_tensor({cs.o}, ++seed);
    expect_near_all(conv2d(x, w, b, {cs.stride, cs.pad, cs.groups}), conv_oracle(x, w, b, cs.stride, cs.pad, cs.groups),
                    1e-12);
  }
}

TEST(Conv2d, DepthwiseEqualsIndependentChannelConvolutions) {
  auto x = random_tensor({1, 3, 4, 4}, 3);
  auto w = random_tensor({3, 1, 3, 3}, 4);
  auto y = conv2d(x, w, Tensor<double>{}, {1, 1, 3});
  for (std::int64_t c = 0; c < 3; ++c) {
    auto xc = slice_channels(x, c, c + 1);
    Tensor<double> wc({1, 1, 3, 3}, std::vector<double>(w.data().begin() + c * 9, w.data().begin() + (c + 1) * 9));
    auto yc = conv2d(xc, wc, Tensor<double>{}, {1, 1, 1});
    expect_near_all(slice_channels(y, c, c + 1), yc, 0);
  }
}

TEST(Conv2d, ChannelMismatchThrows) {
  Tensor<double> x({1, 3, 4, 4});
  Tensor<double> w({2, 2, 3, 3});
  EXPECT_THROW(conv2d(x, w, Tensor<double>{}, {1, 1, 1}), InvalidShape);
  Tensor<double> wg({4, 1, 3, 3});
  EXPECT_THROW(conv2d(x, wg, Tensor<double>{}, {1, 1, 2}), InvalidShape);
}

TEST(BilinearResize, SameSizeIsIdentity) {
  auto x = random_tensor({2, 3, 5, 7}, 5);
  auto y = bilinear_resize(x, 5, 7);
  for (std::int64_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i], y[i]);
}

TEST(BilinearResize, UpsampledPairStaysWithinRange) {
  Tensor<double> x({1, 1, 1, 2}, {0.3, -1.7});
  auto y = bilinear_resize(x, 1, 4);
  for (std::int64_t i = 0; i < y.size(); ++i) {
    EXPECT_GE(y[i], -1.7);
    EXPECT_LE(y[i], 0.3);
  }
}

TEST(BilinearResize, MatchesHalfPixelFormula) {
  Tensor<double> x({1, 1, 2, 2}, {0, 1, 2, 3});
  auto y = bilinear_resize(x, 4, 4);
  // Output pixel i samples source coordinate (i + 0.5) / 2 - 0.5, clamped.
  auto src = [](int i) { return std::clamp((i + 0.5) * 0.5 - 0.5, 0.0, 1.0); };
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double v = src(i), u = src(j);
      const double expected = (1 - v) * ((1 - u) * 0 + u * 1) + v * ((1 - u) * 2 + u * 3);
      EXPECT_NEAR(y.at(0, 0, i, j), expected, 1e-15);
    }
  }
  EXPECT_NEAR(y.at(0, 0, 1, 1), 0.75, 1e-15);
  EXPECT_NEAR(y.at(0, 0, 2, 2), 2.25, 1e-15);
}

TEST(Primitives, Relu6Clamps) {
  Tensor<double> x({2}, {8.0, -1.0});
  auto y = relu6(x);
  EXPECT_EQ(y[0], 6.0);
  EXPECT_EQ(y[1], 0.0);
}

TEST(Primitives, GlobalAvgPoolOfConstant) {
  Tensor<double> x({2, 3, 4, 5}, 0.37);
  auto y = global_avg_pool(x);
  ASSERT_EQ(y.shape(), (Shape{2, 3}));
  for (std::int64_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], 0.37, 1e-15);
}

TEST(Primitives, ElementwiseMinValuesAndGradientRouting) {
  Tensor<double> a({2}, {3, 1}), b({2}, {2, 5});
  Tape<double> tape;
  auto ta = tape.watch(a), tb = tape.watch(b);
  auto m = elementwise_min(ta, tb);
  EXPECT_EQ(m[0], 2);
  EXPECT_EQ(m[1], 1);
  tape.backward(sum(m));
  auto ga = tape.grad(a), gb = tape.grad(b);
  EXPECT_EQ(ga[0], 0);
  EXPECT_EQ(ga[1], 1);
  EXPECT_EQ(gb[0], 1);
  EXPECT_EQ(gb[1], 0);
}

TEST(Primitives, ElementwiseMinTieGoesToFirstArgument) {
  Tensor<double> a({1}, {2.0}), b({1}, {2.0});
  Tape<double> tape;
  auto m = elementwise_min(tape.watch(a), tape.watch(b));
  tape.backward(sum(m));
  EXPECT_EQ(tape.grad(a)[0], 1);
  EXPECT_EQ(tape.grad(b)[0], 0);
}

TEST(Primitives, MismatchedShapesThrow) {
  Tensor<double> a({2, 3}), b({3, 2});
  EXPECT_THROW(add(a, b), InvalidShape);
  EXPECT_THROW(mul(a, b), InvalidShape);
  EXPECT_THROW(elementwise_min(a, b), InvalidShape);
}

TEST(Primitives, ConcatThenSliceRecoversInputs) {
  auto a = random_tensor({2, 3, 4, 5}, 8), b = random_tensor({2, 2, 4, 5}, 9);
  auto c = concat_channels<double>({a, b});
  auto a2 = slice_channels(c, 0, 3), b2 = slice_channels(c, 3, 5);
  for (std::int64_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], a2[i]);
  for (std::int64_t i = 0; i < b.size(); ++i) EXPECT_EQ(b[i], b2[i]);
}

TEST(Primitives, NearestUpsampleRepeatsPixels) {
  Tensor<double> x({1, 1, 2, 2}, {1, 2, 3, 4});
  auto y = nearest_upsample2x(x);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
  EXPECT_EQ(y.at(0, 0, 0, 1), 1);
  EXPECT_EQ(y.at(0, 0, 1, 2), 2);
  EXPECT_EQ(y.at(0, 0, 3, 0), 3);
  EXPECT_EQ(y.at(0, 0, 2, 3), 4);
}

TEST(Backward, SumGivesOnes) {
  auto x = random_tensor({3, 4}, 11);
  Tape<double> tape;
  tape.backward(sum(tape.watch(x)));
  auto g = tape.grad(x);
  for (std::int64_t i = 0; i < g.size(); ++i) EXPECT_EQ(g[i], 1.0);
}

TEST(Backward, MeanOfSquares) {
  auto x = random_tensor({7}, 12);
  Tape<double> tape;
  tape.backward(mean(square(tape.watch(x))));
  auto g = tape.grad(x);
  for (std::int64_t i = 0; i < 7; ++i) EXPECT_NEAR(g[i], 2 * x[i] / 7, 1e-15);
}

TEST(Backward, NonScalarRootIsRejected) {
  auto x = random_tensor({3}, 13);
  Tape<double> tape;
  auto y = relu(tape.watch(x));
  EXPECT_THROW(tape.backward(y), ContractViolation);
}

TEST(Backward, SecondCallWithoutResetIsRejected) {
  auto x = random_tensor({3}, 14);
  Tape<double> tape;
  auto s = sum(tape.watch(x));
  tape.backward(s);
  EXPECT_THROW(tape.backward(s), ContractViolation);
  tape.reset();
  auto s2 = sum(tape.watch(x));
  EXPECT_NO_THROW(tape.backward(s2));
}

TEST(Backward, ReusedLeafAccumulates) {
  auto x = random_tensor({4}, 15);
  Tape<double> tape;
  auto a = tape.watch(x), b = tape.watch(x);
  tape.backward(sum(mul(a, b)));
  auto g = tape.grad(x);
  for (std::int64_t i = 0; i < 4; ++i) EXPECT_NEAR(g[i], 2 * x[i], 1e-15);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  auto p = random_tensor({5}, 16);
  const auto before = p.clone();
  AdamState<double> st;
  adam_step<double>({&p}, {Tensor<double>({5})}, st, AdamConfig{});
  for (std::int64_t i = 0; i < 5; ++i) EXPECT_EQ(p[i], before[i]);
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction m_hat = g and v_hat = g^2, so the step is
  // lr * g / (|g| + eps).
  for (double g : {0.3, -2.5, 1e-3}) {
    Tensor<double> p({1}, 1.0);
    AdamState<double> st;
    AdamConfig cfg;
    adam_step<double>({&p}, {Tensor<double>({1}, g)}, st, cfg);
    const double expected = 1.0 - cfg.lr * g / (std::abs(g) + cfg.eps);
    EXPECT_NEAR(p[0], expected, 1e-15);
    EXPECT_NEAR(1.0 - p[0], cfg.lr * (g > 0 ? 1 : -1), 1e-8);
  }
}

TEST(Adam, DefaultsMatchPaperBetas) {
  AdamConfig cfg;
  EXPECT_EQ(cfg.beta1, 0.9);
  EXPECT_EQ(cfg.beta2, 0.999);
  EXPECT_EQ(cfg.lr, 1e-4);
}

TEST(Adam, NonFiniteGradientRejectsWholeStep) {
  Tensor<double> p1({2}, 1.0), p2({2}, 2.0);
  AdamState<double> st;
  Tensor<double> g1({2}, 0.5), g2({2}, std::vector<double>{0.1, NAN});
  EXPECT_THROW(adam_step<double>({&p1, &p2}, {g1, g2}, st, AdamConfig{}, {"a", "b"}), NonFiniteError);
  EXPECT_EQ(p1[0], 1.0);
  EXPECT_EQ(p2[1], 2.0);
  EXPECT_EQ(st.step, 0);
}
