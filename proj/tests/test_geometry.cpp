#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "mininet/geometry.hpp"
#include "mininet/ops.hpp"
#include "mininet/posenet.hpp"

using namespace mininet;

namespace {

Tensor<double> uniform(Shape s, std::uint64_t seed, double lo, double hi) {
  Tensor<double> t(std::move(s));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.mutable_data()) v = d(rng);
  return t;
}

const Intrinsics kCam{40.0, 38.0, 15.5, 11.5};

}  // namespace

TEST(DispToDepth, EndpointsAndInversion) {
  Tensor<double> p({3}, {0.0, 1.0, 0.099});
  auto d = disp_to_depth(p);
  EXPECT_DOUBLE_EQ(d[0], 100.0);
  EXPECT_NEAR(d[1], 1.0 / 10.01, 1e-15);
  EXPECT_NEAR(d[2], 1.0, 1e-12);
}

TEST(Project, IdentityTransformReturnsGridExactly) {
  auto depth = uniform({2, 1, 24, 32}, 1, 0.5, 50.0);
  auto proj = project(depth, Tensor<double>({2, 6}), kCam);
  auto grid = pixel_grid<double>(2, 24, 32);
  for (std::int64_t i = 0; i < grid.size(); ++i) ASSERT_EQ(proj.coords[i], grid[i]) << i;
  for (auto v : proj.in_front.data()) EXPECT_EQ(v, 1.0);
}

TEST(Project, PureTranslationShiftsByFocalTimesBaselineOverDepth) {
  for (double z : {2.0, 7.5, 30.0}) {
    for (double tx : {0.1, -0.35}) {
      Tensor<double> depth({1, 1, 24, 32}, z);
      Tensor<double> pose({1, 6}, {0, 0, 0, tx, 0, 0});
      auto proj = project(depth, pose, kCam);
      for (std::int64_t i = 0; i < 24; ++i)
        for (std::int64_t j = 0; j < 32; ++j) {
          EXPECT_NEAR(proj.coords.at(0, 0, i, j), j + kCam.fx * tx / z, 1e-9);
          EXPECT_NEAR(proj.coords.at(0, 1, i, j), static_cast<double>(i), 1e-9);
        }
    }
  }
}

TEST(Project, DepthAndTranslationScaleTogether) {
  auto depth = uniform({1, 1, 8, 8}, 2, 1.0, 10.0);
  Tensor<double> pose({1, 6}, {0.02, -0.01, 0.03, 0.2, -0.1, 0.3});
  auto a = project(depth, pose, kCam);
  auto depth3 = scalar_mul(depth, 3.0);
  Tensor<double> pose3({1, 6}, {0.02, -0.01, 0.03, 0.6, -0.3, 0.9});
  auto b = project(depth3, pose3, kCam);
  for (std::int64_t i = 0; i < a.coords.size(); ++i) EXPECT_NEAR(a.coords[i], b.coords[i], 1e-9);
}

TEST(Project, FixedTransformMatchesPoseTensor) {
  auto depth = uniform({1, 1, 8, 8}, 3, 1.0, 10.0);
  Pose6DoF p{{0.05, 0.01, -0.02}, {0.1, 0.0, -0.2}};
  Tensor<double> pose({1, 6}, {0.05, 0.01, -0.02, 0.1, 0.0, -0.2});
  auto a = project(depth, pose, kCam);
  auto b = project(depth, std::vector<RigidTransform>{pose_to_matrix(p)}, kCam);
  for (std::int64_t i = 0; i < a.coords.size(); ++i) EXPECT_NEAR(a.coords[i], b.coords[i], 1e-12);
}

TEST(Project, BackprojectReprojectRecoversGrid) {
  // Lift each pixel with K^-1 and depth, then project with K.
  auto depth = uniform({1, 1, 10, 12}, 4, 0.5, 20.0);
  for (std::int64_t i = 0; i < 10; ++i)
    for (std::int64_t j = 0; j < 12; ++j) {
      const double z = depth.at(0, 0, i, j);
      const double X = (j - kCam.cx) / kCam.fx * z, Y = (i - kCam.cy) / kCam.fy * z;
      EXPECT_NEAR(kCam.fx * X / z + kCam.cx, j, 1e-5);
      EXPECT_NEAR(kCam.fy * Y / z + kCam.cy, i, 1e-5);
    }
  auto proj = project(depth, std::vector<RigidTransform>{RigidTransform::identity()}, kCam);
  auto grid = pixel_grid<double>(1, 10, 12);
  for (std::int64_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(proj.coords[i], grid[i], 1e-5);
}

TEST(Project, PointsBehindCameraAreFlagged) {
  Tensor<double> depth({1, 1, 4, 4}, 1.0);
  Tensor<double> pose({1, 6}, {0, 0, 0, 0, 0, -2.0});
  auto proj = project(depth, pose, kCam);
  for (auto v : proj.in_front.data()) EXPECT_EQ(v, 0.0);
}

TEST(InverseWarp, IdentityGridIsExact) {
  auto img = uniform({2, 3, 6, 9}, 5, 0, 1);
  auto w = inverse_warp(img, pixel_grid<double>(2, 6, 9));
  for (std::int64_t i = 0; i < img.size(); ++i) ASSERT_EQ(w.image[i], img[i]);
  for (auto v : w.valid.data()) EXPECT_EQ(v, 1.0);
}

TEST(InverseWarp, IntegerShiftHitsNeighbour) {
  auto img = uniform({1, 3, 6, 9}, 6, 0, 1);
  auto grid = pixel_grid<double>(1, 6, 9);
  auto g = grid.mutable_data();
  for (std::int64_t i = 0; i < 54; ++i) g[static_cast<std::size_t>(i)] += 1.0;
  auto w = inverse_warp(img, grid);
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t i = 0; i < 6; ++i)
      for (std::int64_t j = 0; j + 1 < 9; ++j) EXPECT_EQ(w.image.at(0, c, i, j), img.at(0, c, i, j + 1));
  for (std::int64_t i = 0; i < 6; ++i) EXPECT_EQ(w.valid.at(0, 0, i, 8), 0.0);
}

TEST(InverseWarp, HalfPixelShiftOnRamp) {
  Tensor<double> ramp({1, 1, 4, 8});
  auto r = ramp.mutable_data();
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 8; ++j) r[static_cast<std::size_t>(i * 8 + j)] = static_cast<double>(j);
  auto grid = pixel_grid<double>(1, 4, 8);
  auto g = grid.mutable_data();
  for (std::int64_t i = 0; i < 32; ++i) g[static_cast<std::size_t>(i)] += 0.5;
  auto w = inverse_warp(ramp, grid);
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j + 1 < 8; ++j) EXPECT_NEAR(w.image.at(0, 0, i, j), j + 0.5, 1e-15);
}

TEST(InverseWarp, TranslationEquivariantForIntegerShifts) {
  auto img = uniform({1, 1, 10, 12}, 7, 0, 1);
  auto coords = uniform({1, 2, 10, 12}, 8, 3.0, 6.0);
  auto shifted = coords.clone();
  auto s = shifted.mutable_data();
  for (std::int64_t i = 0; i < 120; ++i) s[static_cast<std::size_t>(i)] += 2.0;
  for (std::int64_t i = 120; i < 240; ++i) s[static_cast<std::size_t>(i)] += 1.0;
  // Shifting the sample points by (2, 1) equals sampling the image moved by (-2, -1).
  Tensor<double> moved({1, 1, 10, 12});
  auto m = moved.mutable_data();
  for (std::int64_t i = 0; i < 10; ++i)
    for (std::int64_t j = 0; j < 12; ++j)
      m[static_cast<std::size_t>(i * 12 + j)] = img.at(0, 0, std::min<std::int64_t>(i + 1, 9), std::min<std::int64_t>(j + 2, 11));
  auto a = inverse_warp(img, shifted), b = inverse_warp(moved, coords);
  for (std::int64_t i = 0; i < 120; ++i) EXPECT_NEAR(a.image[i], b.image[i], 1e-14);
}

TEST(InverseWarp, OutOfFrameIsClampedAndMasked) {
  auto img = uniform({1, 1, 4, 4}, 9, 0, 1);
  Tensor<double> coords({1, 2, 4, 4}, -3.0);
  auto w = inverse_warp(img, coords);
  for (std::int64_t i = 0; i < 16; ++i) {
    EXPECT_EQ(w.image[i], img[0]);
    EXPECT_EQ(w.valid[i], 0.0);
  }
}

TEST(SynthesizeView, IdentityPoseGivesZeroResidual) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto img = uniform({1, 3, 16, 24}, 10 + seed, 0, 1);
    auto depth = uniform({1, 1, 16, 24}, 20 + seed, 0.1, 80.0);
    auto w = synthesize_view(img, depth, Tensor<double>({1, 6}), kCam);
    for (std::int64_t i = 0; i < img.size(); ++i) ASSERT_EQ(w.image[i], img[i]);
  }
}

TEST(Intrinsics, ResizeAndFlip) {
  Intrinsics k{100, 100, 63.5, 31.5};
  auto r = k.resized(128, 64, 64, 32);
  EXPECT_DOUBLE_EQ(r.fx, 50);
  EXPECT_DOUBLE_EQ(r.cx, 31.5);
  EXPECT_DOUBLE_EQ(r.cy, 15.5);
  auto f = Intrinsics{100, 100, 40, 31.5}.flipped(128);
  EXPECT_DOUBLE_EQ(f.cx, 87);
  EXPECT_THROW((Intrinsics{0, 1, 0, 0}.validate()), ConfigError);
}

TEST(Intrinsics, FileRoundTrip) {
  auto path = (std::filesystem::temp_directory_path() / "mininet_test_intrinsics.txt").string();
  write_intrinsics(path, {{120.5, 118.25, 63.5, 31.75}, 128, 64});
  auto cam = read_intrinsics(path);
  EXPECT_EQ(cam.k.fx, 120.5);
  EXPECT_EQ(cam.k.cy, 31.75);
  EXPECT_EQ(cam.width, 128);
  EXPECT_EQ(cam.height, 64);
  std::filesystem::remove(path);
}

TEST(Rodrigues, JacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  for (int trial = 0; trial < 20; ++trial) {
    Vec3 w{u(rng), u(rng), u(rng)};
    if (trial == 0) w = {0, 0, 0};
    auto jac = rodrigues_jacobian(w);
    const double h = 1e-6;
    for (int k = 0; k < 3; ++k) {
      Vec3 wp = w, wm = w;
      wp[k] += h;
      wm[k] -= h;
      auto rp = rodrigues(wp), rm = rodrigues(wm);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(jac[k][i][j], (rp[i][j] - rm[i][j]) / (2 * h), 1e-8);
    }
  }
}

TEST(Rodrigues, LogInvertsExp) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int trial = 0; trial < 100; ++trial) {
    Vec3 w{u(rng), u(rng), u(rng)};
    auto back = rotation_log(rodrigues(w));
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(back[i], w[i], 1e-9);
  }
  auto near_pi = rotation_log(rodrigues({0, 3.14159, 0}));
  EXPECT_NEAR(std::abs(near_pi[1]), 3.14159, 1e-6);
}

TEST(RigidTransform, ComposeAndInvert) {
  auto a = pose_to_matrix({{0.1, -0.2, 0.3}, {1, 2, 3}});
  auto b = pose_to_matrix({{-0.3, 0.1, 0.05}, {-1, 0.5, 2}});
  Vec3 p{0.3, -0.7, 4.0};
  auto ab = (a * b).apply(p);
  auto ab2 = a.apply(b.apply(p));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(ab[i], ab2[i], 1e-12);
  auto back = a.inverse().apply(a.apply(p));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(back[i], p[i], 1e-12);
}
