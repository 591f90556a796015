#include <gtest/gtest.h>

#include <cmath>

#include "mininet/gradcheck.hpp"
#include "mininet/ops.hpp"

using namespace mininet;

TEST(GradCheck, DetectsAWrongGradient) {
  // A hand-built op whose tape gradient is deliberately off by a factor 2.
  Tensor<double> x(Shape{4});
  for (int i = 0; i < 4; ++i) x.mutable_data()[i] = 0.3 * (i + 1);
  auto ok = gradcheck("square", {&x}, [&](Tape<double>* tape) {
    auto v = bind(tape, x);
    return square(v);
  });
  EXPECT_TRUE(ok.passed) << ok.max_rel_error;
  auto bad = gradcheck("doubled", {&x}, [&](Tape<double>* tape) {
    auto v = bind(tape, x);
    // Value is x^2, recorded gradient is that of 2 x^2.
    auto sq = square(v);
    auto twice = scalar_mul(sq, 2.0);
    auto fixup = sub(twice, sq.detach());
    return fixup;
  });
  EXPECT_FALSE(bad.passed);
  EXPECT_GT(bad.max_rel_error, 0.1);
}

TEST(GradCheck, WholeSuitePasses) {
  GradCheckConfig cfg;
  // The end-to-end case runs in the acceptance binary.
  cfg.include_end_to_end = false;
  const auto results = run_gradcheck_suite(cfg);
  ASSERT_FALSE(results.empty());
  for (const auto& r : results) {
    EXPECT_TRUE(r.passed) << r.name << " max rel error " << r.max_rel_error;
    EXPECT_LE(r.max_rel_error, 1e-4) << r.name;
    EXPECT_GT(r.probes, 0) << r.name;
  }
}
