#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <vector>

#include "ccf/numerics/rng.hpp"
#include "ccf/numerics/special.hpp"
#include "ccf/numerics/tensor.hpp"

namespace ccf {
namespace {

// Known-answer vectors for Philox4x32-10 published with the Random123 library.
TEST(Philox, KnownAnswers) {
  using detail::philox4x32;
  EXPECT_EQ(philox4x32({0, 0, 0, 0}, {0, 0}),
            (std::array<std::uint32_t, 4>{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}),
            (std::array<std::uint32_t, 4>{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}),
            (std::array<std::uint32_t, 4>{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(RngStream, ReplayIsIdentical) {
  RngStream a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  RngStream c(42, 7), d(42, 7);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(c.normal(), d.normal());
}

TEST(RngStream, StreamsAndSplitsDiffer) {
  std::set<std::uint64_t> firsts;
  const RngStream root(1, 0);
  for (std::uint64_t s = 0; s < 200; ++s) {
    RngStream r(1, s);
    firsts.insert(r.next_u64());
    RngStream c = root.split(s);
    firsts.insert(c.next_u64());
  }
  EXPECT_EQ(firsts.size(), 400u);
  EXPECT_EQ(root.split(3).stream_id(), root.split(3).stream_id());
}

TEST(RngStream, UniformRangeAndMoments) {
  RngStream r(5, 1);
  const int n = 200000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  // mean 1/2, sd of the mean sqrt(1/12 / n)
  EXPECT_NEAR(sum / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST(RngStream, UniformIndexCoversRangeEvenly) {
  RngStream r(9, 2);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[r.uniform_index(7)];
  // chi-square with 6 dof; 99.9th percentile is 22.46
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 7.0) * (c - n / 7.0) / (n / 7.0);
  EXPECT_LT(chi2, 22.46);
  EXPECT_THROW(r.uniform_index(0), InvalidParameter);
}

TEST(GaussianSample, ZeroVariance) {
  RngStream r(3, 0);
  const Tensor t = gaussian_sample(r, 0.0, 0.0, 3);
  for (double v : t.data()) EXPECT_EQ(v, 0.0);
}

TEST(GaussianSample, MeanWithinStandardErrorBound) {
  RngStream r(11, 0);
  const Tensor t = gaussian_sample(r, 5.0, 1.0, 1'000'000);
  double s = 0.0, s2 = 0.0;
  for (double v : t.data()) {
    s += v;
    s2 += (v - 5.0) * (v - 5.0);
  }
  EXPECT_NEAR(s / 1e6, 5.0, 4.0 / 1000.0);
  EXPECT_NEAR(s2 / 1e6, 1.0, 0.01);
}

TEST(GaussianSample, ReplayAndErrors) {
  RngStream a(8, 8), b(8, 8);
  const Tensor x = gaussian_sample(a, 1.0, 2.0, 50), y = gaussian_sample(b, 1.0, 2.0, 50);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(x[i], y[i]);
  EXPECT_THROW(gaussian_sample(a, 0.0, -1.0, 1), InvalidParameter);
  EXPECT_EQ(gaussian_sample(a, 0.0, 1.0, 0).size(), 0u);
}

// Reference values computed with mpmath (40 digits) before the build.
TEST(StdNormalCdf, MatchesArbitraryPrecisionOracle) {
  const std::pair<double, double> ref[] = {
      {-8.0, 6.2209605742717841e-16}, {-5.0, 2.8665157187919391e-7}, {-3.0, 0.0013498980316300945},
      {-2.0, 0.022750131948179207},   {-1.0, 0.15865525393145705},   {-0.5, 0.3085375387259869},
      {0.0, 0.5},                     {0.3, 0.61791142218895264},    {0.5, 0.6914624612740131},
      {1.0, 0.84134474606854295},     {1.5, 0.93319279873114193},    {2.0, 0.97724986805182079},
      {3.0, 0.99865010196836991},     {5.0, 0.99999971334842812},    {8.0, 0.99999999999999938},
      {std::numbers::sqrt2, 0.92135039647485743}};
  for (const auto& [x, phi] : ref) EXPECT_NEAR(std_normal_cdf(x), phi, 1e-10) << "x=" << x;
  EXPECT_NEAR(std_normal_cdf(1.0), 0.841344746, 1e-9);
}

TEST(StdNormalCdf, ReflectionMonotoneSaturation) {
  double prev = 0.0;
  for (double x = -8.0; x <= 8.0; x += 0.01) {
    const double v = std_normal_cdf(x);
    ASSERT_GE(v, prev);
    ASSERT_NEAR(std_normal_cdf(-x), 1.0 - v, 1e-12);
    prev = v;
  }
  EXPECT_EQ(std_normal_cdf(-41.0), 0.0);
  EXPECT_EQ(std_normal_cdf(41.0), 1.0);
  EXPECT_EQ(std_normal_cdf(0.0), 0.5);
}

TEST(StdNormalCdf, AgreesWithLibmErfc) {
  for (double x = -8.0; x <= 8.0; x += 0.037) {
    EXPECT_NEAR(std_normal_cdf(x), 0.5 * std::erfc(-x / std::numbers::sqrt2), 1e-15) << x;
  }
}

TEST(StdNormalCdf, MonteCarloCdf) {
  RngStream r(21, 0);
  const int n = 1'000'000;
  const double xs[] = {-2.0, -1.0, 0.0, 1.0, 2.0};
  int counts[5] = {};
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    for (int k = 0; k < 5; ++k) counts[k] += z <= xs[k];
  }
  for (int k = 0; k < 5; ++k) {
    const double p = std_normal_cdf(xs[k]);
    EXPECT_NEAR(counts[k] / double(n), p, 4.0 * std::sqrt(p * (1 - p) / n)) << xs[k];
  }
}

TEST(Cosine, Examples) {
  EXPECT_EQ(cosine_similarity(Tensor::vector({1, 0}), Tensor::vector({0, 1})), 0.0);
  EXPECT_NEAR(cosine_similarity(Tensor::vector({1, 0}), Tensor::vector({1, 1})), 0.70710678, 1e-8);
  EXPECT_EQ(cosine_similarity(Tensor::vector({0, 0}), Tensor::vector({1, 2})), 0.0);
  EXPECT_THROW(cosine_similarity(Tensor::vector({1}), Tensor::vector({1, 2})), ShapeError);
}

TEST(Cosine, SelfAndScaled) {
  RngStream r(4, 4);
  for (int t = 0; t < 50; ++t) {
    const Tensor a = gaussian_sample(r, 0.0, 1.0, 8);
    const double c = r.uniform(-3.0, 3.0);
    EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-12);
    EXPECT_NEAR(cosine_similarity(a, a.map([c](double v) { return c * v; })), c > 0 ? 1.0 : -1.0, 1e-12);
  }
}

TEST(Tensor, ShapeInvariantAndReshape) {
  const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m.size(), 6u);
  EXPECT_EQ(m(1, 0), 4.0);
  const Tensor v = m.reshaped({6});
  const Tensor doubled = m.map([](double x) { return 2 * x; }).reshaped({6});
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(doubled[i], 2 * v[i]);
  EXPECT_THROW(m.reshaped({4}), ShapeError);
}

TEST(Tensor, AffineMatchesHandComputation) {
  const Tensor x = Tensor::matrix(1, 2, {1, 2});
  const Tensor w = Tensor::matrix(2, 2, {3, -1, 0, 1});
  const Tensor y = affine(x, w, Tensor::vector({0.5, 0}));
  EXPECT_EQ(y(0, 0), 1.5);
  EXPECT_EQ(y(0, 1), 2.0);
}

}  // namespace
}  // namespace ccf
