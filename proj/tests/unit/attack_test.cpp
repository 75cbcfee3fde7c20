#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ccf/attack/attack.hpp"
#include "ccf/model/backward.hpp"
#include "ccf/synthetic/verify.hpp"

namespace ccf {
namespace {

AttackConfig linf(double eps, double alpha, int steps = 10) {
  AttackConfig c;
  c.norm = Norm::linf;
  c.epsilon = eps;
  c.step_size = alpha;
  c.steps = steps;
  return c;
}

TEST(Project, InsideBallUnchanged) {
  const Tensor x0 = Tensor::matrix(1, 2, {0, 0});
  const Tensor x = Tensor::matrix(1, 2, {0.05, -0.02});
  const Tensor p = project(x0, x, linf(0.1, 0.1));
  EXPECT_EQ(p[0], 0.05);
  EXPECT_EQ(p[1], -0.02);
}

TEST(Project, LinfClamps) {
  const Tensor p = project(Tensor::matrix(1, 2, {0, 0}), Tensor::matrix(1, 2, {0.5, -0.5}), linf(0.1, 0.1));
  EXPECT_EQ(p[0], 0.1);
  EXPECT_EQ(p[1], -0.1);
}

TEST(Project, L2Rescales) {
  AttackConfig c = linf(1.0, 0.1);
  c.norm = Norm::l2;
  const Tensor p = project(Tensor::matrix(1, 2, {0, 0}), Tensor::matrix(1, 2, {3, 4}), c);
  EXPECT_NEAR(p[0], 0.6, 1e-15);
  EXPECT_NEAR(p[1], 0.8, 1e-15);
}

TEST(Project, InputBounds) {
  AttackConfig c = linf(1.0, 0.1);
  c.input_bounds = std::pair{0.0, 1.0};
  const Tensor p = project(Tensor::matrix(1, 2, {0.1, 0.9}), Tensor::matrix(1, 2, {-0.5, 1.5}), c);
  EXPECT_EQ(p[0], 0.0);
  EXPECT_EQ(p[1], 1.0);
}

TEST(Pgd, ZeroEpsilonReturnsInput) {
  RngStream r(1, 0);
  const auto m = Classifier::mlp(3, {4}, 2, r);
  const Tensor x = Tensor::matrix(2, 3, {1, 2, 3, -1, 0, 1});
  AttackConfig c = AttackConfig::pgd_default(Norm::linf, 0.0);
  const std::vector<std::size_t> y{0, 1};
  const Tensor adv = pgd(m, x, y, c, r);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(adv[i], x[i]);
  const Tensor f = fgsm(m, x, y, AttackConfig::fast_default(Norm::linf, 0.0), r);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(f[i], x[i]);
}

TEST(Pgd, SingleSignStepOnLinearModel) {
  // Rows (1, -2) and (0, 0): d CE / dx for label 0 is (p0 - 1) * (1, -2).
  const auto m = Classifier::linear(Tensor::matrix(2, 2, {1, -2, 0, 0}));
  const Tensor x = Tensor::matrix(1, 2, {0.3, 0.4});
  const double z0 = 0.3 - 0.8;
  const double p0 = std::exp(z0) / (std::exp(z0) + 1.0);
  const double g[2] = {(p0 - 1) * 1.0, (p0 - 1) * -2.0};
  RngStream r(0, 0);
  const std::vector<std::size_t> y{0};
  const Tensor adv = pgd(m, x, y, linf(0.5, 0.1, 1), r);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(adv[i], x[i] + 0.1 * (g[i] > 0 ? 1 : -1), 1e-15);
}

TEST(Pgd, ReachesAnalyticWorstCaseOnSyntheticModel) {
  using namespace synthetic;
  const auto p = SyntheticParams::verification_default(0.2);
  const LinearHypothesis w{1.3, 0.7};
  RngStream r(5, 5);
  const auto s = draw_sample(p, 0, r);
  const auto d = worst_case_delta(p, 0);
  const double e = p.epsilon();
  const Perturbation expected{-e, e, e, e, -e, -e};
  EXPECT_EQ(d, expected);
  const auto flat = s.flat();
  const Tensor x = Tensor::matrix(1, 6, std::vector<double>(flat.begin(), flat.end()));
  const std::vector<std::size_t> y{0};
  const Tensor adv = pgd(Classifier::linear(hypothesis_head(w)), x, y, AttackConfig::pgd_default(Norm::linf, e), r);
  Perturbation got{};
  for (std::size_t k = 0; k < 6; ++k) got[k] = adv[k] - flat[k];
  EXPECT_NEAR(inner_loss(w, s, got), inner_loss(w, s, d), 1e-6);
}

TEST(Fgsm, EqualsOneStepPgdWithSameRngState) {
  RngStream init(3, 3);
  const auto m = Classifier::mlp(4, {8}, 3, init);
  Tensor x({5, 4});
  for (double& v : x.data()) v = init.normal();
  const std::vector<std::size_t> y{0, 1, 2, 0, 1};
  AttackConfig c = AttackConfig::fast_default(Norm::linf, 0.3);
  RngStream a(8, 1), b(8, 1);
  const Tensor f = fgsm(m, x, y, c, a);
  c.steps = 1;
  const Tensor p = pgd(m, x, y, c, b);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(f[i], p[i]);
}

TEST(Attack, LossAscentOnLinearModels) {
  RngStream r(10, 0);
  for (int t = 0; t < 200; ++t) {
    Tensor W({3, 4});
    for (double& v : W.data()) v = r.normal();
    const auto m = Classifier::linear(W);
    Tensor x({1, 4});
    for (double& v : x.data()) v = r.normal();
    const std::vector<std::size_t> y{r.uniform_index(3)};
    AttackConfig c = AttackConfig::fast_default(t % 2 ? Norm::l2 : Norm::linf, r.uniform(0.01, 1.0));
    c.random_start = false;
    const Tensor adv = fgsm(m, x, y, c, r);
    const Targets tg = Targets::hard(y);
    EXPECT_GE(loss_value(m, adv, tg, CrossEntropy{}), loss_value(m, x, tg, CrossEntropy{}) - 1e-12);
  }
}

TEST(Attack, BallContainmentAndBounds) {
  RngStream r(12, 0);
  const auto m = Classifier::mlp(5, {8, 8}, 3, r);
  for (int t = 0; t < 1000; ++t) {
    Tensor x({1, 5});
    for (double& v : x.data()) v = r.uniform(0.0, 1.0);
    AttackConfig c = t % 2 ? AttackConfig::pgd_default(Norm::l2, r.uniform(0.0, 2.0))
                           : AttackConfig::fast_default(Norm::linf, r.uniform(0.0, 0.5));
    c.random_start = t % 3 == 0;
    c.input_bounds = std::pair{0.0, 1.0};
    const std::vector<std::size_t> y{r.uniform_index(3)};
    const Tensor adv = pgd(m, x, y, c, r);
    double linf_dist = 0.0, l2 = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      ASSERT_GE(adv[i], 0.0);
      ASSERT_LE(adv[i], 1.0);
      linf_dist = std::max(linf_dist, std::abs(adv[i] - x[i]));
      l2 += (adv[i] - x[i]) * (adv[i] - x[i]);
    }
    ASSERT_LE(c.norm == Norm::linf ? linf_dist : std::sqrt(l2), c.epsilon + 1e-9);
  }
}

TEST(Attack, Deterministic) {
  RngStream init(13, 0);
  const auto m = Classifier::mlp(4, {6}, 3, init);
  Tensor x({3, 4});
  for (double& v : x.data()) v = init.normal();
  const std::vector<std::size_t> y{0, 1, 2};
  AttackConfig c = AttackConfig::pgd_default(Norm::l2, 0.5);
  c.random_start = true;
  RngStream a(1, 2), b(1, 2);
  const Tensor u = pgd(m, x, y, c, a), v = pgd(m, x, y, c, b);
  for (std::size_t i = 0; i < u.size(); ++i) EXPECT_EQ(u[i], v[i]);
}

TEST(AttackConfig, ValidationAndDefaults) {
  EXPECT_THROW(linf(-0.1, 0.1).validate(), InvalidParameter);
  EXPECT_THROW(linf(0.1, 0.0).validate(), InvalidParameter);
  EXPECT_THROW(linf(0.1, 0.1, 0).validate(), InvalidParameter);
  const auto d = AttackConfig::pgd_default(Norm::linf, 0.4);
  EXPECT_EQ(d.steps, 10);
  EXPECT_DOUBLE_EQ(d.step_size, 0.1);
  EXPECT_FALSE(d.random_start);
  EXPECT_DOUBLE_EQ(AttackConfig::pgd_default(Norm::l2, 0.4).step_size, 0.05);
  const auto f = AttackConfig::fast_default(Norm::linf, 0.4);
  EXPECT_TRUE(f.random_start);
  EXPECT_DOUBLE_EQ(f.step_size, 0.4);
}

}  // namespace
}  // namespace ccf
