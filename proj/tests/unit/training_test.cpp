#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ccf/data/planted.hpp"
#include "ccf/training/experiment.hpp"
#include "ccf/training/records.hpp"
#include "ccf/training/train.hpp"

namespace ccf {
namespace {

PlantedData small_data() {
  PlantedSpec s;
  s.classes = 3;
  s.replication = 1;
  s.noise_dims = 4;
  s.n_train = 40;
  s.n_test = 20;
  s.seed = 11;
  return generate_planted(s);
}

TrainConfig small_config(TrainMode mode, double eps) {
  TrainConfig c;
  c.epochs = 4;
  c.batch_size = 16;
  c.mode = mode;
  c.attack = AttackConfig::pgd_default(Norm::linf, eps);
  c.attack.steps = 3;
  c.seed = 5;
  return c;
}

Classifier small_model(const Dataset& d) { return MlpSpec{{8}, false}.build(d.dim(), d.class_count, 3); }

void expect_same_run(const RunRecord& a, const RunRecord& b) {
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(a.rows[i], b.rows[i]) << "epoch " << i;
  EXPECT_EQ(a.best_epoch, b.best_epoch);
  const auto pa = a.last.parameters(), pb = b.last.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k) {
    for (std::size_t i = 0; i < pa[k]->size(); ++i) ASSERT_EQ((*pa[k])[i], (*pb[k])[i]);
  }
}

TEST(Train, ZeroEpochsKeepsInitialModel) {
  const auto d = small_data();
  const auto m = small_model(d.train);
  auto cfg = small_config(TrainMode::at, 0.2);
  cfg.epochs = 0;
  const auto rec = train(m, d.train, d.test, cfg);
  EXPECT_TRUE(rec.rows.empty());
  EXPECT_FALSE(rec.best_epoch);
  const Tensor a = m.forward(d.test.inputs), b = rec.last.forward(d.test.inputs);
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]);
}

TEST(Train, ZeroEpsilonAdversarialEqualsStandard) {
  const auto d = small_data();
  const auto m = small_model(d.train);
  expect_same_run(train(m, d.train, d.test, small_config(TrainMode::at, 0.0)),
                  train(m, d.train, d.test, small_config(TrainMode::standard, 0.0)));
}

TEST(Train, ZeroBetaLabelSmoothingEqualsAt) {
  const auto d = small_data();
  const auto m = small_model(d.train);
  auto ls = small_config(TrainMode::at_ls, 0.3);
  ls.ls_beta = 0.0;
  expect_same_run(train(m, d.train, d.test, small_config(TrainMode::at, 0.3)), train(m, d.train, d.test, ls));
}

TEST(Train, ZeroMixDistillationEqualsAt) {
  const auto d = small_data();
  const auto m = small_model(d.train);
  auto kd = small_config(TrainMode::at_kd, 0.3);
  kd.kd_mix = 0.0;
  kd.kd_temperature = 2.0;
  kd.teacher = std::make_shared<const Classifier>(MlpSpec{{8}, false}.build(d.train.dim(), 3, 99));
  expect_same_run(train(m, d.train, d.test, small_config(TrainMode::at, 0.3)), train(m, d.train, d.test, kd));
}

TEST(Train, DeterministicAndBestRowIsMaximal) {
  const auto d = small_data();
  const auto m = small_model(d.train);
  const auto cfg = small_config(TrainMode::fast_at, 0.3);
  const auto a = train(m, d.train, d.test, cfg), b = train(m, d.train, d.test, cfg);
  expect_same_run(a, b);
  ASSERT_TRUE(a.best_epoch);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].epoch, i);
    EXPECT_LE(a.rows[i].test_robust_acc, a.best_row()->test_robust_acc);
    if (i < *a.best_epoch) {
      EXPECT_LT(a.rows[i].test_robust_acc, a.best_row()->test_robust_acc);
    }
    EXPECT_LE(a.rows[i].test_robust_acc, a.rows[i].test_clean_acc);
    EXPECT_FALSE(std::isnan(a.rows[i].cas));
  }
}

TEST(Train, ErrorsAndObserver) {
  const auto d = small_data();
  const auto m = small_model(d.train);
  auto kd = small_config(TrainMode::at_kd, 0.3);
  EXPECT_THROW(train(m, d.train, d.test, kd), InvalidParameter);
  Dataset empty;
  empty.class_count = 3;
  EXPECT_THROW(train(m, empty, d.test, small_config(TrainMode::at, 0.1)), InvalidParameter);
  auto bad = small_config(TrainMode::at, 0.1);
  bad.lr.decay_fractions = {0.75, 0.5};
  EXPECT_THROW(train(m, d.train, d.test, bad), InvalidParameter);
  std::size_t seen = 0;
  train(m, d.train, d.test, small_config(TrainMode::standard, 0.0),
        [&](const EpochRow& r, const Classifier&) { EXPECT_EQ(r.epoch, seen++); });
  EXPECT_EQ(seen, 4u);
}

TEST(Train, DivergenceAbortsWithEpochAndStep) {
  const auto d = small_data();
  const auto m = small_model(d.train);
  auto cfg = small_config(TrainMode::standard, 0.0);
  cfg.lr.initial = 1e6;
  cfg.momentum = 0.0;
  try {
    train(m, d.train, d.test, cfg);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_LT(e.epoch(), cfg.epochs);
  }
}

TEST(LrAt, StepSchedule) {
  TrainConfig c;
  EXPECT_DOUBLE_EQ(lr_at(0, c), 0.1);
  EXPECT_DOUBLE_EQ(lr_at(99, c), 0.1);
  EXPECT_NEAR(lr_at(120, c), 0.01, 1e-15);
  EXPECT_NEAR(lr_at(160, c), 0.001, 1e-15);
  c.epochs = 60;
  EXPECT_NEAR(lr_at(36, c), 0.01, 1e-15);
  EXPECT_NEAR(lr_at(48, c), 0.001, 1e-15);
}

TEST(Evaluate, LabelIndependentPredictorNearChance) {
  // Labels drawn independently of the inputs: any model scores 1/K in expectation.
  RngStream r(31, 0);
  Dataset d;
  d.class_count = 4;
  d.inputs = Tensor({2000, 6});
  for (double& v : d.inputs.data()) v = r.normal();
  for (std::size_t i = 0; i < 2000; ++i) d.labels.push_back(i % 4);
  const auto m = MlpSpec{}.build(6, 4, 8);
  const auto e = evaluate(m, d, std::nullopt, RngStream(1, 1));
  EXPECT_NEAR(e.clean_acc, 0.25, 0.05);
  EXPECT_EQ(e.robust_acc, e.clean_acc);
  EXPECT_EQ(e.samples, 2000u);
  const auto z = evaluate(m, d, AttackConfig::pgd_default(Norm::linf, 0.0), RngStream(1, 1));
  EXPECT_EQ(z.robust_acc, z.clean_acc);
  const auto a = evaluate(m, d, AttackConfig::pgd_default(Norm::l2, 0.5), RngStream(1, 1));
  EXPECT_LE(a.robust_acc, a.clean_acc);
}

TEST(Evaluate, MarginCertificate) {
  // Identity head on points 2 e_y: the margin is 2 and an linf step of 0.4
  // can change two logits by at most 0.4 each.
  const auto m = Classifier::linear(Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  Dataset d;
  d.class_count = 3;
  d.inputs = Tensor({30, 3});
  for (std::size_t i = 0; i < 30; ++i) {
    d.labels.push_back(i % 3);
    d.inputs(i, i % 3) = 2.0;
  }
  auto attack = AttackConfig::pgd_default(Norm::linf, 0.4);
  attack.random_start = true;
  const auto e = evaluate(m, d, attack, RngStream(2, 2));
  EXPECT_EQ(e.clean_acc, 1.0);
  EXPECT_EQ(e.robust_acc, 1.0);
  const auto broken = evaluate(m, d, AttackConfig::pgd_default(Norm::linf, 1.5), RngStream(2, 2));
  EXPECT_EQ(broken.robust_acc, 0.0);
  EXPECT_THROW(evaluate(m, Dataset{}, std::nullopt, RngStream(0, 0)), InvalidParameter);
}

TEST(Records, TsvRoundTrip) {
  std::vector<EpochRow> rows(2);
  rows[0] = {0, 0.1, 1.0 / 3.0, 0.5, 0.75, 0.625, 2.5};
  rows[1] = {1, 0.01, 0.2, 0.6, 0.8, 0.7, std::numeric_limits<double>::quiet_NaN()};
  std::stringstream ss;
  write_run_records(ss, rows);
  EXPECT_EQ(read_run_records(ss), rows);
  std::stringstream bad("epoch\tlr\n");
  EXPECT_THROW(read_run_records(bad), ParseError);
}

TEST(DetectCollapse, Examples) {
  auto rows_with = [](std::vector<double> ra) {
    std::vector<EpochRow> rows(ra.size());
    for (std::size_t i = 0; i < ra.size(); ++i) rows[i].epoch = i, rows[i].test_robust_acc = ra[i];
    return rows;
  };
  EXPECT_EQ(detect_collapse(rows_with({0.1, 0.3, 0.35, 0.02, 0.01})), 3u);
  EXPECT_FALSE(detect_collapse(rows_with({0.01, 0.02, 0.3, 0.25})));
  EXPECT_FALSE(detect_collapse(rows_with({0.3, 0.1, 0.06})));
}

TEST(Median, Examples) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
  EXPECT_THROW(median({}), InvalidParameter);
}

}  // namespace
}  // namespace ccf
