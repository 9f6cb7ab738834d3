#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "inhibitor/errors.hpp"
#include "inhibitor/train.hpp"

using namespace inhibitor;

TEST(AddingGenerator, ExamplesAreTwoHot) {
  AddingGenerator gen(20, 7);
  for (int t = 0; t < 2000; ++t) {
    const AddingExample ex = gen.next();
    ASSERT_EQ(ex.values.size(), 20u);
    double marked = 0.0, count = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
      EXPECT_GE(ex.values[i], 0.0);
      EXPECT_LT(ex.values[i], 1.0);
      EXPECT_TRUE(ex.markers[i] == 0.0 || ex.markers[i] == 1.0);
      count += ex.markers[i];
      marked += ex.values[i] * ex.markers[i];
    }
    EXPECT_EQ(count, 2.0);
    EXPECT_EQ(ex.target, marked);
  }
}

TEST(AddingGenerator, SameSeedSameStream) {
  const auto a = AddingGenerator(10, 3).take(50);
  const auto b = AddingGenerator(10, 3).take(50);
  const auto c = AddingGenerator(10, 4).take(50);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].values, b[i].values);
    EXPECT_EQ(a[i].markers, b[i].markers);
  }
  EXPECT_NE(a[0].values, c[0].values);
}

TEST(AddingGenerator, MarkerPositionsUniformWithoutReplacement) {
  const std::size_t n = 5;
  AddingGenerator gen(n, 11);
  std::vector<double> hits(n, 0.0);
  const int samples = 100000;
  for (int t = 0; t < samples; ++t) {
    const auto ex = gen.next();
    for (std::size_t i = 0; i < n; ++i) hits[i] += ex.markers[i];
  }
  // Each position is marked with probability 2/n; binomial sd ~ 126.
  for (double h : hits) EXPECT_NEAR(h, samples * 2.0 / n, 700.0);
}

TEST(AddingGenerator, MeanTargetIsOne) {
  AddingGenerator gen(20, 1);
  double total = 0.0;
  const int samples = 1000000;
  for (int t = 0; t < samples; ++t) total += gen.next().target;
  EXPECT_NEAR(total / samples, 1.0, 0.01);
}

TEST(AddingGenerator, RejectsShortSequences) {
  EXPECT_THROW(AddingGenerator(1, 0), ConfigError);
  EXPECT_NO_THROW(AddingGenerator(2, 0));
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.seq_len, 20u);
  EXPECT_EQ(cfg.steps, 2000u);
  EXPECT_EQ(cfg.batch, 32u);
  auto bad = cfg;
  bad.batch = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.learning_rate = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.seq_len = 1;
  EXPECT_THROW(train(bad), ConfigError);
}

// Untrained model predicts the target mean 1.0, so its test MSE estimates
// Var(target) = 1/6. The squared error (t - 1)^2 has variance
// E[(t-1)^4] - (1/6)^2 = 1/15 - 1/36, giving sigma = 0.0062 at 1000 samples.
TEST(Train, ZeroStepsGivesBaselineMse) {
  for (Mechanism m : {Mechanism::Inhibitor, Mechanism::DotProd}) {
    TrainConfig cfg;
    cfg.steps = 0;
    cfg.mechanism = m;
    const TrainReport r = train(cfg);
    ASSERT_EQ(r.records.size(), 1u);
    const double sigma = std::sqrt((1.0 / 15 - 1.0 / 36) / 1000.0);
    EXPECT_NEAR(r.final_test_mse, 1.0 / 6.0, 3 * sigma);
    EXPECT_NEAR(r.test_target_variance, 1.0 / 6.0, 3 * sigma);
  }
}

TEST(Train, DeterministicGivenSeed) {
  TrainConfig cfg;
  cfg.steps = 30;
  cfg.log_every = 10;
  cfg.test_size = 50;
  const TrainReport a = train(cfg), b = train(cfg);
  ASSERT_EQ(a.records.size(), 4u);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].step, b.records[i].step);
    EXPECT_EQ(a.records[i].train_loss, b.records[i].train_loss);
    EXPECT_EQ(a.records[i].test_mse, b.records[i].test_mse);
  }
  cfg.seed = 1;
  EXPECT_NE(train(cfg).final_test_mse, a.final_test_mse);
}

TEST(Train, ShortRunLearns) {
  for (Mechanism m : {Mechanism::Inhibitor, Mechanism::DotProd}) {
    TrainConfig cfg;
    cfg.mechanism = m;
    cfg.steps = 300;
    cfg.test_size = 200;
    AddingModel model;
    const TrainReport r = train(cfg, &model);
    EXPECT_LT(r.final_test_mse, 0.05) << to_string(m);
    // The reported MSE is the float reference model's.
    const auto test = AddingGenerator(cfg.seq_len, 99).take(200);
    EXPECT_LT(evaluate_mse(model, test, attention_config_for(cfg)), 0.05);
  }
}

TEST(Train, SignedVariantTrains) {
  TrainConfig cfg;
  cfg.signed_values = true;
  cfg.steps = 300;
  cfg.test_size = 200;
  EXPECT_LT(train(cfg).final_test_mse, 0.05);
}

TEST(Train, NonFiniteLossRaisesWithStep) {
  TrainConfig cfg;
  cfg.steps = 50;
  cfg.test_size = 10;
  cfg.learning_rate = 1e300;
  try {
    train(cfg);
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_GT(e.step(), 0u);
    EXPECT_LT(e.step(), 50u);
  }
}

TEST(Train, CsvFormat) {
  TrainReport r;
  r.records = {{0, 0.5, 0.25}, {100, 0.125, 0.0625}};
  std::ostringstream os;
  write_train_csv(os, r);
  EXPECT_EQ(os.str(), "step,train_loss,test_mse\n0,0.5,0.25\n100,0.125,0.0625\n");
}
