#include <gtest/gtest.h>

#include <cmath>

#include "fuselab/datagen.hpp"
#include "fuselab/trainer.hpp"
#include "support.hpp"

using namespace fuselab;
using namespace fuselab::test;

namespace {

// Per-sample softmax cross-entropy with explicit loops.
double oracle_loss(const MlpModel& m, const Dataset& ds) {
  const Matrix logits = oracle_forward(m, ds.features);
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    double z = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) z += std::exp(logits(r, c));
    total += std::log(z) - logits(r, ds.labels[static_cast<std::size_t>(r)]);
  }
  return total / static_cast<double>(logits.rows());
}

MlpModel with_layers(const MlpModel& m, std::vector<DenseLayer> layers) {
  return MlpModel(m.input_dim(), std::move(layers));
}

}  // namespace

TEST(Init, UniformBoundsByFanIn) {
  const auto m = init_model(9, {16, 4}, 3, 5);
  const std::vector<double> bounds{1.0 / 3.0, 0.25, 0.5};
  for (std::size_t i = 0; i < m.layer_count(); ++i) {
    EXPECT_LE(m.layer(i).weights.cwiseAbs().maxCoeff(), bounds[i]);
    EXPECT_LE(m.layer(i).bias.cwiseAbs().maxCoeff(), bounds[i]);
    EXPECT_GT(m.layer(i).weights.cwiseAbs().maxCoeff(), 0.8 * bounds[i]);
  }
  EXPECT_EQ(m.layer(2).activation, Activation::Identity);
  EXPECT_EQ(init_model(9, {16, 4}, 3, 5), m);
}

TEST(CrossEntropy, ZeroModelGivesLogTwo) {
  const auto ds = generate(2, 10, 3, 0);
  std::vector<DenseLayer> layers(2);
  layers[0].weights = Matrix::Zero(4, 3);
  layers[0].bias = Vector::Zero(4);
  layers[1].weights = Matrix::Zero(2, 4);
  layers[1].bias = Vector::Zero(2);
  layers[1].activation = Activation::Identity;
  const MlpModel zero(3, layers);
  const auto la = cross_entropy_accuracy(zero, ds);
  EXPECT_NEAR(la.loss, std::log(2.0), 1e-12);
  // Ties resolve to class 0, so accuracy is the fraction of class-0 labels.
  EXPECT_DOUBLE_EQ(la.accuracy, 0.5);
}

TEST(CrossEntropy, PerfectLogitsGiveFullAccuracy) {
  Matrix logits = Matrix::Zero(4, 3);
  const std::vector<int> labels{2, 0, 1, 2};
  for (int r = 0; r < 4; ++r) logits(r, labels[static_cast<std::size_t>(r)]) = 10.0;
  EXPECT_DOUBLE_EQ(logits_loss_accuracy(logits, labels).accuracy, 1.0);
}

TEST(CrossEntropy, MatchesPerSampleOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto ds = generate(3, 15, 4, seed);
    const auto m = random_model(4, {7, 5}, 3, seed + 40);
    EXPECT_NEAR(cross_entropy_accuracy(m, ds).loss, oracle_loss(m, ds), 1e-12) << "seed " << seed;
  }
}

TEST(CrossEntropy, StableForLargeLogits) {
  Matrix logits(1, 2);
  logits << 1000.0, 0.0;
  const auto la = logits_loss_accuracy(logits, {1});
  EXPECT_NEAR(la.loss, 1000.0, 1e-9);
}

TEST(Train, DeterministicGivenConfig) {
  const auto ds = generate(3, 40, 4, 1);
  TrainConfig cfg;
  cfg.hidden_widths = {8, 8};
  cfg.epochs = 3;
  cfg.init_seed = 2;
  cfg.shuffle_seed = 3;
  EXPECT_EQ(train(ds, cfg), train(ds, cfg));
  auto other = cfg;
  other.shuffle_seed = 4;
  EXPECT_FALSE(train(ds, cfg) == train(ds, other));
}

TEST(Train, ZeroLearningRateKeepsInitialization) {
  const auto ds = generate(3, 20, 4, 1);
  TrainConfig cfg;
  cfg.hidden_widths = {6};
  cfg.epochs = 2;
  cfg.learning_rate = 0.0;
  cfg.init_seed = 9;
  const auto m = train(ds, cfg);
  const auto init = init_model(4, {6}, 3, 9);
  for (std::size_t i = 0; i < m.layer_count(); ++i) {
    EXPECT_EQ(m.layer(i).weights, init.layer(i).weights);
    EXPECT_EQ(m.layer(i).bias, init.layer(i).bias);
  }
}

TEST(Train, OneFullBatchStepMatchesFiniteDifferenceGradient) {
  const auto ds = generate(3, 8, 3, 4);
  TrainConfig cfg;
  cfg.hidden_widths = {5, 4};
  cfg.epochs = 1;
  cfg.batch_size = static_cast<int>(ds.size());
  cfg.momentum = 0.0;
  cfg.learning_rate = 1e-3;
  cfg.init_seed = 6;
  const auto init = init_model(3, cfg.hidden_widths, 3, cfg.init_seed);
  const auto stepped = train(ds, cfg);
  const double h = 1e-6;
  for (std::size_t li = 0; li < init.layer_count(); ++li) {
    const auto& l = init.layer(li);
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) {
        auto up = init.layers(), dn = init.layers();
        up[li].weights(r, c) += h;
        dn[li].weights(r, c) -= h;
        const double numeric = (oracle_loss(with_layers(init, up), ds) - oracle_loss(with_layers(init, dn), ds)) / (2 * h);
        const double analytic = (l.weights(r, c) - stepped.layer(li).weights(r, c)) / cfg.learning_rate;
        EXPECT_NEAR(analytic, numeric, 1e-6) << "layer " << li << " w(" << r << "," << c << ")";
      }
      auto up = init.layers(), dn = init.layers();
      up[li].bias(r) += h;
      dn[li].bias(r) -= h;
      const double numeric = (oracle_loss(with_layers(init, up), ds) - oracle_loss(with_layers(init, dn), ds)) / (2 * h);
      const double analytic = (l.bias(r) - stepped.layer(li).bias(r)) / cfg.learning_rate;
      EXPECT_NEAR(analytic, numeric, 1e-6) << "layer " << li << " b(" << r << ")";
    }
  }
}

TEST(Train, MomentumAccumulatesVelocity) {
  const auto ds = generate(2, 6, 2, 1);
  TrainConfig one;
  one.hidden_widths = {3};
  one.epochs = 1;
  one.batch_size = static_cast<int>(ds.size());
  one.learning_rate = 1e-2;
  one.momentum = 0.9;
  auto two = one;
  two.epochs = 2;
  const auto init = init_model(2, {3}, 2, 0);
  const auto m1 = train(ds, one);
  const auto m2 = train(ds, two);
  // theta1 - theta2 = mu * (theta0 - theta1) + lr * grad(theta1), gradient by central differences.
  const double h = 1e-6;
  for (std::size_t li = 0; li < init.layer_count(); ++li) {
    for (Eigen::Index r = 0; r < init.layer(li).weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < init.layer(li).weights.cols(); ++c) {
        auto up = m1.layers(), dn = m1.layers();
        up[li].weights(r, c) += h;
        dn[li].weights(r, c) -= h;
        const double g1 = (oracle_loss(with_layers(m1, up), ds) - oracle_loss(with_layers(m1, dn), ds)) / (2 * h);
        const double lhs = m1.layer(li).weights(r, c) - m2.layer(li).weights(r, c);
        const double rhs = one.momentum * (init.layer(li).weights(r, c) - m1.layer(li).weights(r, c)) +
                           one.learning_rate * g1;
        EXPECT_NEAR(lhs, rhs, 1e-8);
      }
    }
  }
}

TEST(Train, LossDecreasesOverFirstEpochOnDefaults) {
  const auto ds = generate(kDefaultClasses, kDefaultPerClass, kDefaultDim, 0);
  TrainConfig cfg;
  cfg.epochs = 1;
  const auto r = train_with_log(ds, cfg);
  ASSERT_EQ(r.log.epoch_mean_losses.size(), 1u);
  EXPECT_LT(r.log.epoch_mean_losses[0], r.log.initial_loss);
}

TEST(Train, DefaultConfigReachesHighTrainingAccuracy) {
  TrainConfig cfg;
  const auto big = generate(kDefaultClasses, kDefaultPerClass, kDefaultDim, 0);
  EXPECT_GE(cross_entropy_accuracy(train(big, cfg), big).accuracy, 0.9);
  const auto small = generate(4, 500, 16, 0);
  EXPECT_GE(cross_entropy_accuracy(train(small, cfg), small).accuracy, 0.9);
}

TEST(Train, DivergenceReportsEpochAndBatch) {
  const auto ds = generate(3, 40, 4, 1);
  TrainConfig cfg;
  cfg.hidden_widths = {16};
  cfg.epochs = 5;
  cfg.learning_rate = 1e200;
  try {
    train(ds, cfg);
    FAIL() << "expected divergence";
  } catch (const TrainingDivergedError& e) {
    EXPECT_GE(e.epoch(), 0);
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(TrainConfig, Validation) {
  const auto ds = generate(2, 5, 2, 0);
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(train(ds, cfg), ConfigError);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(train(ds, cfg), ConfigError);
  cfg = {};
  cfg.momentum = 1.0;
  EXPECT_THROW(train(ds, cfg), ConfigError);
  cfg = {};
  cfg.hidden_widths = {};
  EXPECT_THROW(train(ds, cfg), ConfigError);
}
