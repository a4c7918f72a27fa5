#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "fuselab/datagen.hpp"
#include "fuselab/eval.hpp"
#include "support.hpp"

using namespace fuselab;
using namespace fuselab::test;

namespace {

// Single linear layer whose logits are the constant bias.
MlpModel constant_logits(Eigen::Index d, const Vector& bias) {
  DenseLayer hidden;
  hidden.weights = Matrix::Zero(2, d);
  hidden.bias = Vector::Zero(2);
  DenseLayer out;
  out.weights = Matrix::Zero(bias.size(), 2);
  out.bias = bias;
  out.activation = Activation::Identity;
  return MlpModel(d, {hidden, out});
}

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST(Ensemble, SingleModelEqualsItsAccuracy) {
  const auto ds = generate(3, 20, 4, 0);
  const auto m = random_model(4, {6}, 3, 1);
  EXPECT_DOUBLE_EQ(ensemble_accuracy({m}, ds), cross_entropy_accuracy(m, ds).accuracy);
  EXPECT_DOUBLE_EQ(ensemble_accuracy({m, m, m}, ds), cross_entropy_accuracy(m, ds).accuracy);
}

TEST(Ensemble, OppositeLogitsTieToFirstClass) {
  const auto ds = generate(2, 10, 3, 0);
  const auto up = constant_logits(3, vec2(1.0, -1.0));
  const auto down = constant_logits(3, vec2(-1.0, 1.0));
  EXPECT_DOUBLE_EQ(ensemble_accuracy({up, down}, ds), 0.5);
  EXPECT_DOUBLE_EQ(ensemble_accuracy({down, down}, ds), 0.5);
  EXPECT_THROW(ensemble_accuracy({}, ds), ShapeError);
}

TEST(Ensemble, AveragesLogitsNotVotes) {
  const auto ds = generate(2, 10, 3, 0);
  // Votes would tie 1:1; averaged logits favour class 1.
  const auto a = constant_logits(3, vec2(0.1, 0.0));
  const auto b = constant_logits(3, vec2(0.0, 5.0));
  const double frac1 = std::count(ds.labels.begin(), ds.labels.end(), 1) / static_cast<double>(ds.labels.size());
  EXPECT_DOUBLE_EQ(ensemble_accuracy({a, b}, ds), frac1);
}

TEST(Interpolate, EndpointsAndMidpoint) {
  const auto a = random_model(4, {5}, 2, 1);
  const auto b = random_model(4, {5}, 2, 2);
  EXPECT_EQ(interpolate(a, b, 0.0), a);
  EXPECT_EQ(interpolate(a, b, 1.0), b);
  const auto mid = interpolate(a, b, 0.5);
  for (std::size_t i = 0; i < a.layer_count(); ++i)
    EXPECT_LE(max_abs_diff(mid.layer(i).weights, 0.5 * (a.layer(i).weights + b.layer(i).weights)), 1e-15);
}

TEST(Barrier, SelfInterpolationIsZero) {
  const auto ds = generate(3, 30, 4, 1);
  const auto a = random_model(4, {8, 6}, 3, 3);
  const auto c = interpolation_curve(a, a, ds);
  ASSERT_EQ(c.lambdas.size(), 21u);
  EXPECT_DOUBLE_EQ(c.lambdas.front(), 0.0);
  EXPECT_DOUBLE_EQ(c.lambdas.back(), 1.0);
  EXPECT_NEAR(c.barrier, 0.0, 1e-10);
}

TEST(Barrier, AlignedPermutedCopyHasNoBarrier) {
  std::mt19937_64 rng(2);
  const auto ds = generate(3, 30, 4, 2);
  const auto a = random_model(4, {8, 6}, 3, 4, 0.2, 0.6);
  std::vector<Matrix> pis;
  for (auto w : a.hidden_widths()) pis.push_back(permutation_matrix(random_permutation(w, rng)));
  const auto b = transform_model(a, pis);
  const auto aligned = apply_plan(b, permute_plan(a, b, ds.features));
  EXPECT_LE(interpolation_curve(a, aligned, ds).barrier, 1e-6);
}

TEST(Barrier, NonNegativeAndSymmetricUnderSwap) {
  const auto ds = generate(3, 30, 4, 3);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto a = random_model(4, {8}, 3, seed + 10);
    const auto b = random_model(4, {8}, 3, seed + 20);
    const auto ab = interpolation_curve(a, b, ds, 11);
    const auto ba = interpolation_curve(b, a, ds, 11);
    EXPECT_GE(ab.barrier, 0.0);
    EXPECT_NEAR(ab.barrier, ba.barrier, 1e-12);
    for (std::size_t k = 0; k < ab.losses.size(); ++k) {
      EXPECT_NEAR(ab.losses[k], ba.losses[ab.losses.size() - 1 - k], 1e-12);
      EXPECT_GE(ab.accuracies[k], 0.0);
      EXPECT_LE(ab.accuracies[k], 1.0);
    }
  }
  EXPECT_THROW(interpolation_curve(random_model(4, {8}, 3, 0), random_model(4, {8}, 3, 1), ds, 2), ConfigError);
}

TEST(EvaluateMerge, IdenticalEndpointsMergeToThemselves) {
  const auto train = generate(3, 30, 4, 4);
  const auto test = generate(3, 10, 4, 5);
  const auto a = random_model(4, {8, 6}, 3, 5, 0.2, 0.6);
  for (Method m : {Method::Identity, Method::Permute, Method::CCA}) {
    const auto ev = evaluate_merge(m, {a, a}, train, test);
    const double acc = cross_entropy_accuracy(a, test).accuracy;
    EXPECT_NEAR(ev.report.merged_accuracy, acc, 1e-12) << method_name(m);
    EXPECT_NEAR(ev.report.base_models_avg, acc, 1e-12);
    EXPECT_NEAR(ev.report.ensemble_accuracy, acc, 1e-12);
    EXPECT_NEAR(ev.report.barrier, 0.0, 1e-6);
  }
}

TEST(EvaluateMerge, SummaryFieldsConsistent) {
  const auto train = generate(3, 30, 4, 6);
  const auto test = generate(3, 10, 4, 7);
  const std::vector<MlpModel> models{random_model(4, {8, 6}, 3, 6), random_model(4, {8, 6}, 3, 7),
                                     random_model(4, {8, 6}, 3, 8)};
  const auto ev = evaluate_merge(Method::CCA, models, train, test);
  const auto& r = ev.report;
  double mean = 0.0;
  for (const auto& m : models) mean += cross_entropy_accuracy(m, test).accuracy;
  EXPECT_NEAR(r.base_models_avg, mean / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.merged_accuracy, cross_entropy_accuracy(ev.merged, test).accuracy);
  EXPECT_TRUE(std::isfinite(r.merged_loss));
  EXPECT_TRUE(std::isfinite(r.barrier));
  for (double v : {r.base_models_avg, r.ensemble_accuracy, r.merged_accuracy}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  // Two aligned models, two hidden layers each.
  ASSERT_EQ(r.cca_layers.size(), 4u);
  EXPECT_EQ(r.cca_layers[0].other, 1u);
  EXPECT_EQ(r.cca_layers[2].other, 2u);
  for (const auto& l : r.cca_layers) {
    EXPECT_LE(l.corr_min, l.corr_mean);
    EXPECT_LE(l.corr_mean, l.corr_max);
    EXPECT_LE(l.corr_max, 1.0 + 1e-9);
  }
}

TEST(MergeReport, RendersAndParsesBack) {
  const auto train = generate(3, 30, 4, 8);
  const auto test = generate(3, 10, 4, 9);
  const auto ev = evaluate_merge(Method::CCA, {random_model(4, {6}, 3, 1), random_model(4, {6}, 3, 2)}, train, test);
  const Report r = ev.report.to_report();
  const Report back = Report::parse(r.render());
  EXPECT_EQ(back.entries(), r.entries());
  EXPECT_EQ(back.get("method"), "cca");
  EXPECT_EQ(back.get_double("merged_accuracy"), ev.report.merged_accuracy);
  EXPECT_TRUE(back.has("cca.model.1.layer.0.corr_mean"));
  EXPECT_THROW(back.get("no.such.key"), Error);
}

TEST(Report, SpecialValuesRoundTrip) {
  Report r;
  r.add("a", std::numeric_limits<double>::infinity());
  r.add("b", 0.1);
  r.add("c", true);
  const Report back = Report::parse(r.render());
  EXPECT_TRUE(std::isinf(back.get_double("a")));
  EXPECT_EQ(back.get_double("b"), 0.1);
  EXPECT_EQ(back.get("c"), "true");
  EXPECT_THROW(Report::parse("no separator\n"), ParseError);
}
