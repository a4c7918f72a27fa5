#pragma once

// Accuracy, logit ensembles, loss barriers along linear paths, and the
// per-method merge evaluation behind the CLI reports.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "fuselab/datagen.hpp"
#include "fuselab/merge.hpp"
#include "fuselab/parallel.hpp"
#include "fuselab/report.hpp"
#include "fuselab/trainer.hpp"

namespace fuselab {

inline double ensemble_accuracy(const std::vector<MlpModel>& models, const Dataset& ds) {
  if (models.empty()) throw ShapeError("ensemble: no models");
  Matrix sum = forward(models.front(), ds.features);
  for (std::size_t k = 1; k < models.size(); ++k) {
    if (models[k].output_dim() != models.front().output_dim()) throw ShapeError("ensemble: output dims differ");
    sum += forward(models[k], ds.features);
  }
  sum /= static_cast<double>(models.size());
  return logits_loss_accuracy(sum, ds.labels).accuracy;
}

// Parameters (1 - t) * a + t * b.
inline MlpModel interpolate(const MlpModel& a, const MlpModel& b, double t) {
  if (!a.same_architecture(b)) throw ShapeError("interpolate: architectures differ");
  std::vector<DenseLayer> layers = a.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weights = (1.0 - t) * a.layer(i).weights + t * b.layer(i).weights;
    layers[i].bias = (1.0 - t) * a.layer(i).bias + t * b.layer(i).bias;
  }
  return MlpModel(a.input_dim(), std::move(layers));
}

struct BarrierCurve {
  std::vector<double> lambdas;
  std::vector<double> losses;
  std::vector<double> accuracies;
  double barrier = 0.0;  // max_t loss(t) - ((1 - t) loss(0) + t loss(1))
};

inline constexpr int kDefaultGridSize = 21;

inline BarrierCurve interpolation_curve(const MlpModel& model_a, const MlpModel& aligned_b, const Dataset& ds,
                                        int grid_size = kDefaultGridSize) {
  if (grid_size < 3) throw ConfigError("barrier: grid size must be >= 3");
  if (!model_a.same_architecture(aligned_b)) throw ShapeError("barrier: architectures differ");
  const auto n = static_cast<std::size_t>(grid_size);
  BarrierCurve c;
  c.lambdas.resize(n);
  c.losses.resize(n);
  c.accuracies.resize(n);
  for (std::size_t k = 0; k < n; ++k) c.lambdas[k] = static_cast<double>(k) / static_cast<double>(n - 1);
  parallel_for(n, [&](std::size_t k) {
    const auto la = cross_entropy_accuracy(interpolate(model_a, aligned_b, c.lambdas[k]), ds);
    c.losses[k] = la.loss;
    c.accuracies[k] = la.accuracy;
  });
  c.barrier = -INFINITY;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = c.lambdas[k];
    const double excess = c.losses[k] - ((1.0 - t) * c.losses.front() + t * c.losses.back());
    c.barrier = std::max(c.barrier, excess);
  }
  return c;
}

struct LayerCcaSummary {
  std::size_t other = 0;  // index into the merged model list
  int layer = 0;
  double gamma = 0.0;
  double corr_mean = 0.0;
  double corr_min = 0.0;
  double corr_max = 0.0;
};

struct MergeReport {
  Method method = Method::Identity;
  std::size_t reference = 0;
  bool repair = false;
  std::string gamma_setting;  // "absolute=<g>" or "relative=<f>"
  std::vector<std::string> seeds;
  std::vector<double> endpoint_accuracies;
  double base_models_avg = 0.0;
  double ensemble_accuracy = 0.0;
  double merged_accuracy = 0.0;
  double merged_loss = 0.0;
  double barrier = 0.0;  // reference vs first aligned model, on the test set
  std::vector<LayerCcaSummary> cca_layers;
  std::vector<NeuronRef> repair_unscaled;

  Report to_report() const {
    Report r;
    r.add("method", std::string(method_name(method)));
    r.add("reference", reference);
    r.add("repair", repair);
    r.add("gamma", gamma_setting);
    r.add("models", endpoint_accuracies.size());
    for (std::size_t i = 0; i < seeds.size(); ++i) r.add("model." + std::to_string(i) + ".seed", seeds[i]);
    for (std::size_t i = 0; i < endpoint_accuracies.size(); ++i)
      r.add("model." + std::to_string(i) + ".accuracy", endpoint_accuracies[i]);
    r.add("base_models_avg", base_models_avg);
    r.add("ensemble_accuracy", ensemble_accuracy);
    r.add("merged_accuracy", merged_accuracy);
    r.add("merged_loss", merged_loss);
    r.add("barrier", barrier);
    for (const auto& l : cca_layers) {
      const std::string p = "cca.model." + std::to_string(l.other) + ".layer." + std::to_string(l.layer) + ".";
      r.add(p + "gamma", l.gamma);
      r.add(p + "corr_mean", l.corr_mean);
      r.add(p + "corr_min", l.corr_min);
      r.add(p + "corr_max", l.corr_max);
    }
    r.add("repair.unscaled", repair_unscaled.size());
    for (std::size_t i = 0; i < repair_unscaled.size(); ++i) {
      r.add("repair.unscaled." + std::to_string(i),
            std::to_string(repair_unscaled[i].layer) + ":" + std::to_string(repair_unscaled[i].neuron));
    }
    return r;
  }
};

// First `limit` rows of the training features (all when unset).
inline Matrix probe_matrix(const Dataset& train_ds, std::optional<Eigen::Index> limit) {
  if (limit && *limit < train_ds.size()) return train_ds.features.topRows(std::max<Eigen::Index>(*limit, 2));
  return train_ds.features;
}

struct EvalOptions {
  MergeOptions merge;
  int grid_size = kDefaultGridSize;
  std::optional<Eigen::Index> probe_limit;
};

struct MergeEvaluation {
  MergeReport report;
  MlpModel merged;
};

// Fills the summary fields that depend only on a finished merge.
inline void fill_report(MergeReport& r, const std::vector<MlpModel>& models, const MergeOutcome& outcome,
                        const MergeOptions& opts, const Dataset& test_ds, int grid_size) {
  r.method = opts.align.method;
  r.reference = opts.reference;
  r.repair = opts.repair;
  r.gamma_setting = opts.align.method == Method::CCA ? describe_gamma(opts.align.cca) : "none";
  r.seeds.clear();
  r.endpoint_accuracies.clear();
  for (const auto& m : models) {
    r.seeds.push_back(m.seed_tag().value_or("none"));
    r.endpoint_accuracies.push_back(cross_entropy_accuracy(m, test_ds).accuracy);
  }
  double sum = 0.0;
  for (double a : r.endpoint_accuracies) sum += a;
  r.base_models_avg = sum / static_cast<double>(r.endpoint_accuracies.size());
  r.ensemble_accuracy = ensemble_accuracy(models, test_ds);
  const auto merged = cross_entropy_accuracy(outcome.merged, test_ds);
  r.merged_accuracy = merged.accuracy;
  r.merged_loss = merged.loss;
  r.barrier = interpolation_curve(models[opts.reference], outcome.detail.aligned.front(), test_ds, grid_size).barrier;
  r.cca_layers.clear();
  for (std::size_t j = 0; j < outcome.detail.alignments.size(); ++j) {
    const std::size_t other = j < opts.reference ? j : j + 1;
    for (const auto& sol : outcome.detail.alignments[j].cca_solutions) {
      LayerCcaSummary s;
      s.other = other;
      s.layer = sol.layer_index;
      s.gamma = sol.gamma;
      s.corr_mean = sol.correlations.mean();
      s.corr_min = sol.correlations.minCoeff();
      s.corr_max = sol.correlations.maxCoeff();
      r.cca_layers.push_back(s);
    }
  }
  r.repair_unscaled = outcome.repair_unscaled;
}

inline MergeEvaluation evaluate_merge(Method method, const std::vector<MlpModel>& models, const Dataset& train_ds,
                                      const Dataset& test_ds, EvalOptions options = {}) {
  options.merge.align.method = method;
  const Matrix probes = probe_matrix(train_ds, options.probe_limit);
  auto outcome = run_merge(models, probes, options.merge);
  MergeEvaluation ev{MergeReport{}, outcome.merged};
  fill_report(ev.report, models, outcome, options.merge, test_ds, options.grid_size);
  return ev;
}

}  // namespace fuselab
