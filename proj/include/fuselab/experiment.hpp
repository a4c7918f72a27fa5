#pragma once

// End-to-end protocol: generate data, split it, train k models with distinct
// seeds, merge with each requested method, and collect one report row per
// method.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "fuselab/datagen.hpp"
#include "fuselab/eval.hpp"
#include "fuselab/gamma_search.hpp"
#include "fuselab/parallel.hpp"
#include "fuselab/report.hpp"
#include "fuselab/trainer.hpp"

namespace fuselab {

// Offsets that keep the derived seeds of one experiment apart.
inline constexpr std::uint64_t kShuffleSeedOffset = 7919;
inline constexpr std::uint64_t kHeldOutSeedBase = 1'000'000;

struct ExperimentConfig {
  std::vector<Method> methods{Method::Identity, Method::Permute, Method::CCA};
  int models = 2;
  std::vector<std::uint64_t> seeds;  // one init seed per model; default 0..models-1
  SplitKind split = SplitKind::Full;
  std::array<double, 2> alpha{0.5, 0.5};
  int classes = kDefaultClasses;
  int per_class = kDefaultPerClass;
  int dim = kDefaultDim;
  std::uint64_t data_seed = 0;
  double test_fraction = 0.2;
  TrainConfig train;  // init/shuffle seeds are overridden per model
  CcaOptions cca;
  std::vector<CcaOptions> gamma_search;  // empty: no search
  bool repair = false;
  std::size_t reference = 0;
  std::optional<Eigen::Index> probe_limit;
  int grid_size = kDefaultGridSize;
};

inline std::string split_name(SplitKind k) {
  switch (k) {
    case SplitKind::Full:
      return "full";
    case SplitKind::EightyTwenty:
      return "eighty-twenty";
    case SplitKind::Dirichlet:
      return "dirichlet";
    case SplitKind::DisjointClasses:
      return "disjoint";
  }
  return "?";
}

inline std::optional<SplitKind> parse_split(const std::string& s) {
  if (s == "full") return SplitKind::Full;
  if (s == "eighty-twenty") return SplitKind::EightyTwenty;
  if (s == "dirichlet") return SplitKind::Dirichlet;
  if (s == "disjoint") return SplitKind::DisjointClasses;
  return std::nullopt;
}

struct ExperimentResult {
  Report report;  // no timestamp; the caller adds one if wanted
  Dataset train_ds;
  Dataset test_ds;
  std::vector<Dataset> parts;  // per-model training data
  std::vector<MlpModel> models;
  std::vector<MergeEvaluation> merges;  // parallel to config.methods
  CcaOptions cca_used;
};

inline TrainConfig model_train_config(const TrainConfig& base, std::uint64_t seed) {
  TrainConfig c = base;
  c.init_seed = seed;
  c.shuffle_seed = seed + kShuffleSeedOffset;
  return c;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.models < 2) throw ConfigError("experiment: need at least 2 models");
  if (cfg.methods.empty()) throw ConfigError("experiment: no methods");
  for (std::size_t i = 0; i < cfg.methods.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (cfg.methods[i] == cfg.methods[j]) throw ConfigError("experiment: method listed twice");
  std::vector<std::uint64_t> seeds = cfg.seeds;
  if (seeds.empty())
    for (int i = 0; i < cfg.models; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
  if (seeds.size() != static_cast<std::size_t>(cfg.models)) {
    throw ConfigError("experiment: --seeds lists " + std::to_string(seeds.size()) + " seeds for " +
                      std::to_string(cfg.models) + " models");
  }
  if (cfg.split != SplitKind::Full && cfg.models != 2) {
    throw ConfigError("experiment: data splits are two-way; use --models 2");
  }
  if (cfg.reference >= static_cast<std::size_t>(cfg.models)) throw ConfigError("experiment: reference out of range");

  ExperimentResult res;
  const Dataset all = generate(cfg.classes, cfg.per_class, cfg.dim, cfg.data_seed);
  std::tie(res.train_ds, res.test_ds) = holdout(all, cfg.test_fraction, cfg.data_seed + 1);
  if (cfg.split == SplitKind::Full) {
    res.parts.assign(static_cast<std::size_t>(cfg.models), res.train_ds);
  } else {
    SplitSpec spec{cfg.split, cfg.alpha, cfg.data_seed + 2};
    auto [p1, p2] = split(res.train_ds, spec);
    if (p1.size() == 0 || p2.size() == 0) throw ConfigError("experiment: split produced an empty part");
    res.parts = {p1, p2};
  }

  std::vector<std::optional<MlpModel>> trained(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t i) {
    trained[i] = train(res.parts[i], model_train_config(cfg.train, seeds[i]));
  });
  for (auto& m : trained) res.models.push_back(std::move(*m));

  const Matrix probes = probe_matrix(res.train_ds, cfg.probe_limit);
  res.cca_used = cfg.cca;
  std::vector<GammaScore> gamma_scores;
  const bool wants_cca = std::find(cfg.methods.begin(), cfg.methods.end(), Method::CCA) != cfg.methods.end();
  if (!cfg.gamma_search.empty() && wants_cca) {
    // Held-out pair trained on the same data parts, then discarded.
    std::vector<std::optional<MlpModel>> held(2);
    parallel_for(2, [&](std::size_t i) {
      held[i] = train(res.parts[std::min(i, res.parts.size() - 1)],
                      model_train_config(cfg.train, kHeldOutSeedBase + seeds[i]));
    });
    std::vector<std::pair<MlpModel, MlpModel>> pairs{{*held[0], *held[1]}};
    gamma_scores = score_gammas(cfg.gamma_search, pairs, probes, res.train_ds);
    res.cca_used = select_gamma_option(cfg.gamma_search, pairs, probes, res.train_ds);
  }

  Report& r = res.report;
  r.add("experiment.methods", [&] {
    std::string s;
    for (auto m : cfg.methods) s += (s.empty() ? "" : ",") + std::string(method_name(m));
    return s;
  }());
  r.add("experiment.models", cfg.models);
  r.add("experiment.split", split_name(cfg.split));
  if (cfg.split == SplitKind::Dirichlet)
    r.add("experiment.alpha", format_double(cfg.alpha[0]) + "," + format_double(cfg.alpha[1]));
  r.add("data.classes", cfg.classes);
  r.add("data.per_class", cfg.per_class);
  r.add("data.dim", cfg.dim);
  r.add("data.seed", static_cast<std::size_t>(cfg.data_seed));
  r.add("data.train_size", static_cast<std::size_t>(res.train_ds.size()));
  r.add("data.test_size", static_cast<std::size_t>(res.test_ds.size()));
  for (std::size_t i = 0; i < res.parts.size(); ++i)
    r.add("data.part." + std::to_string(i) + ".size", static_cast<std::size_t>(res.parts[i].size()));
  r.add("train.hidden", [&] {
    std::string s;
    for (auto w : cfg.train.hidden_widths) s += (s.empty() ? "" : ",") + std::to_string(w);
    return s;
  }());
  r.add("train.epochs", cfg.train.epochs);
  r.add("train.batch_size", cfg.train.batch_size);
  r.add("train.learning_rate", cfg.train.learning_rate);
  r.add("train.momentum", cfg.train.momentum);
  r.add("merge.reference", cfg.reference);
  r.add("merge.repair", cfg.repair);
  r.add("merge.probes", static_cast<std::size_t>(probes.rows()));
  for (const auto& gs : gamma_scores) r.add("gamma_search." + describe_gamma(gs.option), gs.mean_accuracy);
  r.add("merge.gamma", describe_gamma(res.cca_used));

  for (std::size_t i = 0; i < res.models.size(); ++i) {
    const std::string p = "model." + std::to_string(i) + ".";
    r.add(p + "seed", res.models[i].seed_tag().value_or("none"));
    r.add(p + "test_accuracy", cross_entropy_accuracy(res.models[i], res.test_ds).accuracy);
    r.add(p + "train_accuracy", cross_entropy_accuracy(res.models[i], res.parts[i]).accuracy);
  }

  for (Method m : cfg.methods) {
    EvalOptions eo;
    eo.merge.align.cca = res.cca_used;
    eo.merge.repair = cfg.repair;
    eo.merge.reference = cfg.reference;
    eo.grid_size = cfg.grid_size;
    eo.probe_limit = cfg.probe_limit;
    res.merges.push_back(evaluate_merge(m, res.models, res.train_ds, res.test_ds, eo));
  }
  // Table-style summary rows: one per method.
  const auto& first = res.merges.front().report;
  r.add("base_models_avg", first.base_models_avg);
  r.add("ensemble_accuracy", first.ensemble_accuracy);
  for (const auto& ev : res.merges) {
    const std::string p = "row." + std::string(method_name(ev.report.method)) + ".";
    r.add(p + "merged_accuracy", ev.report.merged_accuracy);
    r.add(p + "merged_loss", ev.report.merged_loss);
    r.add(p + "barrier", ev.report.barrier);
    for (const auto& l : ev.report.cca_layers) {
      r.add(p + "cca.model." + std::to_string(l.other) + ".layer." + std::to_string(l.layer) + ".corr_mean",
            l.corr_mean);
    }
    r.add(p + "repair_unscaled", ev.report.repair_unscaled.size());
  }
  return res;
}

}  // namespace fuselab
