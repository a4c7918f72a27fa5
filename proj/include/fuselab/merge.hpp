#pragma once

// Parameter averaging of aligned models, all-to-one multi-model merging and
// the reference-model statistics reset.

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fuselab/cca.hpp"
#include "fuselab/matching.hpp"
#include "fuselab/model.hpp"
#include "fuselab/parallel.hpp"

namespace fuselab {

// Uniform average of same-architecture models, accumulated in list order.
inline MlpModel average_models(const std::vector<MlpModel>& models) {
  if (models.empty()) throw ShapeError("average_models: no models");
  const MlpModel& first = models.front();
  for (const auto& m : models) {
    if (!m.same_architecture(first)) throw ShapeError("average_models: architectures differ");
  }
  std::vector<DenseLayer> layers = first.layers();
  for (std::size_t k = 1; k < models.size(); ++k) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weights += models[k].layer(i).weights;
      layers[i].bias += models[k].layer(i).bias;
    }
  }
  const double scale = 1.0 / static_cast<double>(models.size());
  for (auto& l : layers) {
    l.weights *= scale;
    l.bias *= scale;
  }
  return MlpModel(first.input_dim(), std::move(layers));
}

// W_i = (W_i^A + T_i W_i^B T_{i-1}^{-1}) / 2, b_i = (b_i^A + T_i b_i^B) / 2.
inline MlpModel merge_pair(const MlpModel& model_a, const MlpModel& model_b, const AlignmentPlan& plan) {
  if (!model_a.same_architecture(model_b)) throw ShapeError("merge_pair: architectures differ");
  return average_models({model_a, apply_plan(model_b, plan)});
}

struct AlignOptions {
  Method method = Method::CCA;
  CcaOptions cca;
};

struct PairAlignment {
  AlignmentPlan plan;
  std::vector<CcaSolution> cca_solutions;  // CCA only
};

// Plan mapping `other` into the representation space of `reference`.
inline PairAlignment align_detailed(const MlpModel& reference, const MlpModel& other, const Matrix& probes,
                                    const AlignOptions& opts) {
  if (!reference.same_architecture(other)) throw ShapeError("align: architectures differ");
  switch (opts.method) {
    case Method::Identity:
      return {identity_plan(other), {}};
    case Method::Permute:
      return {permute_plan(reference, other, probes), {}};
    case Method::CCA: {
      auto a = cca_align(reference, other, probes, opts.cca);
      return {std::move(a.plan), std::move(a.solutions)};
    }
  }
  throw ConfigError("align: unknown method");
}

inline AlignmentPlan align(const MlpModel& reference, const MlpModel& other, const Matrix& probes,
                           const AlignOptions& opts) {
  return align_detailed(reference, other, probes, opts).plan;
}

namespace detail {

template <typename Fn>
auto with_context(const std::string& context, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const NumericalError& e) {
    throw NumericalError(context + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(context + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(context + ": " + e.what());
  }
}

}  // namespace detail

struct MultiMergeResult {
  MlpModel merged;
  std::vector<PairAlignment> alignments;  // one per `others` entry
  std::vector<MlpModel> aligned;          // others after their plan
};

// All-to-one merge: every model in `others` is aligned to `reference`
// independently, then all k+1 parameter sets are averaged uniformly.
inline MultiMergeResult merge_many_detailed(const MlpModel& reference, const std::vector<MlpModel>& others,
                                            const Matrix& probes, const AlignOptions& opts) {
  if (others.empty()) throw ShapeError("merge_many: need at least one other model");
  std::vector<std::optional<PairAlignment>> alignments(others.size());
  std::vector<std::optional<MlpModel>> aligned(others.size());
  parallel_for(others.size(), [&](std::size_t j) {
    detail::with_context("merge_many: model " + std::to_string(j + 1), [&] {
      alignments[j] = align_detailed(reference, others[j], probes, opts);
      aligned[j] = apply_plan(others[j], alignments[j]->plan);
      return 0;
    });
  });
  std::vector<MlpModel> all{reference};
  MultiMergeResult out{reference, {}, {}};
  for (std::size_t j = 0; j < others.size(); ++j) {
    all.push_back(*aligned[j]);
    out.aligned.push_back(std::move(*aligned[j]));
    out.alignments.push_back(std::move(*alignments[j]));
  }
  out.merged = average_models(all);
  return out;
}

inline MlpModel merge_many(const MlpModel& reference, const std::vector<MlpModel>& others, Method method,
                           const Matrix& probes, const CcaOptions& cca = {}) {
  return merge_many_detailed(reference, others, probes, AlignOptions{method, cca}).merged;
}

struct NeuronRef {
  int layer = 0;
  Eigen::Index neuron = 0;
  friend bool operator==(const NeuronRef&, const NeuronRef&) = default;
};

struct RepairResult {
  MlpModel model;
  std::vector<NeuronRef> unscaled;  // neurons whose merged std was below 1e-12
};

inline constexpr double kRepairMinStd = 1e-12;

struct NeuronStats {
  Vector mean;
  Vector stddev;  // population standard deviation
};

inline NeuronStats column_stats(const Matrix& z) {
  NeuronStats s;
  s.mean = z.colwise().mean().transpose();
  const Matrix centered = z.rowwise() - s.mean.transpose();
  s.stddev = (centered.colwise().squaredNorm().transpose() / static_cast<double>(z.rows())).cwiseSqrt();
  return s;
}

// Per hidden layer, in order, rescales each neuron of `merged` so its
// pre-activation mean/std on `probes` equal those of `reference`:
//   w <- w * (s_ref / s_merged),  b <- (b - mu_merged) * (s_ref / s_merged) + mu_ref.
// Later layers are left as they are.
inline RepairResult repair_reset(const MlpModel& merged, const MlpModel& reference, const Matrix& probes) {
  if (!merged.same_architecture(reference)) throw ShapeError("repair_reset: architectures differ");
  if (probes.rows() < 1) throw ShapeError("repair_reset: no probes");
  const auto ref_trace = forward_trace(reference, probes);
  std::vector<DenseLayer> layers = merged.layers();
  RepairResult out{merged, {}};
  Matrix x = probes;
  for (std::size_t i = 0; i < merged.hidden_count(); ++i) {
    auto& l = layers[i];
    const NeuronStats cur = column_stats(l.pre_activation(x));
    const NeuronStats ref = column_stats(ref_trace.pre[i]);
    for (Eigen::Index j = 0; j < l.out_dim(); ++j) {
      if (cur.stddev(j) < kRepairMinStd) {
        out.unscaled.push_back({static_cast<int>(i), j});
        continue;
      }
      const double s = ref.stddev(j) / cur.stddev(j);
      l.weights.row(j) *= s;
      l.bias(j) = (l.bias(j) - cur.mean(j)) * s + ref.mean(j);
    }
    x = l.apply(x);
  }
  out.model = MlpModel(merged.input_dim(), std::move(layers), merged.seed_tag());
  return out;
}

struct MergeOptions {
  AlignOptions align;
  bool repair = false;
  std::size_t reference = 0;
};

struct MergeOutcome {
  MlpModel merged;
  MultiMergeResult detail;
  std::vector<NeuronRef> repair_unscaled;
};

// Merges `models` into the space of models[reference], optionally followed by
// the statistics reset against that reference.
inline MergeOutcome run_merge(const std::vector<MlpModel>& models, const Matrix& probes, const MergeOptions& opts) {
  if (models.size() < 2) throw ConfigError("merge: need at least 2 models");
  if (opts.reference >= models.size()) throw ConfigError("merge: reference index out of range");
  const MlpModel& ref = models[opts.reference];
  std::vector<MlpModel> others;
  for (std::size_t i = 0; i < models.size(); ++i)
    if (i != opts.reference) others.push_back(models[i]);
  auto detail = merge_many_detailed(ref, others, probes, opts.align);
  MergeOutcome out{detail.merged, std::move(detail), {}};
  if (opts.repair) {
    auto r = repair_reset(out.merged, ref, probes);
    out.merged = std::move(r.model);
    out.repair_unscaled = std::move(r.unscaled);
  }
  return out;
}

}  // namespace fuselab
