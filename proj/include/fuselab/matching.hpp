#pragma once

// Baseline alignments: identity (direct averaging) and Permute (assignment on
// activation correlations).

#include <vector>

#include "fuselab/activations.hpp"
#include "fuselab/assignment.hpp"
#include "fuselab/model.hpp"

namespace fuselab {

inline Assignment linear_sum_assignment(const CorrelationMatrix& c) { return linear_sum_assignment(c.values); }

inline AlignmentPlan identity_plan(const MlpModel& model) {
  AlignmentPlan plan;
  plan.method = Method::Identity;
  for (std::size_t i = 0; i < model.hidden_count(); ++i) {
    plan.transforms.push_back(LayerTransform::identity(model.layer(i).out_dim(), static_cast<int>(i)));
  }
  return plan;
}

struct PermuteAlignment {
  AlignmentPlan plan;
  std::vector<CorrelationMatrix> correlations;  // A neurons x B neurons, per layer
  std::vector<Assignment> assignments;
};

// Aligns `model_b` to `model_a`: forward(i, mapping[i]) = 1 where mapping[i]
// is the B neuron assigned to A neuron i.
inline PermuteAlignment permute_align(const MlpModel& model_a, const MlpModel& model_b, const Matrix& probes) {
  if (!model_a.same_architecture(model_b)) throw ShapeError("permute_plan: architectures differ");
  const auto acts_a = capture(model_a, probes);
  const auto acts_b = capture(model_b, probes);
  PermuteAlignment out;
  out.plan.method = Method::Permute;
  for (std::size_t i = 0; i < acts_a.size(); ++i) {
    auto corr = correlations(acts_a[i], acts_b[i]);
    auto assignment = linear_sum_assignment(corr);
    out.plan.transforms.push_back(LayerTransform::permutation(assignment.mapping, static_cast<int>(i)));
    out.correlations.push_back(std::move(corr));
    out.assignments.push_back(std::move(assignment));
  }
  return out;
}

inline AlignmentPlan permute_plan(const MlpModel& model_a, const MlpModel& model_b, const Matrix& probes) {
  return permute_align(model_a, model_b, probes).plan;
}

}  // namespace fuselab
