#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "fuselab/datagen.hpp"
#include "fuselab/merge.hpp"
#include "fuselab/trainer.hpp"

namespace fuselab {

struct GammaScore {
  CcaOptions option;
  double mean_accuracy = -std::numeric_limits<double>::infinity();
};

// Mean merged accuracy on `eval_ds` of a CCA merge of every held-out pair,
// for each candidate. A candidate whose merge fails scores -inf.
inline std::vector<GammaScore> score_gammas(const std::vector<CcaOptions>& candidates,
                                            const std::vector<std::pair<MlpModel, MlpModel>>& model_pairs,
                                            const Matrix& probes, const Dataset& eval_ds) {
  if (candidates.empty()) throw ConfigError("gamma search: no candidates");
  if (model_pairs.empty()) throw ConfigError("gamma search: no held-out model pairs");
  std::vector<GammaScore> scores;
  for (const auto& opt : candidates) {
    GammaScore s{opt};
    try {
      double total = 0.0;
      for (const auto& [a, b] : model_pairs) {
        const auto plan = cca_align(a, b, probes, opt).plan;
        total += cross_entropy_accuracy(merge_pair(a, b, plan), eval_ds).accuracy;
      }
      s.mean_accuracy = total / static_cast<double>(model_pairs.size());
    } catch (const Error&) {
      s.mean_accuracy = -std::numeric_limits<double>::infinity();
    }
    scores.push_back(s);
  }
  return scores;
}

namespace detail {

inline double gamma_key(const CcaOptions& o) { return o.gamma ? *o.gamma : o.relative_gamma; }

}  // namespace detail

// Best candidate by mean merged accuracy; ties go to the larger gamma.
inline CcaOptions select_gamma_option(const std::vector<CcaOptions>& candidates,
                                      const std::vector<std::pair<MlpModel, MlpModel>>& model_pairs,
                                      const Matrix& probes, const Dataset& eval_ds) {
  const auto scores = score_gammas(candidates, model_pairs, probes, eval_ds);
  const GammaScore* best = nullptr;
  for (const auto& s : scores) {
    if (!std::isfinite(s.mean_accuracy)) continue;
    if (best == nullptr || s.mean_accuracy > best->mean_accuracy ||
        (s.mean_accuracy == best->mean_accuracy && detail::gamma_key(s.option) > detail::gamma_key(best->option))) {
      best = &s;
    }
  }
  if (best == nullptr) throw SelectionError("gamma search: every candidate failed");
  return best->option;
}

// Absolute-gamma form.
inline double select_gamma(const std::vector<double>& candidate_gammas,
                           const std::vector<std::pair<MlpModel, MlpModel>>& model_pairs, const Matrix& probes,
                           const Dataset& eval_ds) {
  std::vector<CcaOptions> opts;
  for (double g : candidate_gammas) opts.push_back(CcaOptions::absolute(g));
  return *select_gamma_option(opts, model_pairs, probes, eval_ds).gamma;
}

}  // namespace fuselab
