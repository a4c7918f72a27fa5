#pragma once

// Diagnostics on matching matrices: non-optimal Permute matches, coverage of
// top correlations by top CCA coefficients, distribution distances, and the
// direct vs indirect (through a reference) matching comparison.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "fuselab/activations.hpp"
#include "fuselab/assignment.hpp"
#include "fuselab/merge.hpp"
#include "fuselab/report.hpp"

namespace fuselab {

// Percent of rows whose assigned column does not attain the row maximum.
inline double non_optimal_matches(const Matrix& c, const Assignment& assignment) {
  if (static_cast<Eigen::Index>(assignment.mapping.size()) != c.rows()) {
    throw ShapeError("non_optimal_matches: assignment size differs from matrix rows");
  }
  if (c.rows() == 0) return 0.0;
  std::size_t bad = 0;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    if (c(i, assignment.mapping[static_cast<std::size_t>(i)]) < c.row(i).maxCoeff()) ++bad;
  }
  return 100.0 * static_cast<double>(bad) / static_cast<double>(c.rows());
}

inline double non_optimal_matches(const CorrelationMatrix& c, const Assignment& assignment) {
  return non_optimal_matches(c.values, assignment);
}

namespace detail {

// Column indices of row `r` sorted by value, descending; ties by index.
inline std::vector<Eigen::Index> ranked_columns(const Matrix& m, Eigen::Index r) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m.cols()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return m(r, a) > m(r, b); });
  return idx;
}

}  // namespace detail

// Percent of rows i where the k_corr-th most correlated column of `c` is among
// the k_coeff largest |t| entries of row i.
inline double topk_coefficient_coverage(const Matrix& c, const Matrix& t, int k_corr, int k_coeff) {
  if (c.rows() != t.rows() || c.cols() != t.cols()) throw ShapeError("topk coverage: shapes differ");
  if (k_corr < 1 || k_coeff < 1) throw ValidationError("topk coverage: k must be >= 1");
  if (k_corr > c.cols()) throw ValidationError("topk coverage: k_corr exceeds width");
  if (c.rows() == 0) return 0.0;
  const Matrix abs_t = t.cwiseAbs();
  const auto top = static_cast<std::size_t>(std::min<Eigen::Index>(k_coeff, c.cols()));
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    const Eigen::Index target = detail::ranked_columns(c, i)[static_cast<std::size_t>(k_corr - 1)];
    const auto coeff = detail::ranked_columns(abs_t, i);
    if (std::find(coeff.begin(), coeff.begin() + static_cast<std::ptrdiff_t>(top), target) !=
        coeff.begin() + static_cast<std::ptrdiff_t>(top))
      ++hit;
  }
  return 100.0 * static_cast<double>(hit) / static_cast<double>(c.rows());
}

// 1-Wasserstein distance between two empirical distributions, as the
// integral over t in (0,1) of |F_p^{-1}(t) - F_q^{-1}(t)|.
inline double wasserstein_1d(std::vector<double> p, std::vector<double> q) {
  if (p.empty() || q.empty()) throw ValidationError("wasserstein_1d: empty sample");
  std::sort(p.begin(), p.end());
  std::sort(q.begin(), q.end());
  const auto n = static_cast<std::uint64_t>(p.size());
  const auto m = static_cast<std::uint64_t>(q.size());
  if (n == m) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return s / static_cast<double>(n);
  }
  // Breakpoints are multiples of 1/(n*m); walk them with integers.
  std::uint64_t i = 0, j = 0, pos = 0;
  const std::uint64_t total = n * m;
  double area = 0.0;
  while (pos < total) {
    const std::uint64_t next = std::min((i + 1) * m, (j + 1) * n);
    area += std::abs(p[i] - q[j]) * static_cast<double>(next - pos);
    pos = next;
    if (pos == (i + 1) * m) ++i;
    if (pos == (j + 1) * n) ++j;
  }
  return area / static_cast<double>(total);
}

// k-th largest entry of every row.
inline std::vector<double> kth_largest_per_row(const Matrix& m, int k) {
  if (k < 1 || k > m.cols()) throw ValidationError("kth_largest_per_row: k out of range");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    std::nth_element(row.begin(), row.begin() + (k - 1), row.end(), std::greater<>());
    out.push_back(row[static_cast<std::size_t>(k - 1)]);
  }
  return out;
}

// W(top-k correlations, top-k |T|) / W(top-k correlations, permutation
// reference), where the permutation reference is all ones for k = 1 and all
// zeros for k >= 2. A zero denominator yields +inf.
inline double coefficient_distribution_ratio(const Matrix& c, const Matrix& t, int k) {
  if (c.rows() != t.rows() || c.cols() != t.cols()) throw ShapeError("distribution ratio: shapes differ");
  const auto top_c = kth_largest_per_row(c, k);
  const auto top_t = kth_largest_per_row(t.cwiseAbs(), k);
  const std::vector<double> reference(top_c.size(), k == 1 ? 1.0 : 0.0);
  const double num = wasserstein_1d(top_c, top_t);
  const double den = wasserstein_1d(top_c, reference);
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  return num / den;
}

struct IndirectLayerDiagnostics {
  int layer = 0;
  std::optional<double> mismatch_pct;  // permutation plans only
  double frobenius = 0.0;              // ||T_CAB - T_CB||_F
  double frobenius_normalized = 0.0;   // divided by ||T_CB||_F
};

struct IndirectDiagnostics {
  std::vector<IndirectLayerDiagnostics> layers;

  double mean_frobenius_normalized() const {
    double s = 0.0;
    for (const auto& l : layers) s += l.frobenius_normalized;
    return layers.empty() ? 0.0 : s / static_cast<double>(layers.size());
  }
  std::optional<double> mean_mismatch_pct() const {
    double s = 0.0;
    for (const auto& l : layers) {
      if (!l.mismatch_pct) return std::nullopt;
      s += *l.mismatch_pct;
    }
    return layers.empty() ? 0.0 : s / static_cast<double>(layers.size());
  }
};

// With A as reference: T_CAB = T_BA^{-1} T_CA (C to B through A), compared to
// the direct alignment T_CB of C to B.
inline IndirectDiagnostics indirect_matching_diagnostics(const MlpModel& a, const MlpModel& b, const MlpModel& c,
                                                         const Matrix& probes, const AlignOptions& opts) {
  if (!a.same_architecture(b) || !a.same_architecture(c)) throw ShapeError("indirect diagnostics: architectures differ");
  const auto t_ca = align(a, c, probes, opts);
  const auto t_ba = align(a, b, probes, opts);
  const auto t_cb = align(b, c, probes, opts);
  IndirectDiagnostics out;
  for (std::size_t i = 0; i < a.hidden_count(); ++i) {
    const auto& ca = t_ca.transforms[i];
    const auto& ba = t_ba.transforms[i];
    const auto& cb = t_cb.transforms[i];
    const Matrix indirect = ba.inverse() * ca.forward();
    IndirectLayerDiagnostics d;
    d.layer = static_cast<int>(i);
    d.frobenius = (indirect - cb.forward()).norm();
    const double denom = cb.forward().norm();
    d.frobenius_normalized = denom > 0.0 ? d.frobenius / denom : std::numeric_limits<double>::infinity();
    if (ca.kind() == TransformKind::Permutation && ba.kind() == TransformKind::Permutation &&
        cb.kind() == TransformKind::Permutation) {
      // B partner of every C neuron (column) under each route.
      std::size_t differ = 0;
      const Eigen::Index n = cb.dim();
      for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::Index r_ind = 0, r_dir = 0;
        indirect.col(j).maxCoeff(&r_ind);
        cb.forward().col(j).maxCoeff(&r_dir);
        if (r_ind != r_dir) ++differ;
      }
      d.mismatch_pct = 100.0 * static_cast<double>(differ) / static_cast<double>(n);
    }
    out.layers.push_back(d);
  }
  return out;
}

struct AnalysisOptions {
  CcaOptions cca;
  std::vector<int> k_corr{1, 2};
  std::vector<int> k_coeff{1, 5, 10};
  std::vector<Method> indirect_methods{Method::Permute, Method::CCA};
};

// Per-layer diagnostics for the pair (models[0], models[1]) and, with a third
// model, the indirect matching comparison with models[0] as reference.
inline Report analyze(const std::vector<MlpModel>& models, const Matrix& probes, const AnalysisOptions& opts = {}) {
  if (models.size() != 2 && models.size() != 3) throw ConfigError("analyze: expects 2 or 3 models");
  const auto& a = models[0];
  const auto& b = models[1];
  if (!a.same_architecture(b)) throw ShapeError("analyze: architectures differ");
  const auto perm = permute_align(a, b, probes);
  const auto cca = cca_align(a, b, probes, opts.cca);
  Report r;
  r.add("models", models.size());
  r.add("gamma", describe_gamma(opts.cca));
  r.add("layers", a.hidden_count());
  double non_opt_sum = 0.0;
  for (std::size_t i = 0; i < a.hidden_count(); ++i) {
    const std::string p = "layer." + std::to_string(i) + ".";
    const Matrix& c = perm.correlations[i].values;
    const Matrix& t = cca.plan.transforms[i].forward();
    const double non_opt = non_optimal_matches(c, perm.assignments[i]);
    non_opt_sum += non_opt;
    r.add(p + "non_optimal_pct", non_opt);
    for (int kc : opts.k_corr) {
      if (kc > c.cols()) continue;
      for (int kf : opts.k_coeff) {
        r.add(p + "topk_coverage." + std::to_string(kc) + "_" + std::to_string(kf),
              topk_coefficient_coverage(c, t, kc, kf));
      }
    }
    for (int k : {1, 2}) {
      if (k > c.cols()) continue;
      r.add(p + "wasserstein_ratio.top" + std::to_string(k), coefficient_distribution_ratio(c, t, k));
    }
  }
  r.add("mean.non_optimal_pct", non_opt_sum / static_cast<double>(a.hidden_count()));

  if (models.size() == 3) {
    const auto& c = models[2];
    for (Method m : opts.indirect_methods) {
      const auto d = indirect_matching_diagnostics(a, b, c, probes, AlignOptions{m, opts.cca});
      const std::string p = "indirect." + std::string(method_name(m)) + ".";
      for (const auto& l : d.layers) {
        const std::string lp = p + "layer." + std::to_string(l.layer) + ".";
        if (l.mismatch_pct) r.add(lp + "mismatch_pct", *l.mismatch_pct);
        r.add(lp + "frobenius", l.frobenius);
        r.add(lp + "frobenius_normalized", l.frobenius_normalized);
      }
      if (auto mm = d.mean_mismatch_pct()) r.add(p + "mean.mismatch_pct", *mm);
      r.add(p + "mean.frobenius_normalized", d.mean_frobenius_normalized());
    }
  }
  return r;
}

}  // namespace fuselab
