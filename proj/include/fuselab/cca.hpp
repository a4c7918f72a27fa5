#pragma once

// Regularized CCA in closed form and the CCA Merge alignment transform.
//
// With whitening R_a = (S_aa + gI)^{-1/2}, R_b = (S_bb + gI)^{-1/2} and the
// SVD R_a S_ab R_b = U diag(rho) V^T, the projections are P_a = R_a U and
// P_b = R_b V. Model B is brought into model A's space with
// T = (P_b P_a^{-1})^T, so that T x_B ~ x_A for column activations.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fuselab/activations.hpp"
#include "fuselab/model.hpp"
#include "fuselab/report.hpp"

namespace fuselab {

inline constexpr double kEigenvalueFloor = 1e-12;
inline constexpr double kDefaultRelativeGamma = 1e-3;
inline const std::vector<double> kDefaultRelativeGammaGrid{1e-4, 1e-3, 1e-2, 1e-1};

inline void check_symmetric(const Matrix& s, const char* who) {
  if (s.rows() != s.cols()) throw ShapeError(std::string(who) + ": matrix must be square");
  if (!all_finite(s)) throw ValidationError(std::string(who) + ": non-finite entry");
  const double scale = std::max(1.0, s.size() ? s.cwiseAbs().maxCoeff() : 0.0);
  if (s.size() && (s - s.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw ValidationError(std::string(who) + ": matrix is not symmetric");
  }
}

// (s + gamma I)^{-1/2} through a symmetric eigendecomposition; eigenvalues
// below kEigenvalueFloor are raised to it first.
inline Matrix inv_sqrt(const Matrix& s, double gamma) {
  check_symmetric(s, "inv_sqrt");
  const Eigen::Index n = s.rows();
  Matrix reg = s + gamma * Matrix::Identity(n, n);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(reg);
  if (eig.info() != Eigen::Success) throw NumericalError("inv_sqrt: eigendecomposition failed");
  const Vector lam = eig.eigenvalues().cwiseMax(kEigenvalueFloor);
  const Vector scale = lam.cwiseSqrt().cwiseInverse();
  const Matrix& q = eig.eigenvectors();
  return q * scale.asDiagonal() * q.transpose();
}

struct CcaSolution {
  Matrix p_a;
  Matrix p_b;
  Vector correlations;  // nonincreasing, clamped to [0, 1]
  double gamma = 0.0;
  int layer_index = 0;
};

inline CcaSolution solve_cca(const ScatterStats& stats) {
  const Eigen::Index n = stats.s_aa.rows();
  if (stats.s_bb.rows() != n || stats.s_ab.rows() != n || stats.s_ab.cols() != n) {
    throw ShapeError("solve_cca: scatter shapes differ");
  }
  const std::string where = " (layer " + std::to_string(stats.layer_index) + ")";
  const Matrix ra = inv_sqrt(stats.s_aa, stats.gamma);
  const Matrix rb = inv_sqrt(stats.s_bb, stats.gamma);
  const Matrix k = ra * stats.s_ab * rb;
  if (!all_finite(k)) throw NumericalError("solve_cca: non-finite whitened cross-scatter" + where);

  Eigen::JacobiSVD<Matrix> svd(k, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix u = svd.matrixU();
  Matrix v = svd.matrixV();
  const Vector sv = svd.singularValues();
  if (!all_finite(u) || !all_finite(v) || !all_finite(sv)) throw NumericalError("solve_cca: SVD failed" + where);

  // Make the largest-magnitude entry of every U column positive; flip V with it.
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::Index top = 0;
    for (Eigen::Index r = 1; r < n; ++r)
      if (std::abs(u(r, c)) > std::abs(u(top, c))) top = r;
    if (u(top, c) < 0.0) {
      u.col(c) *= -1.0;
      v.col(c) *= -1.0;
    }
  }

  CcaSolution sol;
  sol.p_a = ra * u;
  sol.p_b = rb * v;
  sol.correlations = sv.cwiseMax(0.0).cwiseMin(1.0);
  sol.gamma = stats.gamma;
  sol.layer_index = stats.layer_index;
  return sol;
}

// T = (P_b P_a^{-1})^T, solved densely from P_a^T T = P_b^T.
inline LayerTransform build_transform(const CcaSolution& sol, int layer_index) {
  const std::string where = "build_transform: layer " + std::to_string(layer_index);
  Eigen::PartialPivLU<Matrix> lu(sol.p_a.transpose());
  const double rcond = lu.rcond();
  if (!(rcond >= LayerTransform::kMinReciprocalCondition)) {
    throw NumericalError(where + ": projection P_a is near-singular (rcond " + std::to_string(rcond) +
                         "); use a larger gamma");
  }
  Matrix t = lu.solve(sol.p_b.transpose());
  try {
    return LayerTransform::general(std::move(t), layer_index);
  } catch (const NumericalError& e) {
    throw NumericalError(where + ": " + e.what() + "; use a larger gamma");
  }
}

// Either an absolute gamma or a factor of the data scale
// mean(diag(S_aa + S_bb) / 2).
struct CcaOptions {
  std::optional<double> gamma;
  double relative_gamma = kDefaultRelativeGamma;

  static CcaOptions absolute(double g) { return CcaOptions{g, kDefaultRelativeGamma}; }
  static CcaOptions relative(double f) { return CcaOptions{std::nullopt, f}; }
};

inline std::string describe_gamma(const CcaOptions& o) {
  return o.gamma ? "absolute=" + format_double(*o.gamma) : "relative=" + format_double(o.relative_gamma);
}

inline double scatter_scale(const Matrix& s_aa, const Matrix& s_bb) {
  const auto n = static_cast<double>(s_aa.rows());
  return (s_aa.trace() + s_bb.trace()) / (2.0 * n);
}

inline double resolve_gamma(const CcaOptions& opts, const Matrix& s_aa, const Matrix& s_bb) {
  const double g = opts.gamma ? *opts.gamma : opts.relative_gamma * scatter_scale(s_aa, s_bb);
  if (!(g >= 0.0) || !std::isfinite(g)) throw ValidationError("cca: gamma must be finite and >= 0");
  return g;
}

struct CcaAlignment {
  AlignmentPlan plan;
  std::vector<CcaSolution> solutions;  // one per hidden layer
};

// Aligns `model_b` to `model_a`, layer by layer, from activations on `probes`.
inline CcaAlignment cca_align(const MlpModel& model_a, const MlpModel& model_b, const Matrix& probes,
                              const CcaOptions& opts = {}) {
  if (!model_a.same_architecture(model_b)) throw ShapeError("cca_align: architectures differ");
  const auto acts_a = capture(model_a, probes);
  const auto acts_b = capture(model_b, probes);
  CcaAlignment out;
  out.plan.method = Method::CCA;
  for (std::size_t i = 0; i < acts_a.size(); ++i) {
    auto stats = scatter(acts_a[i], acts_b[i], 0.0);
    stats.gamma = resolve_gamma(opts, stats.s_aa, stats.s_bb);
    auto sol = solve_cca(stats);
    out.plan.transforms.push_back(build_transform(sol, static_cast<int>(i)));
    out.solutions.push_back(std::move(sol));
  }
  return out;
}

}  // namespace fuselab
