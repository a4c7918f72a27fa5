#pragma once

// Hidden-layer activations on a probe set and the centered second-order
// statistics that alignment consumes.

#include <algorithm>
#include <cmath>
#include <vector>

#include "fuselab/model.hpp"

namespace fuselab {

// Centered post-activation outputs of one hidden layer (m probes x n neurons).
struct ActivationMatrix {
  Matrix values;
  Vector column_means;
  int layer_index = 0;

  Eigen::Index probes() const { return values.rows(); }
  Eigen::Index width() const { return values.cols(); }

  static ActivationMatrix from_raw(const Matrix& raw, int layer_index) {
    ActivationMatrix a;
    a.layer_index = layer_index;
    a.column_means = raw.colwise().mean().transpose();
    a.values = raw.rowwise() - a.column_means.transpose();
    return a;
  }
};

inline std::vector<ActivationMatrix> capture(const MlpModel& model, const Matrix& probes) {
  if (probes.rows() < 2) throw ShapeError("capture: need at least 2 probes");
  const auto trace = forward_trace(model, probes);
  std::vector<ActivationMatrix> out;
  out.reserve(model.hidden_count());
  for (std::size_t i = 0; i < model.hidden_count(); ++i) {
    out.push_back(ActivationMatrix::from_raw(trace.post[i], static_cast<int>(i)));
  }
  return out;
}

// Unregularized scatter matrices; gamma is carried along and applied as
// S + gamma*I by the CCA solver.
struct ScatterStats {
  Matrix s_aa;
  Matrix s_bb;
  Matrix s_ab;
  double gamma = 0.0;
  Eigen::Index probes = 0;
  int layer_index = 0;
};

namespace detail {

inline Matrix gram(const Matrix& x) {
  Matrix s = x.transpose() * x;
  // Exact symmetry: (a + b) / 2 == (b + a) / 2 bit for bit.
  return 0.5 * (s + s.transpose());
}

}  // namespace detail

inline ScatterStats scatter(const ActivationMatrix& a, const ActivationMatrix& b, double gamma) {
  if (a.probes() != b.probes()) {
    throw ShapeError("scatter: probe counts differ (" + std::to_string(a.probes()) + " vs " +
                     std::to_string(b.probes()) + ")");
  }
  if (a.width() != b.width()) throw ShapeError("scatter: layer widths differ");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ValidationError("scatter: gamma must be finite and >= 0");
  ScatterStats s;
  s.s_aa = detail::gram(a.values);
  s.s_bb = detail::gram(b.values);
  s.s_ab = a.values.transpose() * b.values;
  s.gamma = gamma;
  s.probes = a.probes();
  s.layer_index = a.layer_index;
  return s;
}

// Pearson correlations between neurons of A (rows) and B (columns). Pairs
// involving a zero-variance neuron are 0 and flagged.
struct CorrelationMatrix {
  Matrix values;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> degenerate;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

inline constexpr double kDegenerateVariance = 1e-12;

inline CorrelationMatrix correlations(const ActivationMatrix& a, const ActivationMatrix& b) {
  if (a.probes() != b.probes()) throw ShapeError("correlations: probe counts differ");
  if (a.probes() < 2) throw ShapeError("correlations: need at least 2 probes");
  const double m = static_cast<double>(a.probes());
  const Vector ss_a = a.values.colwise().squaredNorm().transpose();
  const Vector ss_b = b.values.colwise().squaredNorm().transpose();
  const Matrix cross = a.values.transpose() * b.values;

  CorrelationMatrix c;
  c.values.resize(a.width(), b.width());
  c.degenerate.resize(a.width(), b.width());
  for (Eigen::Index i = 0; i < a.width(); ++i) {
    const bool dead_a = ss_a(i) / m < kDegenerateVariance;
    for (Eigen::Index j = 0; j < b.width(); ++j) {
      const bool dead = dead_a || ss_b(j) / m < kDegenerateVariance;
      c.degenerate(i, j) = dead;
      c.values(i, j) = dead ? 0.0 : std::clamp(cross(i, j) / std::sqrt(ss_a(i) * ss_b(j)), -1.0, 1.0);
    }
  }
  return c;
}

}  // namespace fuselab
