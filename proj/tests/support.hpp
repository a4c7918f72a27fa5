#pragma once

// Generators and straight-line oracles shared by the test binaries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "fuselab/model.hpp"

namespace fuselab::test {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = n(rng);
  return m;
}

inline Vector random_vector(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  return random_matrix(n, 1, rng, scale).col(0);
}

// ReLU hidden layers, Identity output. Weights ~ N(0, 1/fan_in); biases are
// drawn from [bias_lo, bias_hi].
inline MlpModel random_model(Eigen::Index input_dim, const std::vector<Eigen::Index>& hidden, Eigen::Index outputs,
                             std::uint64_t seed, double bias_lo = -0.5, double bias_hi = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ub(bias_lo, bias_hi);
  std::vector<DenseLayer> layers;
  Eigen::Index prev = input_dim;
  std::vector<Eigen::Index> widths = hidden;
  widths.push_back(outputs);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    DenseLayer l;
    l.weights = random_matrix(widths[i], prev, rng, 1.0 / std::sqrt(static_cast<double>(prev)));
    l.bias.resize(widths[i]);
    for (Eigen::Index j = 0; j < widths[i]; ++j) l.bias(j) = ub(rng);
    l.activation = i + 1 == widths.size() ? Activation::Identity : Activation::ReLU;
    layers.push_back(std::move(l));
    prev = widths[i];
  }
  return MlpModel(input_dim, std::move(layers));
}

inline std::vector<Eigen::Index> random_permutation(Eigen::Index n, std::mt19937_64& rng) {
  std::vector<Eigen::Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), Eigen::Index{0});
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

inline Matrix permutation_matrix(const std::vector<Eigen::Index>& mapping) {
  const auto n = static_cast<Eigen::Index>(mapping.size());
  Matrix p = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) p(i, mapping[static_cast<std::size_t>(i)]) = 1.0;
  return p;
}

// B = (M)(A): hidden layer i of B is M_i applied to A's outputs.
inline MlpModel transform_model(const MlpModel& a, const std::vector<Matrix>& ms) {
  AlignmentPlan plan;
  plan.method = Method::CCA;
  for (std::size_t i = 0; i < ms.size(); ++i)
    plan.transforms.push_back(LayerTransform::general(ms[i], static_cast<int>(i)));
  return apply_plan(a, plan);
}

// Straight-line forward pass with explicit loops.
inline Matrix oracle_forward(const MlpModel& model, const Matrix& x) {
  Matrix cur = x;
  for (const auto& l : model.layers()) {
    Matrix next(cur.rows(), l.weights.rows());
    for (Eigen::Index s = 0; s < cur.rows(); ++s) {
      for (Eigen::Index o = 0; o < l.weights.rows(); ++o) {
        double acc = l.bias(o);
        for (Eigen::Index k = 0; k < l.weights.cols(); ++k) acc += l.weights(o, k) * cur(s, k);
        if (l.activation == Activation::ReLU && acc < 0.0) acc = 0.0;
        next(s, o) = acc;
      }
    }
    cur = std::move(next);
  }
  return cur;
}

inline double max_model_diff(const MlpModel& a, const MlpModel& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.layer_count(); ++i) {
    d = std::max(d, max_abs_diff(a.layer(i).weights, b.layer(i).weights));
    d = std::max(d, (a.layer(i).bias - b.layer(i).bias).cwiseAbs().maxCoeff());
  }
  return d;
}

inline bool model_finite(const MlpModel& m) {
  for (const auto& l : m.layers())
    if (!all_finite(l.weights) || !all_finite(l.bias)) return false;
  return true;
}

// Unique scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("fuselab_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace fuselab::test
