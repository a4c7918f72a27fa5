#pragma once

// Feed-forward MLPs, alignment transforms and the plans that carry them.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fuselab/errors.hpp"

namespace fuselab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("max_abs_diff: shape mismatch");
  }
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff();
}

enum class Activation { ReLU, Identity };

inline std::string_view activation_name(Activation a) {
  return a == Activation::ReLU ? "relu" : "identity";
}

inline std::optional<Activation> parse_activation(std::string_view name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "identity") return Activation::Identity;
  return std::nullopt;
}

struct DenseLayer {
  Matrix weights;  // out_dim x in_dim
  Vector bias;     // out_dim
  Activation activation = Activation::ReLU;

  Eigen::Index in_dim() const { return weights.cols(); }
  Eigen::Index out_dim() const { return weights.rows(); }

  // Affine part on row-major samples: inputs is m x in_dim.
  Matrix pre_activation(const Matrix& inputs) const {
    Matrix z = inputs * weights.transpose();
    z.rowwise() += bias.transpose();
    return z;
  }

  Matrix activate(Matrix z) const {
    if (activation == Activation::ReLU) z = z.cwiseMax(0.0);
    return z;
  }

  Matrix apply(const Matrix& inputs) const { return activate(pre_activation(inputs)); }

  friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
    return a.activation == b.activation && a.weights.rows() == b.weights.rows() &&
           a.weights.cols() == b.weights.cols() && a.bias.size() == b.bias.size() &&
           a.weights == b.weights && a.bias == b.bias;
  }
};

// Immutable MLP: input_dim -> hidden layers -> logits (Identity).
class MlpModel {
 public:
  MlpModel(Eigen::Index input_dim, std::vector<DenseLayer> layers,
           std::optional<std::string> seed_tag = std::nullopt)
      : input_dim_(input_dim), layers_(std::move(layers)), seed_tag_(std::move(seed_tag)) {
    validate();
  }

  Eigen::Index input_dim() const { return input_dim_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }
  std::size_t layer_count() const { return layers_.size(); }
  std::size_t hidden_count() const { return layers_.size() - 1; }
  Eigen::Index output_dim() const { return layers_.back().out_dim(); }
  const std::optional<std::string>& seed_tag() const { return seed_tag_; }

  std::vector<Eigen::Index> hidden_widths() const {
    std::vector<Eigen::Index> w;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) w.push_back(layers_[i].out_dim());
    return w;
  }

  bool same_architecture(const MlpModel& other) const {
    if (input_dim_ != other.input_dim_ || layers_.size() != other.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (layers_[i].out_dim() != other.layers_[i].out_dim() ||
          layers_[i].activation != other.layers_[i].activation)
        return false;
    }
    return true;
  }

  MlpModel with_seed_tag(std::optional<std::string> tag) const {
    MlpModel copy = *this;
    copy.seed_tag_ = std::move(tag);
    return copy;
  }

  friend bool operator==(const MlpModel& a, const MlpModel& b) {
    return a.input_dim_ == b.input_dim_ && a.layers_ == b.layers_ && a.seed_tag_ == b.seed_tag_;
  }

 private:
  void validate() const {
    if (input_dim_ < 1) throw ValidationError("model: input_dim must be positive");
    if (layers_.size() < 2) throw ValidationError("model: at least 2 layers required");
    Eigen::Index prev = input_dim_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      const std::string where = "model: layer " + std::to_string(i);
      if (l.out_dim() < 1) throw ValidationError(where + ": empty layer");
      if (l.in_dim() != prev) {
        throw ValidationError(where + ": in_dim " + std::to_string(l.in_dim()) +
                              " does not match previous out_dim " + std::to_string(prev));
      }
      if (l.bias.size() != l.out_dim()) {
        throw ValidationError(where + ": bias length " + std::to_string(l.bias.size()) +
                              " != weight rows " + std::to_string(l.out_dim()));
      }
      if (!all_finite(l.weights) || !all_finite(l.bias)) {
        throw ValidationError(where + ": non-finite parameter");
      }
      prev = l.out_dim();
    }
    if (layers_.back().activation != Activation::Identity) {
      throw ValidationError("model: final layer activation must be identity");
    }
  }

  Eigen::Index input_dim_;
  std::vector<DenseLayer> layers_;
  std::optional<std::string> seed_tag_;
};

// Pre- and post-activation outputs of every layer for one batch of inputs.
struct ForwardTrace {
  std::vector<Matrix> pre;
  std::vector<Matrix> post;
};

inline void check_inputs(const MlpModel& model, const Matrix& inputs) {
  if (inputs.cols() != model.input_dim()) {
    throw ShapeError("forward: layer 0 expects " + std::to_string(model.input_dim()) +
                     " input columns, got " + std::to_string(inputs.cols()));
  }
  if (!all_finite(inputs)) throw ValidationError("forward: non-finite input");
}

inline ForwardTrace forward_trace(const MlpModel& model, const Matrix& inputs) {
  check_inputs(model, inputs);
  ForwardTrace trace;
  trace.pre.reserve(model.layer_count());
  trace.post.reserve(model.layer_count());
  const Matrix* x = &inputs;
  for (const auto& layer : model.layers()) {
    trace.pre.push_back(layer.pre_activation(*x));
    trace.post.push_back(layer.activate(trace.pre.back()));
    x = &trace.post.back();
  }
  return trace;
}

// Logits for each row of `inputs` (m x input_dim).
inline Matrix forward(const MlpModel& model, const Matrix& inputs) {
  check_inputs(model, inputs);
  Matrix x = inputs;
  for (const auto& layer : model.layers()) x = layer.apply(x);
  return x;
}

enum class TransformKind { Permutation, General };

// Invertible n x n map applied to one hidden layer's outputs. The inverse is
// computed once at construction and checked against the forward map.
class LayerTransform {
 public:
  static constexpr double kMinReciprocalCondition = 1e-12;
  static constexpr double kInverseTolerance = 1e-8;

  static LayerTransform identity(Eigen::Index n, int layer_index) {
    std::vector<Eigen::Index> mapping(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) mapping[static_cast<std::size_t>(i)] = i;
    return permutation(mapping, layer_index);
  }

  // forward(i, mapping[i]) = 1.
  static LayerTransform permutation(std::span<const Eigen::Index> mapping, int layer_index) {
    const auto n = static_cast<Eigen::Index>(mapping.size());
    Matrix fwd = Matrix::Zero(n, n);
    std::vector<bool> seen(mapping.size(), false);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index j = mapping[static_cast<std::size_t>(i)];
      if (j < 0 || j >= n || seen[static_cast<std::size_t>(j)]) {
        throw ValidationError("permutation transform: mapping is not a permutation (layer " +
                              std::to_string(layer_index) + ")");
      }
      seen[static_cast<std::size_t>(j)] = true;
      fwd(i, j) = 1.0;
    }
    Matrix inv = fwd.transpose();
    return LayerTransform(std::move(fwd), std::move(inv), TransformKind::Permutation, layer_index);
  }

  static LayerTransform general(Matrix forward, int layer_index) {
    if (forward.rows() != forward.cols() || forward.rows() == 0) {
      throw ShapeError("transform: layer " + std::to_string(layer_index) + " matrix must be square");
    }
    if (!all_finite(forward)) {
      throw NumericalError("transform: layer " + std::to_string(layer_index) +
                           " has non-finite entries");
    }
    Eigen::PartialPivLU<Matrix> lu(forward);
    const double rcond = lu.rcond();
    if (!(rcond >= kMinReciprocalCondition)) {
      throw NumericalError("transform: layer " + std::to_string(layer_index) +
                           " is near-singular (rcond " + std::to_string(rcond) + ")");
    }
    Matrix inv = lu.solve(Matrix::Identity(forward.rows(), forward.cols()));
    return LayerTransform(std::move(forward), std::move(inv), TransformKind::General, layer_index);
  }

  // Wraps a transform whose inverse is known in closed form.
  static LayerTransform general_with_inverse(Matrix forward, Matrix inverse, int layer_index) {
    if (forward.rows() != forward.cols() || inverse.rows() != forward.rows() ||
        inverse.cols() != forward.cols()) {
      throw ShapeError("transform: layer " + std::to_string(layer_index) + " shape mismatch");
    }
    return LayerTransform(std::move(forward), std::move(inverse), TransformKind::General,
                          layer_index);
  }

  const Matrix& forward() const { return forward_; }
  const Matrix& inverse() const { return inverse_; }
  TransformKind kind() const { return kind_; }
  int layer_index() const { return layer_index_; }
  Eigen::Index dim() const { return forward_.rows(); }

  // mapping[i] = column holding the 1 in row i.
  std::vector<Eigen::Index> permutation_mapping() const {
    if (kind_ != TransformKind::Permutation) {
      throw ValidationError("transform: not a permutation");
    }
    std::vector<Eigen::Index> mapping(static_cast<std::size_t>(dim()));
    for (Eigen::Index i = 0; i < dim(); ++i) {
      Eigen::Index j = 0;
      forward_.row(i).maxCoeff(&j);
      mapping[static_cast<std::size_t>(i)] = j;
    }
    return mapping;
  }

  LayerTransform inverted() const {
    return LayerTransform(inverse_, forward_, kind_, layer_index_);
  }

 private:
  LayerTransform(Matrix fwd, Matrix inv, TransformKind kind, int layer_index)
      : forward_(std::move(fwd)), inverse_(std::move(inv)), kind_(kind), layer_index_(layer_index) {
    const Matrix id = Matrix::Identity(forward_.rows(), forward_.cols());
    if (!all_finite(inverse_) || max_abs_diff(forward_ * inverse_, id) > kInverseTolerance) {
      throw NumericalError("transform: layer " + std::to_string(layer_index_) +
                           " inverse check failed (forward * inverse != I)");
    }
  }

  Matrix forward_;
  Matrix inverse_;
  TransformKind kind_;
  int layer_index_;
};

enum class Method { Identity, Permute, CCA };

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::Identity:
      return "direct";
    case Method::Permute:
      return "permute";
    case Method::CCA:
      return "cca";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
  if (s == "direct" || s == "identity") return Method::Identity;
  if (s == "permute") return Method::Permute;
  if (s == "cca") return Method::CCA;
  return std::nullopt;
}

// One transform per hidden (merging) layer; the output layer is never aligned.
struct AlignmentPlan {
  std::vector<LayerTransform> transforms;
  Method method = Method::Identity;

  void check_against(const MlpModel& model) const {
    if (transforms.size() != model.hidden_count()) {
      throw ShapeError("plan: " + std::to_string(transforms.size()) + " transforms for " +
                       std::to_string(model.hidden_count()) + " hidden layers");
    }
    for (std::size_t i = 0; i < transforms.size(); ++i) {
      if (transforms[i].dim() != model.layer(i).out_dim()) {
        throw ShapeError("plan: transform " + std::to_string(i) + " has dim " +
                         std::to_string(transforms[i].dim()) + ", layer width is " +
                         std::to_string(model.layer(i).out_dim()));
      }
    }
  }

  AlignmentPlan inverted() const {
    AlignmentPlan inv{{}, method};
    for (const auto& t : transforms) inv.transforms.push_back(t.inverted());
    return inv;
  }
};

// W_i' = T_i W_i T_{i-1}^{-1}, b_i' = T_i b_i; T_0 and T_N are the identity.
inline MlpModel apply_plan(const MlpModel& model, const AlignmentPlan& plan) {
  plan.check_against(model);
  std::vector<DenseLayer> layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    if (i > 0) l.weights = l.weights * plan.transforms[i - 1].inverse();
    if (i < plan.transforms.size()) {
      l.weights = plan.transforms[i].forward() * l.weights;
      l.bias = plan.transforms[i].forward() * l.bias;
    }
  }
  return MlpModel(model.input_dim(), std::move(layers), model.seed_tag());
}

}  // namespace fuselab
