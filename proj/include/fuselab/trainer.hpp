#pragma once

// Mini-batch SGD with momentum on softmax cross-entropy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "fuselab/datagen.hpp"
#include "fuselab/model.hpp"

namespace fuselab {

struct TrainConfig {
  std::vector<Eigen::Index> hidden_widths{64, 64};
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t init_seed = 0;
  std::uint64_t shuffle_seed = 0;

  void validate() const {
    if (hidden_widths.empty()) throw ConfigError("train: hidden_widths must be nonempty");
    for (auto w : hidden_widths)
      if (w < 1) throw ConfigError("train: hidden widths must be positive");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("train: learning_rate must be finite and nonnegative");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must be in [0,1)");
  }
};

// Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
inline MlpModel init_model(Eigen::Index input_dim, const std::vector<Eigen::Index>& hidden_widths,
                           Eigen::Index num_classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<DenseLayer> layers;
  Eigen::Index fan_in = input_dim;
  auto make = [&](Eigen::Index out, Activation act) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer l;
    l.activation = act;
    l.weights.resize(out, fan_in);
    l.bias.resize(out);
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < fan_in; ++c) l.weights(r, c) = u(rng);
    for (Eigen::Index r = 0; r < out; ++r) l.bias(r) = u(rng);
    layers.push_back(std::move(l));
    fan_in = out;
  };
  for (auto w : hidden_widths) make(w, Activation::ReLU);
  make(num_classes, Activation::Identity);
  return MlpModel(input_dim, std::move(layers));
}

namespace detail {

// Row-wise argmax; ties go to the lowest index.
inline int argmax_row(const Matrix& m, Eigen::Index r) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < m.cols(); ++c)
    if (m(r, c) > m(r, best)) best = c;
  return static_cast<int>(best);
}

inline double log_sum_exp_row(const Matrix& m, Eigen::Index r) {
  const double mx = m.row(r).maxCoeff();
  return mx + std::log((m.row(r).array() - mx).exp().sum());
}

}  // namespace detail

struct LossAccuracy {
  double loss = 0.0;
  double accuracy = 0.0;
};

inline LossAccuracy logits_loss_accuracy(const Matrix& logits, const std::vector<int>& labels) {
  if (logits.rows() != static_cast<Eigen::Index>(labels.size())) throw ShapeError("loss: row/label mismatch");
  double loss = 0.0;
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= logits.cols()) throw ShapeError("loss: label exceeds logit count");
    loss += detail::log_sum_exp_row(logits, r) - logits(r, y);
    if (detail::argmax_row(logits, r) == y) ++correct;
  }
  const double m = static_cast<double>(logits.rows());
  return {loss / m, static_cast<double>(correct) / m};
}

// Mean softmax cross-entropy and argmax accuracy of `model` on `ds`.
inline LossAccuracy cross_entropy_accuracy(const MlpModel& model, const Dataset& ds) {
  return logits_loss_accuracy(forward(model, ds.features), ds.labels);
}

struct TrainLog {
  double initial_loss = 0.0;              // full-dataset loss at initialization
  std::vector<double> epoch_mean_losses;  // running mean of batch losses per epoch
};

struct TrainResult {
  MlpModel model;
  TrainLog log;
};

inline TrainResult train_with_log(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  ds.validate();

  MlpModel init = init_model(ds.dim(), cfg.hidden_widths, ds.num_classes, cfg.init_seed);
  std::vector<DenseLayer> layers = init.layers();
  std::vector<Matrix> vel_w;
  std::vector<Vector> vel_b;
  for (const auto& l : layers) {
    vel_w.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
    vel_b.push_back(Vector::Zero(l.bias.size()));
  }

  TrainLog log;
  log.initial_loss = cross_entropy_accuracy(init, ds).loss;

  std::mt19937_64 rng(cfg.shuffle_seed);
  std::vector<std::size_t> order(static_cast<std::size_t>(ds.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t n_layers = layers.size();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto bsz = static_cast<Eigen::Index>(stop - start);
      Matrix x(bsz, ds.dim());
      std::vector<int> y(static_cast<std::size_t>(bsz));
      for (Eigen::Index r = 0; r < bsz; ++r) {
        const std::size_t src = order[start + static_cast<std::size_t>(r)];
        x.row(r) = ds.features.row(static_cast<Eigen::Index>(src));
        y[static_cast<std::size_t>(r)] = ds.labels[src];
      }

      std::vector<Matrix> pre(n_layers), post(n_layers);
      const Matrix* in = &x;
      for (std::size_t i = 0; i < n_layers; ++i) {
        pre[i] = layers[i].pre_activation(*in);
        post[i] = layers[i].activate(pre[i]);
        in = &post[i];
      }

      const Matrix& logits = post.back();
      Matrix delta(bsz, logits.cols());
      double batch_loss = 0.0;
      for (Eigen::Index r = 0; r < bsz; ++r) {
        const double lse = detail::log_sum_exp_row(logits, r);
        const int label = y[static_cast<std::size_t>(r)];
        batch_loss += lse - logits(r, label);
        delta.row(r) = (logits.row(r).array() - lse).exp().matrix();
        delta(r, label) -= 1.0;
      }
      batch_loss /= static_cast<double>(bsz);
      if (!std::isfinite(batch_loss)) throw TrainingDivergedError(epoch, batches);
      delta /= static_cast<double>(bsz);

      for (std::size_t i = n_layers; i-- > 0;) {
        const Matrix& input = i == 0 ? x : post[i - 1];
        const Matrix grad_w = delta.transpose() * input;
        const Vector grad_b = delta.colwise().sum().transpose();
        if (i > 0) {
          Matrix back = delta * layers[i].weights;
          if (layers[i - 1].activation == Activation::ReLU) {
            back = (pre[i - 1].array() > 0.0).select(back, 0.0);
          }
          delta = std::move(back);
        }
        vel_w[i] = cfg.momentum * vel_w[i] + grad_w;
        vel_b[i] = cfg.momentum * vel_b[i] + grad_b;
        layers[i].weights -= cfg.learning_rate * vel_w[i];
        layers[i].bias -= cfg.learning_rate * vel_b[i];
      }
      loss_sum += batch_loss;
      ++batches;
    }
    log.epoch_mean_losses.push_back(loss_sum / batches);
  }

  for (std::size_t i = 0; i < n_layers; ++i) {
    if (!all_finite(layers[i].weights) || !all_finite(layers[i].bias)) {
      throw TrainingDivergedError(cfg.epochs - 1, -1);
    }
  }
  std::string tag = "init=" + std::to_string(cfg.init_seed) + ",shuffle=" + std::to_string(cfg.shuffle_seed);
  return {MlpModel(ds.dim(), std::move(layers), std::move(tag)), std::move(log)};
}

inline MlpModel train(const Dataset& ds, const TrainConfig& cfg) { return train_with_log(ds, cfg).model; }

}  // namespace fuselab
