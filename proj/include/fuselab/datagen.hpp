#pragma once

// Seeded Gaussian-mixture classification data and the two-way split
// protocols (80/20 by class halves, Dirichlet per class, disjoint classes).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fuselab/binary_io.hpp"
#include "fuselab/model.hpp"

namespace fuselab {

struct Dataset {
  Matrix features;           // m x d
  std::vector<int> labels;   // m entries in [0, num_classes)
  int num_classes = 0;
  std::uint64_t seed = 0;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  void validate() const {
    if (features.rows() < 1) throw ValidationError("dataset: empty");
    if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
      throw ValidationError("dataset: label count does not match feature rows");
    }
    if (num_classes < 1) throw ValidationError("dataset: num_classes must be positive");
    for (int y : labels) {
      if (y < 0 || y >= num_classes) throw ValidationError("dataset: label out of range");
    }
    if (!all_finite(features)) throw ValidationError("dataset: non-finite feature");
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.num_classes == b.num_classes && a.seed == b.seed && a.labels == b.labels &&
           a.features.rows() == b.features.rows() && a.features.cols() == b.features.cols() &&
           a.features == b.features;
  }
};

inline Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.num_classes = ds.num_classes;
  out.seed = ds.seed;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), ds.dim());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) = ds.features.row(static_cast<Eigen::Index>(indices[r]));
    out.labels.push_back(ds.labels[indices[r]]);
  }
  return out;
}

inline std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes));
  for (std::size_t i = 0; i < ds.labels.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  return by_class;
}

namespace detail {

inline Matrix draw_centers(std::mt19937_64& rng, int num_classes, int dim) {
  constexpr double kCenterRadius = 3.0;
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix centers(num_classes, dim);
  for (int k = 0; k < num_classes; ++k) {
    Vector c(dim);
    do {
      for (int j = 0; j < dim; ++j) c(j) = normal(rng);
    } while (c.norm() < 1e-12);
    centers.row(k) = kCenterRadius * c.transpose() / c.norm();
  }
  return centers;
}

}  // namespace detail

// Default task: many classes in a moderate dimension, so that independently
// trained models disagree enough for alignment to matter.
inline constexpr int kDefaultClasses = 16;
inline constexpr int kDefaultPerClass = 125;
inline constexpr int kDefaultDim = 32;

// Class k is centred at a seeded random unit direction scaled by 3, with
// isotropic unit-variance noise. Rows are shuffled with the same generator.
inline Dataset generate(int num_classes, int per_class, int dim, std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("generate: need at least 2 classes");
  if (per_class < 2) throw ConfigError("generate: need at least 2 samples per class");
  if (dim < 2) throw ConfigError("generate: need dimension >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const Matrix centers = detail::draw_centers(rng, num_classes, dim);

  const Eigen::Index m = static_cast<Eigen::Index>(num_classes) * per_class;
  Matrix raw(m, dim);
  std::vector<int> raw_labels(static_cast<std::size_t>(m));
  Eigen::Index r = 0;
  for (int k = 0; k < num_classes; ++k) {
    for (int s = 0; s < per_class; ++s, ++r) {
      for (int j = 0; j < dim; ++j) raw(r, j) = centers(k, j) + normal(rng);
      raw_labels[static_cast<std::size_t>(r)] = k;
    }
  }

  std::vector<std::size_t> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  Dataset ds;
  ds.num_classes = num_classes;
  ds.seed = seed;
  ds.features.resize(m, dim);
  ds.labels.resize(static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < order.size(); ++i) {
    ds.features.row(static_cast<Eigen::Index>(i)) = raw.row(static_cast<Eigen::Index>(order[i]));
    ds.labels[i] = raw_labels[order[i]];
  }
  return ds;
}

// Centers used by generate(); exposed so tests can check class means.
inline Matrix generated_centers(int num_classes, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return detail::draw_centers(rng, num_classes, dim);
}

enum class SplitKind { Full, EightyTwenty, Dirichlet, DisjointClasses };

struct SplitSpec {
  SplitKind kind = SplitKind::Full;
  std::array<double, 2> alpha{0.5, 0.5};  // Dirichlet only
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<std::size_t> part1;
  std::vector<std::size_t> part2;
};

// Row indices of each part, each list ascending. Full keeps everything in part 1.
inline SplitIndices split_indices(const Dataset& ds, const SplitSpec& spec) {
  const int K = ds.num_classes;
  if ((spec.kind == SplitKind::EightyTwenty || spec.kind == SplitKind::DisjointClasses) && K % 2 != 0) {
    throw ConfigError("split: class-structured splits need an even number of classes, got " + std::to_string(K));
  }
  if (spec.kind == SplitKind::Dirichlet && !(spec.alpha[0] > 0.0 && spec.alpha[1] > 0.0)) {
    throw ConfigError("split: Dirichlet alpha entries must be positive");
  }

  std::mt19937_64 rng(spec.seed);
  const auto by_class = indices_by_class(ds);
  std::vector<bool> to_first(ds.labels.size(), false);

  switch (spec.kind) {
    case SplitKind::Full:
      std::fill(to_first.begin(), to_first.end(), true);
      break;
    case SplitKind::EightyTwenty:
      for (int k = 0; k < K; ++k) {
        auto idx = by_class[static_cast<std::size_t>(k)];
        std::shuffle(idx.begin(), idx.end(), rng);
        const double frac = k < K / 2 ? 0.8 : 0.2;
        const auto take = static_cast<std::size_t>(std::llround(frac * static_cast<double>(idx.size())));
        for (std::size_t i = 0; i < take; ++i) to_first[idx[i]] = true;
      }
      break;
    case SplitKind::Dirichlet:
      for (int k = 0; k < K; ++k) {
        std::gamma_distribution<double> g1(spec.alpha[0], 1.0);
        std::gamma_distribution<double> g2(spec.alpha[1], 1.0);
        const double a = g1(rng);
        const double b = g2(rng);
        const double p = (a + b) > 0.0 ? a / (a + b) : 0.5;
        std::bernoulli_distribution coin(p);
        for (std::size_t i : by_class[static_cast<std::size_t>(k)]) to_first[i] = coin(rng);
      }
      break;
    case SplitKind::DisjointClasses: {
      std::vector<int> classes(static_cast<std::size_t>(K));
      std::iota(classes.begin(), classes.end(), 0);
      std::shuffle(classes.begin(), classes.end(), rng);
      for (int c = 0; c < K / 2; ++c)
        for (std::size_t i : by_class[static_cast<std::size_t>(classes[static_cast<std::size_t>(c)])])
          to_first[i] = true;
      break;
    }
  }

  SplitIndices out;
  for (std::size_t i = 0; i < to_first.size(); ++i) (to_first[i] ? out.part1 : out.part2).push_back(i);
  return out;
}

inline std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
  const auto idx = split_indices(ds, spec);
  return {subset(ds, idx.part1), subset(ds, idx.part2)};
}

// Stratified seeded hold-out: returns (train, test).
inline std::pair<Dataset, Dataset> holdout(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("holdout: fraction must be in (0,1)");
  std::mt19937_64 rng(seed);
  std::vector<bool> is_test(ds.labels.size(), false);
  for (auto idx : indices_by_class(ds)) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto take = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
    for (std::size_t i = 0; i < take; ++i) is_test[idx[i]] = true;
  }
  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < is_test.size(); ++i) (is_test[i] ? test : train).push_back(i);
  return {subset(ds, train), subset(ds, test)};
}

// Dataset file, version 1: manifest (format_version, m, d, K, seed), then
// features row-major as little-endian doubles, then labels as little-endian u32.
inline constexpr std::string_view kDatasetMagic = "fuselab-dataset";

inline void write_dataset(std::ostream& out, const Dataset& ds) {
  io::Manifest m;
  m.magic = std::string(kDatasetMagic);
  m.set("format_version", "1");
  m.set("m", std::to_string(ds.size()));
  m.set("d", std::to_string(ds.dim()));
  m.set("K", std::to_string(ds.num_classes));
  m.set("seed", std::to_string(ds.seed));
  m.write(out);
  for (Eigen::Index r = 0; r < ds.features.rows(); ++r)
    for (Eigen::Index c = 0; c < ds.features.cols(); ++c) io::write_f64_le(out, ds.features(r, c));
  for (int y : ds.labels) io::write_u32_le(out, static_cast<std::uint32_t>(y));
  if (!out) throw Error("write failed");
}

inline Dataset read_dataset(std::istream& in) {
  const auto m = io::Manifest::read(in, kDatasetMagic);
  if (m.require_int<int>("format_version") != 1) throw ParseError("manifest field 'format_version': unsupported");
  const auto rows = m.require_int<long long>("m");
  const auto cols = m.require_int<long long>("d");
  const auto K = m.require_int<int>("K");
  if (rows < 1 || rows > (1LL << 26)) throw ParseError("manifest field 'm' out of range");
  if (cols < 1 || cols > (1LL << 20)) throw ParseError("manifest field 'd' out of range");
  if (K < 1) throw ParseError("manifest field 'K' must be positive");
  Dataset ds;
  ds.num_classes = K;
  ds.seed = m.require_int<std::uint64_t>("seed");
  ds.features.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) ds.features(r, c) = io::read_f64_le(in, "features");
  ds.labels.resize(static_cast<std::size_t>(rows));
  for (auto& y : ds.labels) {
    const auto v = io::read_u32_le(in, "labels");
    if (v >= static_cast<std::uint32_t>(K)) throw ValidationError("label " + std::to_string(v) + " >= K");
    y = static_cast<int>(v);
  }
  io::expect_end_of_payload(in);
  ds.validate();
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  auto out = io::open_for_write(path);
  write_dataset(out, ds);
}

inline Dataset load_dataset(const std::string& path) {
  auto in = io::open_for_read(path);
  try {
    return read_dataset(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

}  // namespace fuselab
