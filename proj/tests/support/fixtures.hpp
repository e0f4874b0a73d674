#pragma once

// Synthetic networks and inputs shared by tests, the acceptance binary and
// the memse_fixture tool.

#include <cmath>
#include <cstdint>
#include <vector>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include "memse/memse.hpp"

namespace memse::fixtures {

inline std::vector<Index> small_filters() { return {2, 4, 8, 16, 16}; }
inline std::vector<Index> large_filters() { return {16, 32, 64, 128, 128}; }

// conv3x3 (stride 1, same padding) -> activation -> avgpool 2, per filter count;
// then a linear classifier on the flattened map. He-normal weights.
inline NetworkSpec paper_cnn(const std::vector<Index>& filters, std::uint64_t seed,
                             ActivationKind act = ActivationKind::softplus, Shape input = {3, 32, 32},
                             Index classes = 10) {
  Engine eng(seed);
  Normal normal;
  NetworkSpec spec;
  spec.input_shape = input;
  Shape cur = input;
  for (Index f : filters) {
    ConvLayer c;
    c.in_channels = cur.channels;
    c.out_channels = f;
    c.kernel_size = 3;
    c.padding = 1;
    const double sd = std::sqrt(2.0 / static_cast<double>(cur.channels * 9));
    c.weights.resize(static_cast<std::size_t>(f * cur.channels * 9));
    for (auto& w : c.weights) w = sd * normal(eng);
    Vector b(f);
    for (Index i = 0; i < f; ++i) b[i] = 0.1 * normal(eng);
    c.bias = b;
    spec.layers.emplace_back(std::move(c));
    spec.layers.emplace_back(ActivationLayer{act});
    spec.layers.emplace_back(AvgPoolLayer{2});
    cur = Shape{f, cur.height / 2, cur.width / 2};
  }
  LinearLayer fc;
  fc.weights = Matrix(classes, cur.size());
  const double sd = std::sqrt(1.0 / static_cast<double>(cur.size()));
  for (Index i = 0; i < fc.weights.size(); ++i) fc.weights.data()[i] = sd * normal(eng);
  fc.bias = Vector::Zero(classes);
  spec.layers.emplace_back(std::move(fc));
  return spec;
}

inline NetworkSpec paper_small(std::uint64_t seed, ActivationKind act = ActivationKind::softplus) {
  return paper_cnn(small_filters(), seed, act);
}
inline NetworkSpec paper_large(std::uint64_t seed, ActivationKind act = ActivationKind::softplus) {
  return paper_cnn(large_filters(), seed, act);
}

// Dense stack: widths[0] inputs, then one linear layer per further width,
// each followed by `act` except the last.
inline NetworkSpec dense_stack(const std::vector<Index>& widths, std::uint64_t seed,
                               ActivationKind act = ActivationKind::identity, bool bias = true) {
  Engine eng(seed);
  Normal normal;
  NetworkSpec spec;
  spec.input_shape = Shape{widths.front(), 1, 1};
  for (std::size_t k = 1; k < widths.size(); ++k) {
    LinearLayer l;
    l.weights = Matrix(widths[k], widths[k - 1]);
    const double sd = 1.0 / std::sqrt(static_cast<double>(widths[k - 1]));
    for (Index i = 0; i < l.weights.size(); ++i) l.weights.data()[i] = sd * normal(eng);
    if (bias) {
      l.bias = Vector(widths[k]);
      for (Index i = 0; i < widths[k]; ++i) (*l.bias)[i] = 0.1 * normal(eng);
    }
    spec.layers.emplace_back(std::move(l));
    if (k + 1 < widths.size() && act != ActivationKind::identity) spec.layers.emplace_back(ActivationLayer{act});
  }
  return spec;
}

inline Vector uniform_input(Index n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Engine eng(seed);
  boost::random::uniform_real_distribution<double> u(lo, hi);
  Vector x(n);
  for (Index i = 0; i < n; ++i) x[i] = u(eng);
  return x;
}

inline InputBatch random_inputs(Shape shape, std::size_t n, std::uint64_t seed, Index classes = 0) {
  InputBatch b;
  b.shape = shape;
  for (std::size_t i = 0; i < n; ++i) b.samples.push_back(uniform_input(shape.size(), derive_seed(seed, {i})));
  if (classes > 0) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
    b.labels = labels;
  }
  return b;
}

// Gaussian blobs around fixed class centroids plus the nearest-centroid
// linear classifier that separates them (closed-form "training").
struct ToyClassifier {
  NetworkSpec spec;
  InputBatch data;
};

inline ToyClassifier toy_classifier(Index features, Index classes, std::size_t n, double spread,
                                    std::uint64_t seed) {
  Engine eng(seed);
  Normal normal;
  Matrix centroids(classes, features);
  for (Index i = 0; i < centroids.size(); ++i) centroids.data()[i] = normal(eng);
  LinearLayer l;
  l.weights = centroids;
  Vector b(classes);
  for (Index c = 0; c < classes; ++c) b[c] = -0.5 * centroids.row(c).squaredNorm();
  l.bias = b;
  ToyClassifier t;
  t.spec.input_shape = Shape{features, 1, 1};
  t.spec.layers.emplace_back(std::move(l));
  t.data.shape = t.spec.input_shape;
  std::vector<int> labels;
  for (std::size_t i = 0; i < n; ++i) {
    const Index c = static_cast<Index>(i % static_cast<std::size_t>(classes));
    Vector x = centroids.row(c).transpose();
    for (Index k = 0; k < features; ++k) x[k] += spread * normal(eng);
    t.data.samples.push_back(std::move(x));
    labels.push_back(static_cast<int>(c));
  }
  t.data.labels = labels;
  return t;
}

}  // namespace memse::fixtures
