#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tzsl/errors.hpp"
#include "tzsl/matrix.hpp"
#include "tzsl/net.hpp"
#include "tzsl/optim.hpp"
#include "tzsl/rng.hpp"

namespace tzsl {

struct ClassifierConfig {
  int epochs = 25;
  int batch_size = 64;
  OptimConfig optim;  // same settings as the main training by default
};

// Single fully connected layer + softmax, trained with cross-entropy.
template <class T>
struct LinearClassifier {
  DenseNet<T> net;  // one linear layer, classes x dim
  std::vector<std::string> warnings;

  std::size_t num_classes() const { return net.raw_out_dim(); }

  Mat<T> logits(const Mat<T>& x) const { return forward(net, x); }

  std::vector<int> predict(const Mat<T>& x) const {
    Mat<T> l = logits(x);
    std::vector<int> out(l.rows);
    for (std::size_t i = 0; i < l.rows; ++i) {
      auto row = l.row(i);
      out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
  }
};

namespace detail {

// Softmax cross-entropy gradient in closed form: (softmax - onehot) / batch.
template <class T>
GradientSet<T> softmax_ce_gradient(const DenseNet<T>& net, const Mat<T>& x,
                                   std::span<const int> labels) {
  Mat<T> logits = forward(net, x);
  Mat<T> dlogits(logits.rows, logits.cols);
  const T inv_batch = T(1) / static_cast<T>(logits.rows);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    auto row = logits.row(i);
    const T maxv = *std::max_element(row.begin(), row.end());
    T denom = T(0);
    for (std::size_t j = 0; j < logits.cols; ++j) {
      dlogits(i, j) = std::exp(row[j] - maxv);
      denom += dlogits(i, j);
    }
    for (std::size_t j = 0; j < logits.cols; ++j) dlogits(i, j) /= denom;
    dlogits(i, static_cast<std::size_t>(labels[i])) -= T(1);
    for (std::size_t j = 0; j < logits.cols; ++j) dlogits(i, j) *= inv_batch;
  }
  GradientSet<T> grads;
  grads.layers.emplace_back(matmul(transpose(dlogits), x),
                            Mat<T>(1, logits.cols));
  for (std::size_t i = 0; i < dlogits.rows; ++i)
    for (std::size_t j = 0; j < dlogits.cols; ++j)
      grads.layers[0].second(0, j) += dlogits(i, j);
  return grads;
}

}  // namespace detail

template <class T>
LinearClassifier<T> train_linear_classifier(const Mat<T>& x, std::span<const int> labels,
                                            std::size_t num_classes, const ClassifierConfig& cfg,
                                            std::uint64_t seed) {
  if (x.rows == 0) throw DataError("train_linear_classifier: empty training set");
  if (labels.size() != x.rows) throw DataError("train_linear_classifier: label count mismatch");

  LinearClassifier<T> clf;
  clf.net = init_net<T>(x.cols, {}, num_classes, Head::linear(), derive_seed(seed, "classifier"));

  std::vector<std::size_t> support(num_classes, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw DataError("train_linear_classifier: label out of range");
    support[static_cast<std::size_t>(y)] += 1;
  }
  for (std::size_t c = 0; c < num_classes; ++c)
    if (support[c] == 0)
      clf.warnings.push_back("class " + std::to_string(c) +
                             " absent from training set; it is unreachable");

  OptimizerState<T> state = OptimizerState<T>::for_net(clf.net);
  const std::size_t batch = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.batch_size));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, "classifier_shuffle", static_cast<std::uint64_t>(epoch)));
    const std::vector<std::size_t> order = shuffle_rng.permutation(x.rows);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
      Mat<T> bx = take_rows(x, std::span<const std::size_t>(idx));
      std::vector<int> by(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) by[i] = labels[idx[i]];
      GradientSet<T> grads = detail::softmax_ce_gradient(clf.net, bx, by);
      adamw_step(clf.net, grads, state, cfg.optim, "classifier_cross_entropy");
    }
  }
  return clf;
}

}  // namespace tzsl
