#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tzsl/errors.hpp"
#include "tzsl/matrix.hpp"
#include "tzsl/net.hpp"

namespace tzsl {

struct OptimConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  double epsilon = 1e-8;
};

// First/second moment accumulators mirroring a net's layers.
template <class T>
struct OptimizerState {
  std::vector<std::pair<Mat<T>, Mat<T>>> m;  // (W, b) first moments
  std::vector<std::pair<Mat<T>, Mat<T>>> v;  // (W, b) second moments
  long step = 0;

  static OptimizerState for_net(const DenseNet<T>& net) {
    OptimizerState st;
    for (const auto& layer : net.layers) {
      st.m.emplace_back(Mat<T>::zeros(layer.weight.rows, layer.weight.cols),
                        Mat<T>::zeros(layer.bias.rows, layer.bias.cols));
      st.v.emplace_back(Mat<T>::zeros(layer.weight.rows, layer.weight.cols),
                        Mat<T>::zeros(layer.bias.rows, layer.bias.cols));
    }
    return st;
  }

  bool mirrors(const DenseNet<T>& net) const {
    if (m.size() != net.layers.size() || v.size() != net.layers.size()) return false;
    for (std::size_t l = 0; l < m.size(); ++l)
      if (!m[l].first.same_shape(net.layers[l].weight) ||
          !m[l].second.same_shape(net.layers[l].bias))
        return false;
    return true;
  }
};

namespace detail {

template <class T>
void adamw_tensor(Mat<T>& p, const Mat<T>& grad, Mat<T>& m, Mat<T>& v, long step,
                  const OptimConfig& oc) {
  const T b1 = static_cast<T>(oc.beta1);
  const T b2 = static_cast<T>(oc.beta2);
  const T lr = static_cast<T>(oc.learning_rate);
  const T wd = static_cast<T>(oc.weight_decay);
  const T eps = static_cast<T>(oc.epsilon);
  const T bc1 = T(1) - static_cast<T>(std::pow(oc.beta1, static_cast<double>(step)));
  const T bc2 = T(1) - static_cast<T>(std::pow(oc.beta2, static_cast<double>(step)));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T gi = grad.data[i];
    m.data[i] = b1 * m.data[i] + (T(1) - b1) * gi;
    v.data[i] = b2 * v.data[i] + (T(1) - b2) * gi * gi;
    const T mhat = m.data[i] / bc1;
    const T vhat = v.data[i] / bc2;
    p.data[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p.data[i]);
  }
}

}  // namespace detail

// Bias-corrected moment update with decoupled weight decay.
template <class T>
void adamw_step(DenseNet<T>& net, const GradientSet<T>& grads, OptimizerState<T>& state,
                const OptimConfig& oc, const std::string& loss_name = "loss") {
  if (!grads.mirrors(net)) throw Error("adamw_step: gradient shapes do not mirror net");
  if (!state.mirrors(net)) throw Error("adamw_step: optimizer state does not mirror net");
  if (!grads.all_finite())
    throw NumericError("adamw_step: non-finite gradient from term '" + loss_name + "'");
  state.step += 1;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    detail::adamw_tensor(net.layers[l].weight, grads.layers[l].first, state.m[l].first,
                         state.v[l].first, state.step, oc);
    detail::adamw_tensor(net.layers[l].bias, grads.layers[l].second, state.m[l].second,
                         state.v[l].second, state.step, oc);
  }
}

}  // namespace tzsl
