#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tzsl/autodiff.hpp"
#include "tzsl/errors.hpp"
#include "tzsl/matrix.hpp"
#include "tzsl/rng.hpp"

namespace tzsl {

enum class HeadKind : unsigned char { kLinear, kL2Norm, kSigmoid, kGaussian };

struct Head {
  HeadKind kind = HeadKind::kLinear;
  double radius = 1.0;   // kL2Norm
  int gaussian_dim = 0;  // kGaussian: final layer emits 2 * gaussian_dim

  static Head linear() { return {HeadKind::kLinear, 0.0, 0}; }
  static Head l2(double r) { return {HeadKind::kL2Norm, r, 0}; }
  static Head sigmoid() { return {HeadKind::kSigmoid, 0.0, 0}; }
  static Head gaussian(int k) { return {HeadKind::kGaussian, 0.0, k}; }
};

// Fully connected net: leaky-rectifier between layers, head on the last.
template <class T>
struct DenseNet {
  struct Layer {
    Mat<T> weight;  // out x in
    Mat<T> bias;    // 1 x out
  };

  std::vector<Layer> layers;
  T leaky_slope = T(0.2);
  Head head;

  std::size_t in_dim() const { return layers.front().weight.cols; }
  std::size_t raw_out_dim() const { return layers.back().weight.rows; }
  std::size_t first_hidden_dim() const { return layers.front().weight.rows; }

  bool same_parameters(const DenseNet& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t l = 0; l < layers.size(); ++l)
      if (layers[l].weight.data != o.layers[l].weight.data ||
          layers[l].bias.data != o.layers[l].bias.data)
        return false;
    return true;
  }
};

template <class T>
void validate_layer_chain(const DenseNet<T>& net) {
  if (net.layers.empty()) throw Error("DenseNet: no layers");
  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l)
    if (net.layers[l].weight.rows != net.layers[l + 1].weight.cols)
      throw Error("DenseNet: layer dimensions do not chain");
  for (const auto& layer : net.layers) {
    if (layer.bias.rows != 1 || layer.bias.cols != layer.weight.rows)
      throw Error("DenseNet: bias shape must be 1 x out");
    if (!layer.weight.all_finite() || !layer.bias.all_finite())
      throw Error("DenseNet: non-finite parameter");
  }
  if (net.head.kind == HeadKind::kGaussian &&
      net.raw_out_dim() != 2 * static_cast<std::size_t>(net.head.gaussian_dim))
    throw Error("DenseNet: gaussian head needs final out == 2k");
}

// Weights ~ N(0, 0.02), zero biases; deterministic in `seed`.
template <class T>
DenseNet<T> init_net(std::size_t in_dim, const std::vector<std::size_t>& hidden_dims,
                     std::size_t out_dim, Head head, std::uint64_t seed,
                     T leaky_slope = T(0.2)) {
  if (in_dim == 0 || out_dim == 0) throw Error("init_net: dimensions must be positive");
  for (std::size_t h : hidden_dims)
    if (h == 0) throw Error("init_net: dimensions must be positive");

  const std::size_t final_out =
      head.kind == HeadKind::kGaussian ? 2 * static_cast<std::size_t>(head.gaussian_dim) : out_dim;

  DenseNet<T> net;
  net.head = head;
  net.leaky_slope = leaky_slope;
  Rng rng(derive_seed(seed, "net_init"));
  std::size_t prev = in_dim;
  std::vector<std::size_t> outs(hidden_dims);
  outs.push_back(final_out);
  for (std::size_t d : outs) {
    typename DenseNet<T>::Layer layer;
    layer.weight = rng.normal_mat<T>(d, prev, 0.02);
    layer.bias = Mat<T>::zeros(1, d);
    net.layers.push_back(std::move(layer));
    prev = d;
  }
  validate_layer_chain(net);
  return net;
}

namespace detail {

template <class T>
Mat<T> add_bias_rows(Mat<T> x, const Mat<T>& bias) {
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) x(i, j) += bias(0, j);
  return x;
}

template <class T>
void leaky_inplace(Mat<T>& x, T slope) {
  for (auto& v : x.data)
    if (v < T(0)) v *= slope;
}

// Same operation order as the graph composition (divide by the norm, then
// scale by the radius) so both paths produce identical bits.
template <class T>
Mat<T> rows_l2_normalize_mat(const Mat<T>& x, T radius) {
  Mat<T> out = x;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const T n = l2_norm(x.row(i));
    if (!(static_cast<double>(n) > 1e-20))
      throw NumericError("l2 normalization hit a (near-)zero-norm row");
    for (auto& v : out.row(i)) v = (v / n) * radius;
  }
  return out;
}

}  // namespace detail

// Body output before the head (batch rows).
template <class T>
Mat<T> forward_body(const DenseNet<T>& net, const Mat<T>& x) {
  if (x.cols != net.in_dim()) throw Error("forward: input dim mismatch");
  Mat<T> h = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    h = detail::add_bias_rows(matmul(h, transpose(net.layers[l].weight)), net.layers[l].bias);
    if (l + 1 < net.layers.size()) detail::leaky_inplace(h, net.leaky_slope);
  }
  return h;
}

// Full forward. For a gaussian head this is the raw 2k-wide output; use
// forward_gaussian for the (mean, logvar) split.
template <class T>
Mat<T> forward(const DenseNet<T>& net, const Mat<T>& x) {
  Mat<T> h = forward_body(net, x);
  switch (net.head.kind) {
    case HeadKind::kLinear:
    case HeadKind::kGaussian:
      return h;
    case HeadKind::kL2Norm:
      return detail::rows_l2_normalize_mat(h, static_cast<T>(net.head.radius));
    case HeadKind::kSigmoid:
      for (auto& v : h.data) v = T(1) / (T(1) + std::exp(-v));
      return h;
  }
  throw Error("forward: unknown head");
}

template <class T>
std::pair<Mat<T>, Mat<T>> forward_gaussian(const DenseNet<T>& net, const Mat<T>& x) {
  if (net.head.kind != HeadKind::kGaussian) throw Error("forward_gaussian: head is not gaussian");
  Mat<T> h = forward_body(net, x);
  const std::size_t k = static_cast<std::size_t>(net.head.gaussian_dim);
  Mat<T> mean(h.rows, k), logvar(h.rows, k);
  for (std::size_t i = 0; i < h.rows; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      mean(i, j) = h(i, j);
      logvar(i, j) = h(i, j + k);
    }
  return {std::move(mean), std::move(logvar)};
}

// (hidden, output): hidden is the first layer's output, by default after the
// leaky rectifier (config switch below for the pre-activation reading).
template <class T>
std::pair<Mat<T>, Mat<T>> forward_hidden(const DenseNet<T>& net, const Mat<T>& x,
                                         bool post_activation = true) {
  if (x.cols != net.in_dim()) throw Error("forward_hidden: input dim mismatch");
  Mat<T> h =
      detail::add_bias_rows(matmul(x, transpose(net.layers[0].weight)), net.layers[0].bias);
  if (post_activation) detail::leaky_inplace(h, net.leaky_slope);
  return {h, forward(net, x)};
}

// z = mean + exp(logvar / 2) * eps
template <class T>
Mat<T> reparameterize(const Mat<T>& mean, const Mat<T>& logvar, const Mat<T>& eps) {
  if (!mean.same_shape(logvar) || !mean.same_shape(eps))
    throw Error("reparameterize: shape mismatch");
  Mat<T> z(mean.rows, mean.cols);
  for (std::size_t i = 0; i < z.size(); ++i)
    z.data[i] = mean.data[i] + std::exp(T(0.5) * logvar.data[i]) * eps.data[i];
  return z;
}

// ---- graph-bound application -------------------------------------------

// A net's parameters registered on a tape, either as trainable leaves or as
// frozen constants.
template <class T>
struct BoundNet {
  const DenseNet<T>* net = nullptr;
  std::vector<std::pair<Var, Var>> params;  // (weight, bias) per layer
  bool trainable = false;
};

template <class T>
BoundNet<T> bind(Graph<T>& g, const DenseNet<T>& net, bool trainable) {
  BoundNet<T> bn;
  bn.net = &net;
  bn.trainable = trainable;
  for (const auto& layer : net.layers) {
    Var w = trainable ? g.leaf(layer.weight) : g.constant(layer.weight);
    Var b = trainable ? g.leaf(layer.bias) : g.constant(layer.bias);
    bn.params.emplace_back(w, b);
  }
  return bn;
}

template <class T>
Var apply_body(Graph<T>& g, const BoundNet<T>& bn, Var x) {
  const DenseNet<T>& net = *bn.net;
  Var h = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    h = g.matmul(h, g.transpose(bn.params[l].first));
    h = g.add(h, g.broadcast_rows(bn.params[l].second, g.value(h).rows));
    if (l + 1 < net.layers.size()) h = g.leaky_relu(h, net.leaky_slope);
  }
  return h;
}

template <class T>
Var apply(Graph<T>& g, const BoundNet<T>& bn, Var x) {
  Var h = apply_body(g, bn, x);
  switch (bn.net->head.kind) {
    case HeadKind::kLinear:
    case HeadKind::kGaussian:
      return h;
    case HeadKind::kL2Norm:
      return g.rows_l2_normalize(h, static_cast<T>(bn.net->head.radius));
    case HeadKind::kSigmoid:
      return g.sigmoid(h);
  }
  throw Error("apply: unknown head");
}

template <class T>
std::pair<Var, Var> apply_gaussian(Graph<T>& g, const BoundNet<T>& bn, Var x) {
  if (bn.net->head.kind != HeadKind::kGaussian) throw Error("apply_gaussian: head is not gaussian");
  Var h = apply_body(g, bn, x);
  const std::size_t k = static_cast<std::size_t>(bn.net->head.gaussian_dim);
  return {g.slice_cols(h, 0, k), g.slice_cols(h, k, 2 * k)};
}

// ---- gradients -----------------------------------------------------------

template <class T>
struct GradientSet {
  std::vector<std::pair<Mat<T>, Mat<T>>> layers;  // (dW, db)

  bool mirrors(const DenseNet<T>& net) const {
    if (layers.size() != net.layers.size()) return false;
    for (std::size_t l = 0; l < layers.size(); ++l)
      if (!layers[l].first.same_shape(net.layers[l].weight) ||
          !layers[l].second.same_shape(net.layers[l].bias))
        return false;
    return true;
  }

  bool all_finite() const {
    for (const auto& [w, b] : layers)
      if (!w.all_finite() || !b.all_finite()) return false;
    return true;
  }
};

// Exact gradient of a scalar-output net with respect to its input rows.
template <class T>
Mat<T> input_gradient(const DenseNet<T>& net, const Mat<T>& x) {
  if (net.raw_out_dim() != 1 || net.head.kind != HeadKind::kLinear)
    throw Error("input_gradient: net must have a scalar linear head");
  Graph<T> g;
  Var xl = g.leaf(x);
  BoundNet<T> bn = bind(g, net, /*trainable=*/false);
  // Rows are independent, so the gradient of the batch sum is the per-row
  // gradient matrix.
  Var s = g.sum(apply(g, bn, xl));
  return g.value(g.gradient(s, xl));
}

// Reverse-mode gradients of `loss` for every parameter of the given bound
// nets (one gradients() pass shared across nets).
template <class T>
std::vector<GradientSet<T>> param_gradients(Graph<T>& g, Var loss,
                                            const std::vector<const BoundNet<T>*>& nets,
                                            const std::string& loss_name = "loss") {
  const Mat<T>& lv = g.value(loss);
  if (lv.rows != 1 || lv.cols != 1) throw Error("param_gradients: loss must be scalar");
  if (!lv.all_finite()) throw NumericError("non-finite loss in term '" + loss_name + "'");

  std::vector<Var> wrt;
  for (const BoundNet<T>* bn : nets)
    for (const auto& [w, b] : bn->params) {
      wrt.push_back(w);
      wrt.push_back(b);
    }
  std::vector<Var> grads = g.gradients(loss, wrt);

  std::vector<GradientSet<T>> out;
  std::size_t cursor = 0;
  for (const BoundNet<T>* bn : nets) {
    GradientSet<T> gs;
    for (std::size_t l = 0; l < bn->params.size(); ++l) {
      gs.layers.emplace_back(g.value(grads[cursor]), g.value(grads[cursor + 1]));
      cursor += 2;
    }
    if (!gs.all_finite())
      throw NumericError("non-finite gradient from term '" + loss_name + "'");
    out.push_back(std::move(gs));
  }
  return out;
}

// ---- model set ------------------------------------------------------------

// The six bodies: encoder E, generator G, regressor R, conditional seen
// critic D, unconditional unseen critic Du, attribute critic Da.
template <class T>
struct ModelSet {
  DenseNet<T> encoder;
  DenseNet<T> generator;
  DenseNet<T> regressor;
  DenseNet<T> critic_seen;
  DenseNet<T> critic_unseen;
  DenseNet<T> critic_attr;

  std::size_t d_v = 0;
  std::size_t d_a = 0;
  std::size_t latent_dim = 0;
};

template <class T>
ModelSet<T> make_model_set(std::size_t d_v, std::size_t d_a, std::size_t latent_dim,
                           const std::vector<std::size_t>& hidden_dims, double radius,
                           std::uint64_t seed, T leaky_slope = T(0.2)) {
  if (d_v == 0 || d_a == 0) throw Error("make_model_set: dataset dims must be positive");
  const std::size_t k = latent_dim == 0 ? d_a : latent_dim;
  ModelSet<T> m;
  m.d_v = d_v;
  m.d_a = d_a;
  m.latent_dim = k;
  m.encoder = init_net<T>(d_v + d_a, hidden_dims, k, Head::gaussian(static_cast<int>(k)),
                          derive_seed(seed, "encoder"), leaky_slope);
  m.generator = init_net<T>(d_a + k, hidden_dims, d_v, Head::l2(radius),
                            derive_seed(seed, "generator"), leaky_slope);
  m.regressor = init_net<T>(d_v, hidden_dims, d_a, Head::l2(radius),
                            derive_seed(seed, "regressor"), leaky_slope);
  m.critic_seen = init_net<T>(d_v + d_a, hidden_dims, 1, Head::linear(),
                              derive_seed(seed, "critic_seen"), leaky_slope);
  m.critic_unseen = init_net<T>(d_v, hidden_dims, 1, Head::linear(),
                                derive_seed(seed, "critic_unseen"), leaky_slope);
  m.critic_attr = init_net<T>(d_a, hidden_dims, 1, Head::linear(),
                              derive_seed(seed, "critic_attr"), leaky_slope);
  return m;
}

}  // namespace tzsl
