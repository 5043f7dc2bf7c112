#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "tzsl/autodiff.hpp"
#include "tzsl/config.hpp"
#include "tzsl/dataspace.hpp"
#include "tzsl/errors.hpp"
#include "tzsl/losses.hpp"
#include "tzsl/net.hpp"
#include "tzsl/optim.hpp"
#include "tzsl/rng.hpp"

namespace tzsl {

namespace detail {

// Softmax cross-entropy on the tape, log-sum-exp stabilized with a detached
// per-row max (a constant shift leaves the gradient exact).
template <class T>
Var graph_cross_entropy(Graph<T>& g, Var logits, std::span<const int> labels) {
  const Mat<T>& lv = g.value(logits);
  Mat<T> row_max(lv.rows, 1);
  Mat<T> onehot(lv.rows, lv.cols);
  for (std::size_t i = 0; i < lv.rows; ++i) {
    auto row = lv.row(i);
    row_max(i, 0) = *std::max_element(row.begin(), row.end());
    onehot(i, static_cast<std::size_t>(labels[i])) = T(1);
  }
  Var m = g.constant(std::move(row_max));
  Var shifted = g.sub(logits, g.broadcast_cols(m, lv.cols));
  Var lse = g.add(g.log(g.sum_cols(g.exp(shifted))), m);           // rows x 1
  Var picked = g.sum_cols(g.mul(logits, g.constant(std::move(onehot))));  // rows x 1
  return g.mean_all(g.sub(lse, picked));
}

}  // namespace detail

// Feature pre-tuning: autoencoder (latent dim = d_v) plus a regressor head
// and a linear classifier head, all supervised by seen data only, minimizing
// reconstruction + attribute regression + classification. Every feature block
// is then replaced by the encoder's latents, re-normalized to the sphere.
template <class T>
SplitDataset<T> pretune_features(const SplitDataset<T>& ds, const TrainConfig& cfg,
                                 const LogSink& sink) {
  validate_dataset(ds);
  const std::size_t d_v = ds.d_v();
  const std::size_t d_a = ds.d_a();
  const std::size_t n_s = ds.num_seen_classes();
  const std::uint64_t seed = derive_seed(cfg.seed, "pretune");

  DenseNet<T> enc = init_net<T>(d_v, cfg.hidden_dims, d_v, Head::linear(),
                                derive_seed(seed, "encoder"));
  DenseNet<T> dec = init_net<T>(d_v, cfg.hidden_dims, d_v, Head::linear(),
                                derive_seed(seed, "decoder"));
  DenseNet<T> reg = init_net<T>(d_v, {}, d_a, Head::linear(), derive_seed(seed, "regressor"));
  DenseNet<T> cls = init_net<T>(d_v, {}, n_s, Head::linear(), derive_seed(seed, "classifier"));

  OptimizerState<T> o_enc = OptimizerState<T>::for_net(enc);
  OptimizerState<T> o_dec = OptimizerState<T>::for_net(dec);
  OptimizerState<T> o_reg = OptimizerState<T>::for_net(reg);
  OptimizerState<T> o_cls = OptimizerState<T>::for_net(cls);

  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t n_rows = ds.seen_features.rows;
  for (int epoch = 0; epoch < cfg.pretune_epochs; ++epoch) {
    Rng shuffle(derive_seed(seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    const std::vector<std::size_t> order = shuffle.permutation(n_rows);
    double epoch_loss = 0.0;
    std::size_t steps = 0;
    for (std::size_t lo = 0; lo < n_rows; lo += batch) {
      const std::size_t hi = std::min(n_rows, lo + batch);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                   order.begin() + static_cast<std::ptrdiff_t>(hi));
      Mat<T> v = take_rows(ds.seen_features, std::span<const std::size_t>(idx));
      std::vector<int> y(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) y[i] = ds.seen_labels[idx[i]];
      Mat<T> a(idx.size(), d_a);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        auto src = ds.seen_attributes.row(static_cast<std::size_t>(y[i]));
        std::copy(src.begin(), src.end(), a.row(i).begin());
      }

      Graph<T> g;
      BoundNet<T> be = bind(g, enc, true);
      BoundNet<T> bd = bind(g, dec, true);
      BoundNet<T> br = bind(g, reg, true);
      BoundNet<T> bc = bind(g, cls, true);

      const T inv_batch = T(1) / static_cast<T>(v.rows);
      Var latent = apply(g, be, g.constant(v));
      Var recon = g.scale(g.sum(g.square(g.sub(apply(g, bd, latent), g.constant(v)))), inv_batch);
      Var l_reg = g.scale(g.sum(g.abs(g.sub(apply(g, br, latent), g.constant(a)))), inv_batch);
      Var l_cls = detail::graph_cross_entropy(g, apply(g, bc, latent),
                                              std::span<const int>(y));
      Var total = g.add(g.add(recon, l_reg), l_cls);

      auto grads = param_gradients<T>(g, total, {&be, &bd, &br, &bc}, "pretune_total");
      adamw_step(enc, grads[0], o_enc, cfg.optim, "pretune_total");
      adamw_step(dec, grads[1], o_dec, cfg.optim, "pretune_total");
      adamw_step(reg, grads[2], o_reg, cfg.optim, "pretune_total");
      adamw_step(cls, grads[3], o_cls, cfg.optim, "pretune_total");
      epoch_loss += scalar_value(g, total);
      steps += 1;
    }
    if (sink) {
      json line;
      line["event"] = "pretune_epoch";
      line["epoch"] = epoch;
      line["mean_loss"] = epoch_loss / static_cast<double>(steps);
      sink(line);
    }
  }

  auto encode = [&](const Mat<T>& x) {
    if (x.rows == 0) return x;
    Mat<T> latent = forward(enc, x);
    normalize_rows_inplace(latent, FeatureNorm::kL2, static_cast<T>(cfg.radius));
    return latent;
  };
  SplitDataset<T> out = ds;
  out.seen_features = encode(ds.seen_features);
  out.unseen_features = encode(ds.unseen_features);
  out.seen_test_features = encode(ds.seen_test_features);
  validate_dataset(out);
  return out;
}

}  // namespace tzsl
