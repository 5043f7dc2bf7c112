#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tzsl/config.hpp"
#include "tzsl/dataspace.hpp"
#include "tzsl/eval.hpp"
#include "tzsl/losses.hpp"
#include "tzsl/net.hpp"
#include "tzsl/optim.hpp"
#include "tzsl/prior.hpp"
#include "tzsl/train.hpp"

namespace tzsl {

// Histogram on a fixed grid shared by both runs; values outside the grid are
// clamped into the edge bins.
struct ValueHistogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> density;  // normalized to sum 1

  double bin_width() const { return (hi - lo) / static_cast<double>(density.size()); }
};

template <class T>
ValueHistogram value_histogram(const Mat<T>& values, double lo, double hi, std::size_t bins) {
  ValueHistogram h;
  h.lo = lo;
  h.hi = hi;
  h.density.assign(bins, 0.0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (const T& raw : values.data) {
    double v = static_cast<double>(raw);
    std::size_t b;
    if (v <= lo) {
      b = 0;
    } else if (v >= hi) {
      b = bins - 1;
    } else {
      b = static_cast<std::size_t>((v - lo) / width);
      if (b >= bins) b = bins - 1;
    }
    h.density[b] += 1.0;
  }
  for (double& d : h.density) d /= static_cast<double>(values.size());
  return h;
}

// 1-D earth-mover distance between two histograms on the same grid:
// sum |CDF difference| * bin width.
inline double histogram_emd(const ValueHistogram& a, const ValueHistogram& b) {
  if (a.density.size() != b.density.size()) throw Error("histogram_emd: grid mismatch");
  double cdf_a = 0.0, cdf_b = 0.0, emd = 0.0;
  for (std::size_t i = 0; i < a.density.size(); ++i) {
    cdf_a += a.density[i];
    cdf_b += b.density[i];
    emd += std::abs(cdf_a - cdf_b) * a.bin_width();
  }
  return emd;
}

struct NormRunResult {
  std::string name;  // "l2" | "minmax"
  std::vector<double> accuracy_by_epoch;
  double final_accuracy = 0.0;
  int epochs_to_90pct = 0;  // 1-based epoch reaching 90% of final accuracy
  ValueHistogram hist_real;
  ValueHistogram hist_synth;
  double emd = 0.0;
};

struct NormExperimentResult {
  NormRunResult l2;
  NormRunResult minmax;
  double grid_lo = 0.0;
  double grid_hi = 0.0;
  std::size_t bins = 50;

  json to_json() const {
    auto run_json = [](const NormRunResult& r) {
      return json{{"name", r.name},
                  {"accuracy_by_epoch", r.accuracy_by_epoch},
                  {"final_accuracy", r.final_accuracy},
                  {"epochs_to_90pct", r.epochs_to_90pct},
                  {"emd", r.emd}};
    };
    return json{{"l2", run_json(l2)},
                {"minmax", run_json(minmax)},
                {"grid", json{{"lo", grid_lo}, {"hi", grid_hi}, {"bins", bins}}}};
  }
};

namespace detail {

// The compressed three-module model: generator plus the two visual critics,
// trained adversarially only (no encoder, no regressor).
template <class T>
NormRunResult simple_gan_run(const SplitDataset<T>& prepared, const TrainConfig& cfg,
                             bool sigmoid_head, const std::string& name, double grid_lo,
                             double grid_hi, std::size_t bins, const LogSink& sink) {
  const T radius = static_cast<T>(cfg.radius);
  const std::size_t k = cfg.latent_dim == 0 ? prepared.d_a() : cfg.latent_dim;
  const InterpMode interp_mode = sigmoid_head ? InterpMode::kLinear : InterpMode::kHypersphere;

  DenseNet<T> gen = init_net<T>(prepared.d_a() + k, cfg.hidden_dims, prepared.d_v(),
                                sigmoid_head ? Head::sigmoid() : Head::l2(cfg.radius),
                                derive_seed(cfg.seed, "simple_gen"));
  DenseNet<T> critic_seen = init_net<T>(prepared.d_v() + prepared.d_a(), cfg.hidden_dims, 1,
                                        Head::linear(), derive_seed(cfg.seed, "simple_d"));
  DenseNet<T> critic_unseen = init_net<T>(prepared.d_v(), cfg.hidden_dims, 1, Head::linear(),
                                          derive_seed(cfg.seed, "simple_du"));
  OptimizerState<T> o_gen = OptimizerState<T>::for_net(gen);
  OptimizerState<T> o_d = OptimizerState<T>::for_net(critic_seen);
  OptimizerState<T> o_du = OptimizerState<T>::for_net(critic_unseen);

  const ClassPrior prior = [&] {
    auto truth = true_unseen_prior(prepared);
    return truth ? *truth : uniform_prior(prepared.num_unseen_classes());
  }();

  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t n_seen = prepared.seen_features.rows;
  const std::size_t slots = (n_seen + batch - 1) / batch;

  NormRunResult result;
  result.name = name;

  auto critic_update = [&](DenseNet<T>& critic, OptimizerState<T>& opt, const Mat<T>& real_in,
                           const Mat<T>& fake_in, const Mat<T>& interp, const Mat<T>* cond,
                           const char* loss_name) {
    Graph<T> g;
    BoundNet<T> bc = bind(g, critic, true);
    Var pen = gradient_penalty(g, bc, interp, cond);
    Var real_scores = apply(g, bc, g.constant(real_in));
    Var fake_scores = apply(g, bc, g.constant(fake_in));
    CriticLossVars<T> parts = critic_loss_from_scores<T>(g, real_scores, fake_scores, pen);
    auto grads = param_gradients<T>(g, parts.objective, {&bc}, loss_name);
    adamw_step(critic, grads[0], opt, cfg.optim, loss_name);
  };

  auto eval_accuracy = [&](int epoch) {
    auto sampler = generator_sampler(gen, prepared.unseen_attributes, k);
    const std::vector<std::size_t> counts(prepared.num_unseen_classes(),
                                          cfg.synth_per_class_eval);
    auto [sx, sy] = synthesize_labeled_set<T>(
        sampler, counts, derive_seed(cfg.seed, "norm_eval", static_cast<std::uint64_t>(epoch)));
    ClassifierConfig clf_cfg;
    clf_cfg.epochs = cfg.classifier_epochs;
    clf_cfg.batch_size = cfg.batch_size;
    clf_cfg.optim = cfg.optim;
    LinearClassifier<T> clf = train_linear_classifier(
        sx, std::span<const int>(sy), prepared.num_unseen_classes(), clf_cfg,
        derive_seed(cfg.seed, "norm_eval_clf", static_cast<std::uint64_t>(epoch)));
    const std::vector<int> preds = clf.predict(prepared.unseen_features);
    return per_class_top1(preds, prepared.unseen_labels_eval, prepared.num_unseen_classes())
        .mean;
  };

  detail::TrainView<T> view = detail::full_view(prepared);
  for (int epoch = 0; epoch < cfg.epochs_transductive; ++epoch) {
    detail::EpochStreams streams(cfg.seed, epoch);
    const std::vector<std::size_t> order = streams.shuffle.permutation(n_seen);
    for (std::size_t slot = 0; slot < slots; ++slot) {
      for (int c = 0; c < cfg.critic_steps; ++c) {
        auto sb = detail::draw_seen_batch(view, streams.seen_draw, batch);
        Mat<T> z = streams.noise.template normal_mat<T>(batch, k);
        Mat<T> fake_v = forward(gen, hstack(sb.a, z));
        auto ts = detail::draw_ts<T>(streams.interp, batch);
        critic_update(critic_seen, o_d, hstack(sb.v, sb.a), hstack(fake_v, sb.a),
                      interpolate_rows(sb.v, fake_v, std::span<const T>(ts), radius, interp_mode),
                      &sb.a, "critic_seen");

        Mat<T> real_u = detail::draw_unseen_batch(view, streams.unseen_draw, batch);
        Mat<T> a_u = detail::draw_prior_attributes(*view.unseen_attributes, prior,
                                                   streams.prior_labels, batch);
        Mat<T> zu = streams.noise.template normal_mat<T>(batch, k);
        Mat<T> fake_u = forward(gen, hstack(a_u, zu));
        auto tu = detail::draw_ts<T>(streams.interp, batch);
        critic_update(critic_unseen, o_du, real_u, fake_u,
                      interpolate_rows(real_u, fake_u, std::span<const T>(tu), radius,
                                       interp_mode),
                      nullptr, "critic_unseen");
      }

      const std::size_t lo = slot * batch;
      const std::size_t hi = std::min(n_seen, lo + batch);
      std::vector<std::size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                     order.begin() + static_cast<std::ptrdiff_t>(hi));
      auto sb = detail::seen_batch_from_indices(view, std::span<const std::size_t>(chunk));

      Graph<T> g;
      BoundNet<T> bg = bind(g, gen, true);
      BoundNet<T> bd = bind(g, critic_seen, false);
      BoundNet<T> bdu = bind(g, critic_unseen, false);
      Mat<T> z = streams.noise.template normal_mat<T>(sb.v.rows, k);
      auto ts = detail::draw_ts<T>(streams.interp, sb.v.rows);
      CriticLossVars<T> seen_cl = seen_critic_loss(g, bd, bg, sb.v, sb.a, z,
                                                   std::span<const T>(ts), radius, interp_mode);
      Mat<T> real_u = detail::draw_unseen_batch(view, streams.unseen_draw, batch);
      Mat<T> a_u = detail::draw_prior_attributes(*view.unseen_attributes, prior,
                                                 streams.prior_labels, batch);
      Mat<T> zu = streams.noise.template normal_mat<T>(batch, k);
      auto tu = detail::draw_ts<T>(streams.interp, batch);
      CriticLossVars<T> unseen_cl = unseen_critic_loss(g, bdu, bg, real_u, a_u, zu,
                                                       std::span<const T>(tu), radius,
                                                       interp_mode);
      Var obj = g.add(g.scale(seen_cl.adversary, static_cast<T>(cfg.alpha)),
                      g.scale(unseen_cl.adversary, static_cast<T>(cfg.gamma)));
      auto grads = param_gradients<T>(g, obj, {&bg}, "simple_gan_generator");
      adamw_step(gen, grads[0], o_gen, cfg.optim, "simple_gan_generator");
    }

    result.accuracy_by_epoch.push_back(eval_accuracy(epoch));
    if (sink) {
      json line;
      line["event"] = "norm_experiment_epoch";
      line["run"] = name;
      line["epoch"] = epoch;
      line["accuracy"] = result.accuracy_by_epoch.back();
      sink(line);
    }
  }

  result.final_accuracy = result.accuracy_by_epoch.empty() ? 0.0
                                                           : result.accuracy_by_epoch.back();
  result.epochs_to_90pct = static_cast<int>(result.accuracy_by_epoch.size());
  for (std::size_t e = 0; e < result.accuracy_by_epoch.size(); ++e) {
    if (result.accuracy_by_epoch[e] >= 0.9 * result.final_accuracy) {
      result.epochs_to_90pct = static_cast<int>(e) + 1;
      break;
    }
  }

  // Histogram of aggregated feature values, real vs synthesized, with the
  // synthesized set mirroring the real class composition.
  auto sampler = generator_sampler(gen, prepared.unseen_attributes, k);
  const std::size_t per_class =
      std::max<std::size_t>(1, prepared.unseen_features.rows / prepared.num_unseen_classes());
  const std::vector<std::size_t> counts = synthesis_counts(
      prepared.num_unseen_classes(), per_class, "prior", &prior);
  auto [sx, sy] =
      synthesize_labeled_set<T>(sampler, counts, derive_seed(cfg.seed, "norm_hist"));
  result.hist_real = value_histogram(prepared.unseen_features, grid_lo, grid_hi, bins);
  result.hist_synth = value_histogram(sx, grid_lo, grid_hi, bins);
  result.emd = histogram_emd(result.hist_real, result.hist_synth);
  return result;
}

}  // namespace detail

// Train the simplified model twice on the same raw dataset: once with the
// L2-normalization head, once with the sigmoid head on Min-Max data; report
// real-vs-synthesized value histograms and per-epoch accuracy curves.
template <class T>
NormExperimentResult run_norm_experiment(const SplitDataset<T>& raw, const TrainConfig& cfg,
                                         const LogSink& sink = {}) {
  NormExperimentResult out;
  out.bins = 50;
  out.grid_lo = -1.25 * cfg.radius;
  out.grid_hi = 1.25 * cfg.radius;

  SplitDataset<T> l2_ds = prepare_dataset(raw, FeatureNorm::kL2, static_cast<T>(cfg.radius));
  out.l2 = detail::simple_gan_run(l2_ds, cfg, /*sigmoid_head=*/false, "l2", out.grid_lo,
                                  out.grid_hi, out.bins, sink);

  SplitDataset<T> mm_ds = prepare_dataset(raw, FeatureNorm::kMinMax, static_cast<T>(cfg.radius));
  out.minmax = detail::simple_gan_run(mm_ds, cfg, /*sigmoid_head=*/true, "minmax", out.grid_lo,
                                      out.grid_hi, out.bins, sink);
  return out;
}

}  // namespace tzsl
