#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tzsl/config.hpp"
#include "tzsl/dataspace.hpp"
#include "tzsl/errors.hpp"
#include "tzsl/eval.hpp"
#include "tzsl/losses.hpp"
#include "tzsl/net.hpp"
#include "tzsl/optim.hpp"
#include "tzsl/pretune.hpp"
#include "tzsl/prior.hpp"
#include "tzsl/rng.hpp"

namespace tzsl {

template <class T>
struct TrainState {
  ModelSet<T> models;
  OptimizerState<T> opt_encoder, opt_generator, opt_regressor;
  OptimizerState<T> opt_critic_seen, opt_critic_unseen, opt_critic_attr;
  ClassPrior prior;  // current unseen-class prior used for sampling
  int epoch = 0;     // global epoch counter across both phases
  std::vector<LossBreakdown> history;
  std::vector<std::pair<int, ClassPrior>> prior_history;
  std::uint64_t seed = 0;
};

template <class T>
TrainState<T> init_train_state(const SplitDataset<T>& ds, const TrainConfig& cfg) {
  TrainState<T> st;
  st.models = make_model_set<T>(ds.d_v(), ds.d_a(), cfg.latent_dim, cfg.hidden_dims, cfg.radius,
                                cfg.seed);
  if (cfg.sigmoid_generator) st.models.generator.head = Head::sigmoid();
  st.opt_encoder = OptimizerState<T>::for_net(st.models.encoder);
  st.opt_generator = OptimizerState<T>::for_net(st.models.generator);
  st.opt_regressor = OptimizerState<T>::for_net(st.models.regressor);
  st.opt_critic_seen = OptimizerState<T>::for_net(st.models.critic_seen);
  st.opt_critic_unseen = OptimizerState<T>::for_net(st.models.critic_unseen);
  st.opt_critic_attr = OptimizerState<T>::for_net(st.models.critic_attr);
  st.prior = uniform_prior(ds.num_unseen_classes());
  st.seed = cfg.seed;
  return st;
}

namespace detail {

// Read-only handle for one epoch. Inductive epochs receive a view without the
// unseen feature block; touching it trips the contract error.
template <class T>
struct TrainView {
  const Mat<T>* seen_v = nullptr;
  const std::vector<int>* seen_labels = nullptr;
  const Mat<T>* seen_attributes = nullptr;
  const Mat<T>* unseen_attributes = nullptr;
  const Mat<T>* unseen_v = nullptr;

  const Mat<T>& unseen() const {
    if (unseen_v == nullptr)
      throw ContractError("inductive contract: unseen features requested during inductive phase");
    return *unseen_v;
  }
};

template <class T>
TrainView<T> full_view(const SplitDataset<T>& ds) {
  return {&ds.seen_features, &ds.seen_labels, &ds.seen_attributes, &ds.unseen_attributes,
          &ds.unseen_features};
}

template <class T>
TrainView<T> inductive_view(const SplitDataset<T>& ds) {
  return {&ds.seen_features, &ds.seen_labels, &ds.seen_attributes, &ds.unseen_attributes,
          nullptr};
}

template <class T>
Mat<T> attribute_rows(const Mat<T>& table, std::span<const int> labels) {
  Mat<T> out(labels.size(), table.cols);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto src = table.row(static_cast<std::size_t>(labels[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

template <class T>
std::vector<T> draw_ts(Rng& rng, std::size_t n) {
  std::vector<T> ts(n);
  for (auto& t : ts) t = static_cast<T>(rng.uniform01());
  return ts;
}

// Per-epoch purpose-split streams: draws for one concern never shift another
// concern's stream, so disabling a term (weight zero) leaves the remaining
// sequence untouched.
struct EpochStreams {
  Rng shuffle, seen_draw, unseen_draw, prior_labels, noise, eps, interp;

  EpochStreams(std::uint64_t seed, int epoch)
      : shuffle(derive_seed(seed, "shuffle", static_cast<std::uint64_t>(epoch))),
        seen_draw(derive_seed(seed, "seen_draw", static_cast<std::uint64_t>(epoch))),
        unseen_draw(derive_seed(seed, "unseen_draw", static_cast<std::uint64_t>(epoch))),
        prior_labels(derive_seed(seed, "prior_labels", static_cast<std::uint64_t>(epoch))),
        noise(derive_seed(seed, "noise", static_cast<std::uint64_t>(epoch))),
        eps(derive_seed(seed, "eps", static_cast<std::uint64_t>(epoch))),
        interp(derive_seed(seed, "interp", static_cast<std::uint64_t>(epoch))) {}
};

template <class T>
struct SeenBatch {
  Mat<T> v;
  Mat<T> a;
};

template <class T>
SeenBatch<T> seen_batch_from_indices(const TrainView<T>& view,
                                     std::span<const std::size_t> idx) {
  SeenBatch<T> b;
  b.v = take_rows(*view.seen_v, idx);
  std::vector<int> labels(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = (*view.seen_labels)[idx[i]];
  b.a = attribute_rows(*view.seen_attributes, labels);
  return b;
}

template <class T>
SeenBatch<T> draw_seen_batch(const TrainView<T>& view, Rng& rng, std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = rng.index(view.seen_v->rows);
  return seen_batch_from_indices(view, std::span<const std::size_t>(idx));
}

template <class T>
Mat<T> draw_unseen_batch(const TrainView<T>& view, Rng& rng, std::size_t n) {
  const Mat<T>& pool = view.unseen();
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = rng.index(pool.rows);
  return take_rows(pool, std::span<const std::size_t>(idx));
}

// Prior-sampled attribute rows (the "prior sample" process).
template <class T>
Mat<T> draw_prior_attributes(const Mat<T>& table, const ClassPrior& prior, Rng& rng,
                             std::size_t n) {
  std::vector<int> labels(n);
  for (auto& y : labels)
    y = static_cast<int>(rng.categorical(std::span<const double>(prior.probs)));
  return attribute_rows(table, labels);
}

}  // namespace detail

// One epoch of the two-level schedule. Inductive epochs are the same code
// path with the unseen-data terms disabled (the inductive objective); with
// lambda = gamma = beta = 0 a transductive epoch therefore replays an
// inductive epoch bit-for-bit.
template <class T>
void run_epoch(TrainState<T>& st, const detail::TrainView<T>& view, const TrainConfig& cfg,
               bool inductive, const LogSink& sink = {}) {
  const T radius = static_cast<T>(cfg.radius);
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t n_seen = view.seen_v->rows;
  const std::size_t slots = (n_seen + batch - 1) / batch;
  const double lambda = inductive ? 0.0 : cfg.lambda;
  const double gamma = inductive ? 0.0 : cfg.gamma;
  const InterpMode interp_mode =
      cfg.sigmoid_generator ? InterpMode::kLinear : InterpMode::kHypersphere;

  detail::EpochStreams streams(st.seed, st.epoch);
  const std::vector<std::size_t> order = streams.shuffle.permutation(n_seen);
  const ClassPrior gen_prior =
      inductive ? uniform_prior(view.unseen_attributes->rows) : st.prior;

  // One critic update: minimize -adv + 10 * penalty.
  auto critic_update = [&](DenseNet<T>& critic, OptimizerState<T>& opt, const Mat<T>& real_in,
                           const Mat<T>& fake_in, const Mat<T>& interp, const Mat<T>* cond,
                           const std::string& name) {
    Graph<T> g;
    BoundNet<T> bc = bind(g, critic, /*trainable=*/true);
    Var pen = gradient_penalty(g, bc, interp, cond);
    Var real_scores = apply(g, bc, g.constant(real_in));
    Var fake_scores = apply(g, bc, g.constant(fake_in));
    CriticLossVars<T> parts = critic_loss_from_scores<T>(g, real_scores, fake_scores, pen);
    auto grads = param_gradients<T>(g, parts.objective, {&bc}, name);
    adamw_step(critic, grads[0], opt, cfg.optim, name);
    return std::pair<double, double>{scalar_value(g, parts.objective),
                                     scalar_value(g, parts.adversary)};
  };

  for (std::size_t slot = 0; slot < slots; ++slot) {
    LossBreakdown bd;

    // ---- level-2 critic steps -------------------------------------------
    for (int c = 0; c < cfg.critic_steps; ++c) {
      if (cfg.alpha != 0.0) {
        auto sb = detail::draw_seen_batch(view, streams.seen_draw, batch);
        Mat<T> z = streams.noise.template normal_mat<T>(batch, st.models.latent_dim);
        Mat<T> fake_v = forward(st.models.generator, hstack(sb.a, z));
        auto ts = detail::draw_ts<T>(streams.interp, batch);
        Mat<T> interp =
            interpolate_rows(sb.v, fake_v, std::span<const T>(ts), radius, interp_mode);
        auto [obj, adv] = critic_update(st.models.critic_seen, st.opt_critic_seen,
                                        hstack(sb.v, sb.a), hstack(fake_v, sb.a), interp, &sb.a,
                                        "critic_seen");
        bd.critic_obj_seen = obj;
      }
      if (gamma != 0.0) {
        Mat<T> real_u = detail::draw_unseen_batch(view, streams.unseen_draw, batch);
        Mat<T> a_u = detail::draw_prior_attributes(*view.unseen_attributes, st.prior,
                                                   streams.prior_labels, batch);
        Mat<T> z = streams.noise.template normal_mat<T>(batch, st.models.latent_dim);
        Mat<T> fake_u = forward(st.models.generator, hstack(a_u, z));
        auto ts = detail::draw_ts<T>(streams.interp, batch);
        Mat<T> interp =
            interpolate_rows(real_u, fake_u, std::span<const T>(ts), radius, interp_mode);
        auto [obj, adv] = critic_update(st.models.critic_unseen, st.opt_critic_unseen, real_u,
                                        fake_u, interp, nullptr, "critic_unseen");
        bd.critic_obj_unseen = obj;
        bd.adv_unseen = adv;
      }
    }

    // ---- level-2 generator/encoder step -----------------------------------
    {
      const std::size_t lo = slot * batch;
      const std::size_t hi = std::min(n_seen, lo + batch);
      std::vector<std::size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                     order.begin() + static_cast<std::ptrdiff_t>(hi));
      auto sb = detail::seen_batch_from_indices(view, std::span<const std::size_t>(chunk));
      const std::size_t rows = sb.v.rows;

      Graph<T> g;
      BoundNet<T> be = bind(g, st.models.encoder, true);
      BoundNet<T> bg = bind(g, st.models.generator, true);
      BoundNet<T> br = bind(g, st.models.regressor, false);
      BoundNet<T> bd_seen = bind(g, st.models.critic_seen, false);
      BoundNet<T> bd_unseen = bind(g, st.models.critic_unseen, false);

      Mat<T> eps = streams.eps.template normal_mat<T>(rows, st.models.latent_dim);
      VaeLossVars<T> vae = vae_loss(g, be, bg, sb.v, sb.a, eps);

      std::optional<CriticLossVars<T>> seen_cl;
      if (cfg.alpha != 0.0) {
        Mat<T> z = streams.noise.template normal_mat<T>(rows, st.models.latent_dim);
        auto ts = detail::draw_ts<T>(streams.interp, rows);
        seen_cl = seen_critic_loss(g, bd_seen, bg, sb.v, sb.a, z, std::span<const T>(ts), radius,
                                   interp_mode);
      }

      std::optional<Var> l_r_u;
      Mat<T> gen_a, z_u;
      if (cfg.beta != 0.0 || gamma != 0.0) {
        gen_a = detail::draw_prior_attributes(*view.unseen_attributes, gen_prior,
                                              streams.prior_labels, batch);
        z_u = streams.noise.template normal_mat<T>(batch, st.models.latent_dim);
      }
      if (cfg.beta != 0.0) l_r_u = cyclic_regressor_loss(g, br, bg, gen_a, z_u);

      std::optional<CriticLossVars<T>> unseen_cl;
      if (gamma != 0.0) {
        Mat<T> real_u = detail::draw_unseen_batch(view, streams.unseen_draw, batch);
        auto ts = detail::draw_ts<T>(streams.interp, batch);
        unseen_cl = unseen_critic_loss(g, bd_unseen, bg, real_u, gen_a, z_u,
                                       std::span<const T>(ts), radius, interp_mode);
      }

      Level2Objective<T> obj =
          inductive ? inductive_objective<T>(g, Minibatch<T>{}, vae, seen_cl, l_r_u, cfg.alpha,
                                             cfg.beta)
                    : level2_objective<T>(g, vae, seen_cl, l_r_u, unseen_cl, cfg.alpha, cfg.beta,
                                          gamma);
      auto grads = param_gradients<T>(g, obj.generator_objective, {&be, &bg}, "level2_total");
      adamw_step(st.models.encoder, grads[0], st.opt_encoder, cfg.optim, "level2_total");
      adamw_step(st.models.generator, grads[1], st.opt_generator, cfg.optim, "level2_total");

      const double critic_obj_seen = bd.critic_obj_seen;
      const double critic_obj_unseen = bd.critic_obj_unseen;
      const double critic_adv_unseen = bd.adv_unseen;
      bd = obj.breakdown;
      bd.critic_obj_seen = critic_obj_seen;
      bd.critic_obj_unseen = critic_obj_unseen;
      if (gamma == 0.0) bd.adv_unseen = critic_adv_unseen;
    }

    // ---- level-1 step every `level2_per_level1` slots -----------------------
    if ((slot + 1) % static_cast<std::size_t>(cfg.level2_per_level1) == 0) {
      if (lambda != 0.0) {
        for (int c = 0; c < cfg.critic_steps; ++c) {
          Mat<T> unseen_v = detail::draw_unseen_batch(view, streams.unseen_draw, batch);
          Mat<T> real_a = detail::draw_prior_attributes(*view.unseen_attributes, st.prior,
                                                        streams.prior_labels, batch);
          Mat<T> fake_a = forward(st.models.regressor, unseen_v);
          auto ts = detail::draw_ts<T>(streams.interp, batch);
          Mat<T> interp = hypersphere_interpolate_rows(real_a, fake_a,
                                                       std::span<const T>(ts), radius);
          auto [obj, adv] = critic_update(st.models.critic_attr, st.opt_critic_attr, real_a,
                                          fake_a, interp, nullptr, "critic_attr");
          bd.critic_obj_attr = obj;
        }
      }
      {
        auto sb = detail::draw_seen_batch(view, streams.seen_draw, batch);
        Graph<T> g;
        BoundNet<T> br = bind(g, st.models.regressor, true);
        Var l_r_s = regressor_supervised_loss(g, br, sb.v, sb.a);
        std::optional<CriticLossVars<T>> attr_cl;
        if (lambda != 0.0) {
          BoundNet<T> bda = bind(g, st.models.critic_attr, false);
          Mat<T> unseen_v = detail::draw_unseen_batch(view, streams.unseen_draw, batch);
          Mat<T> real_a = detail::draw_prior_attributes(*view.unseen_attributes, st.prior,
                                                        streams.prior_labels, batch);
          auto ts = detail::draw_ts<T>(streams.interp, batch);
          attr_cl =
              attr_critic_loss(g, bda, br, real_a, unseen_v, std::span<const T>(ts), radius);
        }
        Level1Objective<T> obj = level1_objective<T>(g, l_r_s, attr_cl, lambda);
        auto grads = param_gradients<T>(g, obj.regressor_objective, {&br}, "level1_total");
        adamw_step(st.models.regressor, grads[0], st.opt_regressor, cfg.optim, "level1_total");
        bd.l_r_s = obj.breakdown.l_r_s;
        bd.adv_attr = obj.breakdown.adv_attr;
        bd.pen_attr = obj.breakdown.pen_attr;
        bd.level1_total = obj.breakdown.level1_total;
        bd.lambda = obj.breakdown.lambda;
      }
    }

    st.history.push_back(bd);
    if (sink) {
      json line = bd.to_json();
      line["epoch"] = st.epoch;
      line["step"] = slot;
      line["phase"] = inductive ? "inductive" : "transductive";
      sink(line);
    }
  }
  st.epoch += 1;
}

// Critic-only updates for the critics that could not train during the
// inductive phase (no unseen data): brings them up to speed before the
// generator/regressor first see their adversary gradients.
template <class T>
void warmup_unseen_critics(TrainState<T>& st, const detail::TrainView<T>& view,
                           const TrainConfig& cfg) {
  if (cfg.critic_warmup_steps <= 0) return;
  const T radius = static_cast<T>(cfg.radius);
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  const InterpMode interp_mode =
      cfg.sigmoid_generator ? InterpMode::kLinear : InterpMode::kHypersphere;
  Rng draw(derive_seed(st.seed, "warmup_draw"));
  Rng labels(derive_seed(st.seed, "warmup_labels"));
  Rng noise(derive_seed(st.seed, "warmup_noise"));
  Rng interp(derive_seed(st.seed, "warmup_interp"));

  auto update = [&](DenseNet<T>& critic, OptimizerState<T>& opt, const Mat<T>& real_in,
                    const Mat<T>& fake_in, const Mat<T>& interp_pts, const char* name) {
    Graph<T> g;
    BoundNet<T> bc = bind(g, critic, true);
    Var pen = gradient_penalty<T>(g, bc, interp_pts, nullptr);
    Var real_scores = apply(g, bc, g.constant(real_in));
    Var fake_scores = apply(g, bc, g.constant(fake_in));
    CriticLossVars<T> parts = critic_loss_from_scores<T>(g, real_scores, fake_scores, pen);
    auto grads = param_gradients<T>(g, parts.objective, {&bc}, name);
    adamw_step(critic, grads[0], opt, cfg.optim, name);
  };

  for (int s = 0; s < cfg.critic_warmup_steps; ++s) {
    if (cfg.gamma != 0.0) {
      std::vector<std::size_t> idx(batch);
      for (auto& i : idx) i = draw.index(view.unseen().rows);
      Mat<T> real_u = take_rows(view.unseen(), std::span<const std::size_t>(idx));
      Mat<T> a_u = detail::draw_prior_attributes(*view.unseen_attributes, st.prior, labels,
                                                 batch);
      Mat<T> z = noise.template normal_mat<T>(batch, st.models.latent_dim);
      Mat<T> fake_u = forward(st.models.generator, hstack(a_u, z));
      auto ts = detail::draw_ts<T>(interp, batch);
      update(st.models.critic_unseen, st.opt_critic_unseen, real_u, fake_u,
             interpolate_rows(real_u, fake_u, std::span<const T>(ts), radius, interp_mode),
             "critic_unseen_warmup");
    }
    if (cfg.lambda != 0.0) {
      std::vector<std::size_t> idx(batch);
      for (auto& i : idx) i = draw.index(view.unseen().rows);
      Mat<T> unseen_v = take_rows(view.unseen(), std::span<const std::size_t>(idx));
      Mat<T> real_a = detail::draw_prior_attributes(*view.unseen_attributes, st.prior, labels,
                                                    batch);
      Mat<T> fake_a = forward(st.models.regressor, unseen_v);
      auto ts = detail::draw_ts<T>(interp, batch);
      update(st.models.critic_attr, st.opt_critic_attr, real_a, fake_a,
             hypersphere_interpolate_rows(real_a, fake_a, std::span<const T>(ts), radius),
             "critic_attr_warmup");
    }
  }
}

// ---- public training operations ------------------------------------------------

template <class T>
TrainState<T> train_inductive(const SplitDataset<T>& ds, const TrainConfig& cfg,
                              const LogSink& sink = {}) {
  validate_dataset(ds);
  TrainState<T> st = init_train_state(ds, cfg);
  const detail::TrainView<T> view = detail::inductive_view(ds);
  for (int e = 0; e < cfg.epochs_inductive; ++e)
    run_epoch(st, view, cfg, /*inductive=*/true, sink);
  return st;
}

template <class T>
void train_transductive_epoch(TrainState<T>& st, const SplitDataset<T>& ds,
                              const TrainConfig& cfg, const LogSink& sink = {}) {
  const detail::TrainView<T> view = detail::full_view(ds);
  run_epoch(st, view, cfg, /*inductive=*/false, sink);
}

// Ground truth when available (given mode and TV diagnostics).
template <class T>
std::optional<ClassPrior> true_unseen_prior(const SplitDataset<T>& ds) {
  if (!ds.has_eval_labels()) return std::nullopt;
  return empirical_class_prior(ds.unseen_labels_eval, ds.num_unseen_classes());
}

template <class T>
ClassPrior refresh_prior(const TrainState<T>& st, const SplitDataset<T>& ds,
                         const TrainConfig& cfg) {
  const std::size_t n_u = ds.num_unseen_classes();
  if (cfg.prior_mode == "uniform") return uniform_prior(n_u);
  if (cfg.prior_mode == "given") {
    if (!cfg.given_prior.empty()) {
      ClassPrior p{cfg.given_prior};
      p.validate();
      if (p.size() != n_u) throw ConfigError("given_prior length does not match class count");
      return p;
    }
    auto truth = true_unseen_prior(ds);
    if (!truth)
      throw ConfigError("prior_mode=given requires given_prior or unseen_labels_eval");
    return *truth;
  }
  ClassifierConfig clf_cfg;
  clf_cfg.epochs = cfg.classifier_epochs;
  clf_cfg.batch_size = cfg.batch_size;
  clf_cfg.optim = cfg.optim;
  auto sampler =
      generator_sampler(st.models.generator, ds.unseen_attributes, st.models.latent_dim);
  const std::uint64_t seed =
      derive_seed(cfg.seed, "prior_refresh", static_cast<std::uint64_t>(st.epoch));
  if (cfg.prior_mode == "cpe")
    return cpe_estimate(sampler, ds.unseen_features, n_u, cfg.synth_per_class_train, seed,
                        clf_cfg);
  if (cfg.prior_mode == "bbse")
    return bbse_estimate(sampler, ds.unseen_features, n_u, cfg.synth_per_class_train, seed,
                         clf_cfg);
  throw ConfigError("unknown prior_mode '" + cfg.prior_mode + "'");
}

template <class T>
EvalOptions eval_options_from_config(const TrainConfig& cfg) {
  EvalOptions opts;
  opts.synth_per_class = cfg.synth_per_class_eval;
  opts.synth_weighting = cfg.synth_weighting;
  opts.classifier.epochs = cfg.classifier_epochs;
  opts.classifier.batch_size = cfg.batch_size;
  opts.classifier.optim = cfg.optim;
  opts.seed = cfg.seed;
  opts.space = inference_space_from_string(cfg.inference_space);
  opts.seen_test_fraction = cfg.seen_test_fraction;
  opts.hidden_post_activation = cfg.hidden_post_activation;
  opts.prior_mode = cfg.prior_mode;
  return opts;
}

// The full pipeline: inductive warm start, per-epoch prior refresh,
// transductive epochs, final evaluation. `epoch_hook` fires after every
// completed epoch (checkpoint cadence lives in the CLI).
template <class T>
std::pair<TrainState<T>, EvalReport> run_pipeline(
    const SplitDataset<T>& dataset, const TrainConfig& cfg, const LogSink& sink = {},
    const std::function<void(const TrainState<T>&)>& epoch_hook = {}) {
  cfg.validate();
  SplitDataset<T> ds = dataset;
  if (cfg.pretune) ds = pretune_features(ds, cfg, sink);

  TrainState<T> st = init_train_state(ds, cfg);
  const detail::TrainView<T> ind_view = detail::inductive_view(ds);
  for (int e = 0; e < cfg.epochs_inductive; ++e) {
    run_epoch(st, ind_view, cfg, /*inductive=*/true, sink);
    if (epoch_hook) epoch_hook(st);
  }

  if (cfg.reset_optimizer_between_phases) {
    st.opt_encoder = OptimizerState<T>::for_net(st.models.encoder);
    st.opt_generator = OptimizerState<T>::for_net(st.models.generator);
    st.opt_regressor = OptimizerState<T>::for_net(st.models.regressor);
    st.opt_critic_seen = OptimizerState<T>::for_net(st.models.critic_seen);
    st.opt_critic_unseen = OptimizerState<T>::for_net(st.models.critic_unseen);
    st.opt_critic_attr = OptimizerState<T>::for_net(st.models.critic_attr);
  }

  const auto truth = true_unseen_prior(ds);
  const detail::TrainView<T> view = detail::full_view(ds);
  bool warmed_up = false;
  for (int e = 0; e < cfg.epochs_transductive; ++e) {
    st.prior = refresh_prior(st, ds, cfg);
    if (!warmed_up) {
      warmup_unseen_critics(st, view, cfg);
      warmed_up = true;
    }
    st.prior_history.emplace_back(st.epoch, st.prior);
    if (sink) {
      json line;
      line["epoch"] = st.epoch;
      line["event"] = "prior_refresh";
      line["prior_mode"] = cfg.prior_mode;
      line["prior"] = st.prior.probs;
      if (truth) line["prior_tv_error"] = prior_tv_distance(st.prior, *truth);
      sink(line);
    }
    run_epoch(st, view, cfg, /*inductive=*/false, sink);
    if (epoch_hook) epoch_hook(st);
  }
  if (cfg.epochs_transductive == 0) st.prior = refresh_prior(st, ds, cfg);

  EvalOptions opts = eval_options_from_config<T>(cfg);
  EvalReport report = tzsl_evaluate(st.models, ds, st.prior, opts);
  report.config_echo = train_config_to_json(cfg);
  return {std::move(st), std::move(report)};
}

}  // namespace tzsl
