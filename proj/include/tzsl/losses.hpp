#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "tzsl/autodiff.hpp"
#include "tzsl/dataspace.hpp"
#include "tzsl/errors.hpp"
#include "tzsl/matrix.hpp"
#include "tzsl/net.hpp"

namespace tzsl {

// One training step's sampled inputs. Rows of paired members line up; every
// normalized payload is expected to already sit on the radius-r sphere.
template <class T>
struct Minibatch {
  Mat<T> seen_v;
  Mat<T> seen_a;       // attribute row per seen example
  Mat<T> unseen_v;     // empty under the inductive contract
  Mat<T> attr_real_a;  // prior-sampled true attributes (attribute critic's real side)
  Mat<T> gen_a;        // prior-sampled attributes conditioning unseen generation
  Mat<T> z_seen;
  Mat<T> z_unseen;
  Mat<T> vae_eps;
  std::vector<T> t_seen;
  std::vector<T> t_unseen;
  std::vector<T> t_attr;
};

// ---- hypersphere interpolation ---------------------------------------------

// c = L2(t*a + (1-t)*b, r); both endpoints must sit on the radius-r sphere.
template <class T>
std::vector<T> hypersphere_interpolate(std::span<const T> a, std::span<const T> b, T t, T radius) {
  if (a.size() != b.size()) throw Error("hypersphere_interpolate: dim mismatch");
  const double na = static_cast<double>(l2_norm(a));
  const double nb = static_cast<double>(l2_norm(b));
  const double r = static_cast<double>(radius);
  if (std::abs(na - r) > 1e-3 * r || std::abs(nb - r) > 1e-3 * r)
    throw Error("hypersphere_interpolate: endpoints are not on the radius-r sphere");
  std::vector<T> mix(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) mix[i] = t * a[i] + (T(1) - t) * b[i];
  const T n = l2_norm(std::span<const T>(mix));
  if (!(static_cast<double>(n) > 1e-12 * r))
    throw NumericError("hypersphere_interpolate: degenerate (antipodal) midpoint");
  const T s = radius / n;
  for (T& x : mix) x *= s;
  return mix;
}

template <class T>
Mat<T> hypersphere_interpolate_rows(const Mat<T>& a, const Mat<T>& b, std::span<const T> ts,
                                    T radius) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw Error("hypersphere_interpolate_rows: shape mismatch");
  if (ts.size() != a.rows) throw Error("hypersphere_interpolate_rows: one t per row required");
  Mat<T> out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    auto mixed = hypersphere_interpolate(a.row(i), b.row(i), ts[i], radius);
    std::copy(mixed.begin(), mixed.end(), out.row(i).begin());
  }
  return out;
}

// Sphere-normalized features interpolate on the hypersphere; the Min-Max
// companion configuration (sigmoid generator) uses plain linear interpolates.
enum class InterpMode : unsigned char { kHypersphere, kLinear };

template <class T>
Mat<T> interpolate_rows(const Mat<T>& a, const Mat<T>& b, std::span<const T> ts, T radius,
                        InterpMode mode) {
  if (mode == InterpMode::kHypersphere) return hypersphere_interpolate_rows(a, b, ts, radius);
  if (a.rows != b.rows || a.cols != b.cols) throw Error("interpolate_rows: shape mismatch");
  if (ts.size() != a.rows) throw Error("interpolate_rows: one t per row required");
  Mat<T> out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j)
      out(i, j) = ts[i] * a(i, j) + (T(1) - ts[i]) * b(i, j);
  return out;
}

// ---- individual objectives ---------------------------------------------------

// mean over the batch of || R(v) - a ||_1
template <class T>
Var regressor_supervised_loss(Graph<T>& g, const BoundNet<T>& regressor, const Mat<T>& seen_v,
                              const Mat<T>& seen_a) {
  if (seen_v.rows != seen_a.rows) throw Error("regressor_supervised_loss: unpaired batch");
  Var pred = apply(g, regressor, g.constant(seen_v));
  Var l1 = g.sum(g.abs(g.sub(pred, g.constant(seen_a))));
  return g.scale(l1, T(1) / static_cast<T>(seen_v.rows));
}

// mean over points of (||grad_x critic(x)||_2 - 1)^2. The gradient is taken
// with respect to the interpolated points only; an optional condition block is
// concatenated unperturbed. The inner gradient is emitted as graph nodes, so
// the penalty is differentiable with respect to the critic's parameters.
template <class T>
Var gradient_penalty(Graph<T>& g, const BoundNet<T>& critic, const Mat<T>& points,
                     const Mat<T>* condition = nullptr) {
  Var x = g.leaf(points);
  Var input = x;
  if (condition != nullptr) {
    if (condition->rows != points.rows) throw Error("gradient_penalty: condition rows mismatch");
    input = g.concat_cols(x, g.constant(*condition));
  }
  Var score_sum = g.sum(apply(g, critic, input));
  Var grad = g.gradient(score_sum, x);
  Var norms = g.row_norms(grad);
  Var excess = g.add_scalar(norms, T(-1));
  return g.mean_all(g.square(excess));
}

template <class T>
struct CriticLossVars {
  Var objective;  // what the critic's optimizer minimizes
  Var adversary;  // mean(real scores) - mean(fake scores)
  Var penalty;
};

namespace detail {

template <class T>
CriticLossVars<T> critic_loss_parts(Graph<T>& g, Var real_scores, Var fake_scores, Var penalty) {
  Var adv = g.sub(g.mean_all(real_scores), g.mean_all(fake_scores));
  Var objective = g.add(g.neg(adv), g.scale(penalty, T(10)));
  return {objective, adv, penalty};
}

}  // namespace detail

// Attribute critic (level-1): real side is prior-sampled true attributes,
// fake side is the regressor's pseudo attributes for real unseen features.
template <class T>
CriticLossVars<T> attr_critic_loss(Graph<T>& g, const BoundNet<T>& critic_attr,
                                   const BoundNet<T>& regressor, const Mat<T>& real_a,
                                   const Mat<T>& unseen_v, std::span<const T> t_draws, T radius) {
  if (real_a.rows != unseen_v.rows) throw Error("attr_critic_loss: batch size mismatch");
  Var fake_a = apply(g, regressor, g.constant(unseen_v));
  Mat<T> interp = hypersphere_interpolate_rows(real_a, g.value(fake_a), t_draws, radius);
  Var pen = gradient_penalty(g, critic_attr, interp);
  Var real_scores = apply(g, critic_attr, g.constant(real_a));
  Var fake_scores = apply(g, critic_attr, fake_a);
  return detail::critic_loss_parts<T>(g, real_scores, fake_scores, pen);
}

// Conditional seen critic (level-2). Interpolation runs in visual space only;
// the attribute condition passes through unperturbed.
template <class T>
CriticLossVars<T> seen_critic_loss(Graph<T>& g, const BoundNet<T>& critic_seen,
                                   const BoundNet<T>& generator, const Mat<T>& seen_v,
                                   const Mat<T>& seen_a, const Mat<T>& z,
                                   std::span<const T> t_draws, T radius,
                                   InterpMode interp_mode = InterpMode::kHypersphere) {
  if (seen_v.rows != seen_a.rows || seen_v.rows != z.rows)
    throw Error("seen_critic_loss: pairing mismatch");
  Var fake_v = apply(g, generator, g.concat_cols(g.constant(seen_a), g.constant(z)));
  Mat<T> interp = interpolate_rows(seen_v, g.value(fake_v), t_draws, radius, interp_mode);
  Var pen = gradient_penalty(g, critic_seen, interp, &seen_a);
  Var real_scores =
      apply(g, critic_seen, g.constant(hstack(seen_v, seen_a)));
  Var fake_scores = apply(g, critic_seen, g.concat_cols(fake_v, g.constant(seen_a)));
  return detail::critic_loss_parts<T>(g, real_scores, fake_scores, pen);
}

// Unconditional unseen critic (level-2).
template <class T>
CriticLossVars<T> unseen_critic_loss(Graph<T>& g, const BoundNet<T>& critic_unseen,
                                     const BoundNet<T>& generator, const Mat<T>& unseen_v,
                                     const Mat<T>& sampled_a, const Mat<T>& z,
                                     std::span<const T> t_draws, T radius,
                                     InterpMode interp_mode = InterpMode::kHypersphere) {
  if (sampled_a.rows != z.rows) throw Error("unseen_critic_loss: pairing mismatch");
  Var fake_v = apply(g, generator, g.concat_cols(g.constant(sampled_a), g.constant(z)));
  Mat<T> interp = interpolate_rows(unseen_v, g.value(fake_v), t_draws, radius, interp_mode);
  Var pen = gradient_penalty(g, critic_unseen, interp);
  Var real_scores = apply(g, critic_unseen, g.constant(unseen_v));
  Var fake_scores = apply(g, critic_unseen, fake_v);
  return detail::critic_loss_parts<T>(g, real_scores, fake_scores, pen);
}

// Assembled critic loss from raw score vectors (shared by the training loop,
// which precomputes frozen-net scores).
template <class T>
CriticLossVars<T> critic_loss_from_scores(Graph<T>& g, Var real_scores, Var fake_scores,
                                          Var penalty) {
  return detail::critic_loss_parts<T>(g, real_scores, fake_scores, penalty);
}

// mean over the batch of || R(G(a, z)) - a ||_1 with R frozen (the level-1
// regressor provides supervision, it is not updated here).
template <class T>
Var cyclic_regressor_loss(Graph<T>& g, const BoundNet<T>& regressor,
                          const BoundNet<T>& generator, const Mat<T>& sampled_a,
                          const Mat<T>& z) {
  if (sampled_a.rows != z.rows) throw Error("cyclic_regressor_loss: pairing mismatch");
  if (regressor.trainable)
    throw ContractError("cyclic_regressor_loss: regressor must be frozen in level-2");
  Var fake_v = apply(g, generator, g.concat_cols(g.constant(sampled_a), g.constant(z)));
  Var cycled = apply(g, regressor, fake_v);
  Var l1 = g.sum(g.abs(g.sub(cycled, g.constant(sampled_a))));
  return g.scale(l1, T(1) / static_cast<T>(sampled_a.rows));
}

template <class T>
struct VaeLossVars {
  Var total;
  Var kl;
  Var reconstruction;
};

// KL(N(mu, diag sigma^2) || N(0, I)) in closed form plus the squared-error
// reconstruction; KL and reconstruction are summed over dimensions and
// averaged over the batch.
template <class T>
VaeLossVars<T> vae_loss(Graph<T>& g, const BoundNet<T>& encoder, const BoundNet<T>& generator,
                        const Mat<T>& seen_v, const Mat<T>& seen_a, const Mat<T>& eps) {
  if (seen_v.rows != seen_a.rows) throw Error("vae_loss: unpaired batch");
  auto [mean, logvar] = apply_gaussian(g, encoder, g.concat_cols(g.constant(seen_v),
                                                                 g.constant(seen_a)));
  if (!g.value(logvar).all_finite()) throw NumericError("vae_loss: non-finite logvar");
  const T inv_batch = T(1) / static_cast<T>(seen_v.rows);

  // 0.5 * sum_j (mu^2 + sigma^2 - 1 - log sigma^2)
  Var kl_terms = g.sub(g.add_scalar(g.add(g.square(mean), g.exp(logvar)), T(-1)), logvar);
  Var kl = g.scale(g.sum(kl_terms), T(0.5) * inv_batch);

  Var z = g.add(mean, g.mul(g.exp(g.scale(logvar, T(0.5))), g.constant(eps)));
  Var recon_v = apply(g, generator, g.concat_cols(g.constant(seen_a), z));
  Var recon = g.scale(g.sum(g.square(g.sub(recon_v, g.constant(seen_v)))), inv_batch);

  return {g.add(kl, recon), kl, recon};
}

// ---- composed objectives ------------------------------------------------------

// Named scalars for one step, plus the weighted totals actually optimized.
struct LossBreakdown {
  double l_r_s = 0.0;
  double adv_attr = 0.0;
  double pen_attr = 0.0;
  double critic_obj_attr = 0.0;
  double level1_total = 0.0;

  double kl = 0.0;
  double recon = 0.0;
  double l_vae = 0.0;
  double adv_seen = 0.0;
  double pen_seen = 0.0;
  double critic_obj_seen = 0.0;
  double adv_unseen = 0.0;
  double pen_unseen = 0.0;
  double critic_obj_unseen = 0.0;
  double l_r_u = 0.0;
  double level2_total = 0.0;

  double lambda = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;

  nlohmann::json to_json() const {
    return nlohmann::json{{"l_r_s", l_r_s},
                          {"adv_attr", adv_attr},
                          {"pen_attr", pen_attr},
                          {"critic_obj_attr", critic_obj_attr},
                          {"level1_total", level1_total},
                          {"kl", kl},
                          {"recon", recon},
                          {"l_vae", l_vae},
                          {"adv_seen", adv_seen},
                          {"pen_seen", pen_seen},
                          {"critic_obj_seen", critic_obj_seen},
                          {"adv_unseen", adv_unseen},
                          {"pen_unseen", pen_unseen},
                          {"critic_obj_unseen", critic_obj_unseen},
                          {"l_r_u", l_r_u},
                          {"level2_total", level2_total}};
  }
};

template <class T>
double scalar_value(const Graph<T>& g, Var v) {
  return static_cast<double>(g.value(v)(0, 0));
}

// Level-1: the regressor minimizes supervised_loss + lambda * adversary
// (driving its pseudo attributes toward high critic scores); the critic
// minimizes its own objective -adv + 10*penalty.
template <class T>
struct Level1Objective {
  Var regressor_objective;
  LossBreakdown breakdown;
};

template <class T>
Level1Objective<T> level1_objective(Graph<T>& g, Var l_r_s,
                                    const std::optional<CriticLossVars<T>>& attr, double lambda) {
  Level1Objective<T> out;
  out.breakdown.lambda = lambda;
  out.breakdown.l_r_s = scalar_value(g, l_r_s);
  Var obj = l_r_s;
  if (attr && lambda != 0.0) {
    obj = g.add(obj, g.scale(attr->adversary, static_cast<T>(lambda)));
    out.breakdown.adv_attr = scalar_value(g, attr->adversary);
    out.breakdown.pen_attr = scalar_value(g, attr->penalty);
    out.breakdown.critic_obj_attr = scalar_value(g, attr->objective);
  }
  out.regressor_objective = obj;
  out.breakdown.level1_total = scalar_value(g, obj);
  return out;
}

// Level-2: encoder+generator minimize
//   vae + alpha*adv_seen + beta*cyclic + gamma*adv_unseen,
// pushing synthesized features toward high critic scores; each critic
// minimizes its own -adv + 10*penalty.
template <class T>
struct Level2Objective {
  Var generator_objective;
  LossBreakdown breakdown;
};

template <class T>
Level2Objective<T> level2_objective(Graph<T>& g, const VaeLossVars<T>& vae,
                                    const std::optional<CriticLossVars<T>>& seen,
                                    const std::optional<Var>& l_r_u,
                                    const std::optional<CriticLossVars<T>>& unseen, double alpha,
                                    double beta, double gamma) {
  Level2Objective<T> out;
  out.breakdown.alpha = alpha;
  out.breakdown.beta = beta;
  out.breakdown.gamma = gamma;
  out.breakdown.kl = scalar_value(g, vae.kl);
  out.breakdown.recon = scalar_value(g, vae.reconstruction);
  out.breakdown.l_vae = scalar_value(g, vae.total);
  Var obj = vae.total;
  if (seen && alpha != 0.0) {
    obj = g.add(obj, g.scale(seen->adversary, static_cast<T>(alpha)));
    out.breakdown.adv_seen = scalar_value(g, seen->adversary);
    out.breakdown.pen_seen = scalar_value(g, seen->penalty);
    out.breakdown.critic_obj_seen = scalar_value(g, seen->objective);
  }
  if (l_r_u && beta != 0.0) {
    obj = g.add(obj, g.scale(*l_r_u, static_cast<T>(beta)));
    out.breakdown.l_r_u = scalar_value(g, *l_r_u);
  }
  if (unseen && gamma != 0.0) {
    obj = g.add(obj, g.scale(unseen->adversary, static_cast<T>(gamma)));
    out.breakdown.adv_unseen = scalar_value(g, unseen->adversary);
    out.breakdown.pen_unseen = scalar_value(g, unseen->penalty);
    out.breakdown.critic_obj_unseen = scalar_value(g, unseen->objective);
  }
  out.generator_objective = obj;
  out.breakdown.level2_total = scalar_value(g, obj);
  return out;
}

// Inductive variant: the level-2 objective with the unseen-data terms
// removed. The cyclic term survives because it consumes attributes only. Any unseen visual batch in
// the minibatch is a contract violation.
template <class T>
Level2Objective<T> inductive_objective(Graph<T>& g, const Minibatch<T>& mb,
                                       const VaeLossVars<T>& vae,
                                       const std::optional<CriticLossVars<T>>& seen,
                                       const std::optional<Var>& l_r_u, double alpha,
                                       double beta) {
  if (mb.unseen_v.rows > 0)
    throw ContractError("inductive objective: unseen visual features present in minibatch");
  return level2_objective<T>(g, vae, seen, l_r_u, std::nullopt, alpha, beta, 0.0);
}

}  // namespace tzsl
