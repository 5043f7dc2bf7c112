#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "tzsl/dataspace.hpp"
#include "tzsl/errors.hpp"
#include "tzsl/linear_classifier.hpp"
#include "tzsl/matrix.hpp"
#include "tzsl/rng.hpp"

namespace tzsl {

// ---- K-means with caller-supplied initial centers ---------------------------

struct KMeansParams {
  std::size_t max_iters = 100;
  double tol = 1e-4;  // on max center movement
};

template <class T>
struct KMeansResult {
  Mat<T> centers;
  std::vector<int> assignments;
  std::size_t iterations = 0;
  double inertia = 0.0;
  std::vector<double> inertia_trace;  // one entry per iteration, non-increasing
};

namespace detail {

template <class T>
int nearest_center(const Mat<T>& centers, std::span<const T> p) {
  int best = 0;
  T best_d = std::numeric_limits<T>::max();
  for (std::size_t c = 0; c < centers.rows; ++c) {
    const T d = squared_distance(centers.row(c), p);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

template <class T>
int nearest_center(const Mat<T>& centers, std::span<T> p) {
  return nearest_center(centers, std::span<const T>(p));
}

}  // namespace detail

// Lloyd iterations from the GIVEN initial centers; initialization carries the
// cluster-to-class correspondence, so there are no random restarts. Empty
// clusters are reseeded to the point farthest from its nearest center.
template <class T>
KMeansResult<T> kmeans(const Mat<T>& points, std::size_t k, const Mat<T>& init_centers,
                       const KMeansParams& params = {}) {
  if (points.rows == 0) throw DataError("kmeans: empty input");
  if (k == 0 || init_centers.rows != k || init_centers.cols != points.cols)
    throw DataError("kmeans: init centers must be k rows of point dimension");
  if (k > points.rows) throw DataError("kmeans: more clusters than points");

  KMeansResult<T> result;
  result.centers = init_centers;
  result.assignments.assign(points.rows, 0);

  auto assign_all = [&]() {
    double inertia = 0.0;
    for (std::size_t i = 0; i < points.rows; ++i) {
      result.assignments[i] = detail::nearest_center(result.centers, points.row(i));
      inertia += static_cast<double>(squared_distance(
          result.centers.row(static_cast<std::size_t>(result.assignments[i])), points.row(i)));
    }
    return inertia;
  };

  for (std::size_t iter = 0; iter < params.max_iters; ++iter) {
    result.iterations = iter + 1;
    result.inertia = assign_all();
    result.inertia_trace.push_back(result.inertia);

    Mat<T> new_centers(k, points.cols);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.rows; ++i) {
      const std::size_t c = static_cast<std::size_t>(result.assignments[i]);
      counts[c] += 1;
      for (std::size_t j = 0; j < points.cols; ++j) new_centers(c, j) += points(i, j);
    }
    std::vector<bool> consumed(points.rows, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < points.cols; ++j)
          new_centers(c, j) /= static_cast<T>(counts[c]);
        continue;
      }
      // Reseed: farthest point from its nearest (current) center.
      std::size_t far = 0;
      T far_d = T(-1);
      for (std::size_t i = 0; i < points.rows; ++i) {
        if (consumed[i]) continue;
        const T d = squared_distance(
            result.centers.row(static_cast<std::size_t>(result.assignments[i])), points.row(i));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      consumed[far] = true;
      std::copy(points.row(far).begin(), points.row(far).end(), new_centers.row(c).begin());
    }

    double moved = 0.0;
    for (std::size_t c = 0; c < k; ++c)
      moved = std::max(moved, std::sqrt(static_cast<double>(
                                  squared_distance(result.centers.row(c), new_centers.row(c)))));
    result.centers = std::move(new_centers);
    if (moved < params.tol) break;
  }

  result.inertia = assign_all();
  result.inertia_trace.push_back(result.inertia);
  return result;
}

// ---- class-conditional samplers ----------------------------------------------

// Draws `count` feature rows for one class. Wraps either the trained
// generator or, in oracle tests, the true class-conditional distribution.
template <class T>
using ConditionalSampler = std::function<Mat<T>(std::size_t class_index, std::size_t count,
                                                Rng& rng)>;

template <class T>
ConditionalSampler<T> generator_sampler(const DenseNet<T>& generator, const Mat<T>& attributes,
                                        std::size_t latent_dim) {
  return [&generator, attributes, latent_dim](std::size_t c, std::size_t count, Rng& rng) {
    Mat<T> input(count, attributes.cols + latent_dim);
    for (std::size_t i = 0; i < count; ++i) {
      auto arow = attributes.row(c);
      std::copy(arow.begin(), arow.end(), input.row(i).begin());
      for (std::size_t j = 0; j < latent_dim; ++j)
        input(i, attributes.cols + j) = static_cast<T>(rng.normal());
    }
    return forward(generator, input);
  };
}

namespace detail {

template <class T>
std::pair<Mat<T>, std::vector<int>> synthesize_uniform(const ConditionalSampler<T>& sampler,
                                                       std::size_t num_classes,
                                                       std::size_t per_class, Rng& rng) {
  Mat<T> x;
  std::vector<int> labels;
  for (std::size_t c = 0; c < num_classes; ++c) {
    Mat<T> rows = sampler(c, per_class, rng);
    x = x.rows == 0 ? std::move(rows) : vstack(x, rows);
    labels.insert(labels.end(), per_class, static_cast<int>(c));
  }
  return {std::move(x), std::move(labels)};
}

}  // namespace detail

// ---- CPE ----------------------------------------------------------------------

// Cluster prior estimation: synthesize a uniformly labelled set, train a
// classifier on it, pseudo-label the real unseen features, seed K-means with
// the pseudo class centers, read the prior off the cluster sizes. Cluster j
// keeps the identity of init center j.
template <class T>
ClassPrior cpe_estimate(const ConditionalSampler<T>& sampler, const Mat<T>& unseen_features,
                        std::size_t num_classes, std::size_t synth_per_class, std::uint64_t seed,
                        const ClassifierConfig& clf_cfg = {}, const KMeansParams& km_params = {}) {
  if (unseen_features.rows == 0) throw DataError("cpe_estimate: no unseen features");
  if (num_classes == 0 || synth_per_class == 0)
    throw DataError("cpe_estimate: counts must be positive");

  Rng synth_rng(derive_seed(seed, "cpe_synth"));
  auto [synth_x, synth_y] =
      detail::synthesize_uniform(sampler, num_classes, synth_per_class, synth_rng);

  LinearClassifier<T> clf = train_linear_classifier(
      synth_x, std::span<const int>(synth_y), num_classes, clf_cfg, derive_seed(seed, "cpe_clf"));
  const std::vector<int> pseudo = clf.predict(unseen_features);

  // Pseudo class centers; a class with no pseudo members falls back to the
  // synthesized class-conditional mean (the only remaining class-specific
  // information).
  Mat<T> centers(num_classes, unseen_features.cols);
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t i = 0; i < unseen_features.rows; ++i) {
    const std::size_t c = static_cast<std::size_t>(pseudo[i]);
    counts[c] += 1;
    for (std::size_t j = 0; j < unseen_features.cols; ++j)
      centers(c, j) += unseen_features(i, j);
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] > 0) {
      for (std::size_t j = 0; j < unseen_features.cols; ++j)
        centers(c, j) /= static_cast<T>(counts[c]);
    } else {
      for (std::size_t j = 0; j < unseen_features.cols; ++j) centers(c, j) = T(0);
      for (std::size_t i = 0; i < synth_x.rows; ++i) {
        if (static_cast<std::size_t>(synth_y[i]) != c) continue;
        for (std::size_t j = 0; j < synth_x.cols; ++j) centers(c, j) += synth_x(i, j);
      }
      for (std::size_t j = 0; j < synth_x.cols; ++j)
        centers(c, j) /= static_cast<T>(synth_per_class);
    }
  }

  KMeansResult<T> km = kmeans(unseen_features, num_classes, centers, km_params);
  std::vector<double> probs(num_classes, 0.0);
  for (int a : km.assignments) probs[static_cast<std::size_t>(a)] += 1.0;
  for (double& p : probs) p /= static_cast<double>(unseen_features.rows);
  ClassPrior prior{std::move(probs)};
  prior.validate();
  return prior;
}

// ---- BBSE -----------------------------------------------------------------------

// Square confusion matrix with C[pred][true] = P(predict | true);
// columns sum to one.
struct ConfusionMatrix {
  Mat<double> c;

  void validate() const {
    if (c.rows != c.cols) throw DataError("ConfusionMatrix: must be square");
    for (std::size_t j = 0; j < c.cols; ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < c.rows; ++i) {
        if (c(i, j) < -1e-12 || c(i, j) > 1.0 + 1e-12)
          throw DataError("ConfusionMatrix: entry outside [0, 1]");
        sum += c(i, j);
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw DataError("ConfusionMatrix: column does not sum to 1");
    }
  }
};

namespace detail {

// Gaussian elimination with partial pivoting for small dense systems.
inline std::vector<double> solve_dense(Mat<double> a, std::vector<double> b) {
  const std::size_t n = a.rows;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    if (std::abs(a(pivot, col)) < 1e-300) throw NumericError("solve_dense: singular matrix");
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(col, j), a(pivot, j));
      std::swap(b[col], b[pivot]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      for (std::size_t j = col; j < n; ++j) a(r, j) -= f * a(col, j);
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t ri = n; ri-- > 0;) {
    double s = b[ri];
    for (std::size_t j = ri + 1; j < n; ++j) s -= a(ri, j) * x[j];
    x[ri] = s / a(ri, ri);
  }
  return x;
}

// Cyclic Jacobi eigenvalues of a symmetric matrix (small dims only).
inline std::vector<double> symmetric_eigenvalues(Mat<double> a) {
  const std::size_t n = a.rows;
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
  return eig;
}

inline double condition_number(const Mat<double>& c) {
  Mat<double> gram = matmul(transpose(c), c);
  std::vector<double> eig = symmetric_eigenvalues(gram);
  double lo = std::numeric_limits<double>::max(), hi = 0.0;
  for (double e : eig) {
    lo = std::min(lo, e);
    hi = std::max(hi, e);
  }
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(hi / lo);
}

}  // namespace detail

// Ridge-regularized solve of C p = p_hat, then clip negatives and renormalize.
inline ClassPrior bbse_solve(const ConfusionMatrix& cm, const ClassPrior& p_hat,
                             double ridge = 1e-6, double max_condition = 1e8) {
  cm.validate();
  if (p_hat.size() != cm.c.rows) throw DataError("bbse_solve: dimension mismatch");
  const double cond = detail::condition_number(cm.c);
  if (!(cond <= max_condition))
    throw NumericError("bbse_solve: confusion matrix numerically singular (condition " +
                       std::to_string(cond) + "); consider the CPE estimator instead");

  // (C^T C + ridge I) p = C^T p_hat
  Mat<double> a = matmul(transpose(cm.c), cm.c);
  for (std::size_t i = 0; i < a.rows; ++i) a(i, i) += ridge;
  std::vector<double> rhs(cm.c.cols, 0.0);
  for (std::size_t j = 0; j < cm.c.cols; ++j)
    for (std::size_t i = 0; i < cm.c.rows; ++i) rhs[j] += cm.c(i, j) * p_hat.probs[i];
  std::vector<double> p = detail::solve_dense(std::move(a), std::move(rhs));

  double sum = 0.0;
  for (double& v : p) {
    if (v < 0.0) v = 0.0;
    sum += v;
  }
  if (sum <= 0.0) throw NumericError("bbse_solve: solution collapsed to zero");
  for (double& v : p) v /= sum;
  ClassPrior prior{std::move(p)};
  prior.validate();
  return prior;
}

// Black-box shift estimation: train a classifier on one synthesized labelled
// set, estimate the confusion matrix on a second disjoint one, invert against
// the prediction distribution observed on the real unseen features.
template <class T>
ClassPrior bbse_estimate(const ConditionalSampler<T>& sampler, const Mat<T>& unseen_features,
                         std::size_t num_classes, std::size_t synth_per_class, std::uint64_t seed,
                         const ClassifierConfig& clf_cfg = {}, double ridge = 1e-6,
                         double max_condition = 1e8) {
  if (unseen_features.rows == 0) throw DataError("bbse_estimate: no unseen features");

  Rng rng1(derive_seed(seed, "bbse_train_set"));
  auto [train_x, train_y] =
      detail::synthesize_uniform(sampler, num_classes, synth_per_class, rng1);
  LinearClassifier<T> clf =
      train_linear_classifier(train_x, std::span<const int>(train_y), num_classes, clf_cfg,
                              derive_seed(seed, "bbse_clf"));

  Rng rng2(derive_seed(seed, "bbse_holdout_set"));
  auto [hold_x, hold_y] =
      detail::synthesize_uniform(sampler, num_classes, synth_per_class, rng2);
  const std::vector<int> hold_pred = clf.predict(hold_x);
  ConfusionMatrix cm{Mat<double>(num_classes, num_classes)};
  for (std::size_t i = 0; i < hold_pred.size(); ++i)
    cm.c(static_cast<std::size_t>(hold_pred[i]), static_cast<std::size_t>(hold_y[i])) += 1.0;
  for (std::size_t j = 0; j < num_classes; ++j)
    for (std::size_t i = 0; i < num_classes; ++i)
      cm.c(i, j) /= static_cast<double>(synth_per_class);

  const std::vector<int> pred = clf.predict(unseen_features);
  std::vector<double> p_hat(num_classes, 0.0);
  for (int y : pred) p_hat[static_cast<std::size_t>(y)] += 1.0;
  for (double& v : p_hat) v /= static_cast<double>(pred.size());

  return bbse_solve(cm, ClassPrior{std::move(p_hat)}, ridge, max_condition);
}

}  // namespace tzsl
