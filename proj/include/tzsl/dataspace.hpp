#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tzsl/errors.hpp"
#include "tzsl/matrix.hpp"
#include "tzsl/rng.hpp"

namespace tzsl {

// Probability vector over classes.
struct ClassPrior {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }

  void validate() const {
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0)) throw DataError("ClassPrior: negative or non-finite entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DataError("ClassPrior: entries do not sum to 1");
  }
};

inline ClassPrior uniform_prior(std::size_t n) {
  if (n == 0) throw DataError("uniform_prior: need at least one class");
  return ClassPrior{std::vector<double>(n, 1.0 / static_cast<double>(n))};
}

// Total variation distance 0.5 * sum |p - q|.
inline double prior_tv_distance(const ClassPrior& p, const ClassPrior& q) {
  if (p.size() != q.size()) throw DataError("prior_tv_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p.probs[i] - q.probs[i]);
  return 0.5 * s;
}

inline ClassPrior empirical_class_prior(std::span<const int> labels, std::size_t num_classes) {
  if (labels.empty()) throw DataError("empirical_class_prior: empty label sequence");
  std::vector<double> counts(num_classes, 0.0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw DataError("empirical_class_prior: label out of range");
    counts[static_cast<std::size_t>(y)] += 1.0;
  }
  for (double& c : counts) c /= static_cast<double>(labels.size());
  return ClassPrior{std::move(counts)};
}

// v -> r * v / ||v||2
template <class T>
std::vector<T> l2_normalize(std::span<const T> v, T radius) {
  if (!(radius > T(0))) throw DataError("l2_normalize: radius must be positive");
  const T n = l2_norm(v);
  if (!(static_cast<double>(n) > 0.0))
    throw NumericError("l2_normalize: degenerate zero-norm feature vector");
  std::vector<T> out(v.begin(), v.end());
  const T s = radius / n;
  for (T& x : out) x *= s;
  return out;
}

template <class T>
std::vector<T> l2_normalize(const std::vector<T>& v, T radius) {
  return l2_normalize(std::span<const T>(v), radius);
}

template <class T>
std::vector<T> l2_normalize(std::span<T> v, T radius) {
  return l2_normalize(std::span<const T>(v), radius);
}

// v -> (v - min) / (max - min)
template <class T>
std::vector<T> minmax_normalize(std::span<const T> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (!(*hi > *lo)) throw NumericError("minmax_normalize: zero range (constant vector)");
  std::vector<T> out(v.begin(), v.end());
  const T range = *hi - *lo;
  for (T& x : out) x = (x - *lo) / range;
  return out;
}

template <class T>
std::vector<T> minmax_normalize(const std::vector<T>& v) {
  return minmax_normalize(std::span<const T>(v));
}

template <class T>
std::vector<T> minmax_normalize(std::span<T> v) {
  return minmax_normalize(std::span<const T>(v));
}

enum class FeatureNorm : unsigned char { kL2, kMinMax, kNone };

inline std::string to_string(FeatureNorm n) {
  switch (n) {
    case FeatureNorm::kL2: return "l2";
    case FeatureNorm::kMinMax: return "minmax";
    case FeatureNorm::kNone: return "none";
  }
  return "?";
}

inline FeatureNorm feature_norm_from_string(const std::string& s) {
  if (s == "l2") return FeatureNorm::kL2;
  if (s == "minmax") return FeatureNorm::kMinMax;
  if (s == "none") return FeatureNorm::kNone;
  throw ConfigError("unknown feature normalization '" + s + "'");
}

template <class T>
void normalize_rows_inplace(Mat<T>& m, FeatureNorm mode, T radius) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    std::vector<T> row;
    switch (mode) {
      case FeatureNorm::kL2: row = l2_normalize(m.row(i), radius); break;
      case FeatureNorm::kMinMax: row = minmax_normalize<T>(m.row(i)); break;
      case FeatureNorm::kNone: continue;
    }
    std::copy(row.begin(), row.end(), m.row(i).begin());
  }
}

// The full TZSL training input: labelled seen features, unlabelled unseen
// features, per-class attribute tables, and eval-only unseen labels.
template <class T>
struct SplitDataset {
  Mat<T> seen_features;
  std::vector<int> seen_labels;
  Mat<T> unseen_features;
  Mat<T> seen_attributes;    // one row per seen class
  Mat<T> unseen_attributes;  // one row per unseen class
  std::vector<int> unseen_labels_eval;  // empty = not provided
  Mat<T> seen_test_features;            // optional held-out split
  std::vector<int> seen_test_labels;

  std::size_t d_v() const { return seen_features.cols; }
  std::size_t d_a() const { return seen_attributes.cols; }
  std::size_t num_seen_classes() const { return seen_attributes.rows; }
  std::size_t num_unseen_classes() const { return unseen_attributes.rows; }
  bool has_eval_labels() const { return !unseen_labels_eval.empty(); }
  bool has_seen_test() const { return seen_test_features.rows > 0; }
};

template <class T>
void validate_dataset(const SplitDataset<T>& ds) {
  if (ds.seen_features.rows == 0 || ds.seen_features.cols == 0)
    throw DataError("dataset: seen features are empty");
  if (!ds.seen_features.all_finite() || !ds.unseen_features.all_finite() ||
      !ds.seen_attributes.all_finite() || !ds.unseen_attributes.all_finite() ||
      !ds.seen_test_features.all_finite())
    throw DataError("dataset: non-finite value in payload");
  if (ds.seen_labels.size() != ds.seen_features.rows)
    throw DataError("dataset: seen label count does not match feature rows");
  for (int y : ds.seen_labels)
    if (y < 0 || static_cast<std::size_t>(y) >= ds.num_seen_classes())
      throw DataError("dataset: seen label out of range");
  if (ds.unseen_features.rows > 0 && ds.unseen_features.cols != ds.seen_features.cols)
    throw DataError("dataset: seen/unseen feature dims differ");
  if (ds.seen_attributes.cols != ds.unseen_attributes.cols)
    throw DataError("dataset: seen/unseen attribute dims differ");
  if (!ds.unseen_labels_eval.empty()) {
    if (ds.unseen_labels_eval.size() != ds.unseen_features.rows)
      throw DataError("dataset: eval label count does not match unseen rows");
    for (int y : ds.unseen_labels_eval)
      if (y < 0 || static_cast<std::size_t>(y) >= ds.num_unseen_classes())
        throw DataError("dataset: unseen eval label out of range");
  }
  if (ds.seen_test_features.rows > 0) {
    if (ds.seen_test_features.cols != ds.seen_features.cols)
      throw DataError("dataset: seen-test feature dim differs");
    if (ds.seen_test_labels.size() != ds.seen_test_features.rows)
      throw DataError("dataset: seen-test label count does not match rows");
    for (int y : ds.seen_test_labels)
      if (y < 0 || static_cast<std::size_t>(y) >= ds.num_seen_classes())
        throw DataError("dataset: seen-test label out of range");
  }
}

// Normalize features per `mode` and attributes to radius `r` (attributes are
// always sphere-normalized: hypersphere interpolation requires equal norms).
template <class T>
SplitDataset<T> prepare_dataset(SplitDataset<T> ds, FeatureNorm mode, T radius) {
  validate_dataset(ds);
  normalize_rows_inplace(ds.seen_features, mode, radius);
  normalize_rows_inplace(ds.unseen_features, mode, radius);
  normalize_rows_inplace(ds.seen_test_features, mode, radius);
  normalize_rows_inplace(ds.seen_attributes, FeatureNorm::kL2, radius);
  normalize_rows_inplace(ds.unseen_attributes, FeatureNorm::kL2, radius);
  return ds;
}

// ---- synthetic data --------------------------------------------------------

// Desk-scale stand-in for the pre-extracted feature sets: Gaussian clusters
// around class means placed on a hypersphere, attributes a noisy fixed linear
// image of the means. `nuisance_dim` appends class-independent high-variance
// coordinates (used to model features whose discriminative structure is
// buried until a linear re-weighting).
struct SyntheticSpec {
  std::size_t num_seen_classes = 4;
  std::size_t num_unseen_classes = 3;
  std::size_t feature_dim = 16;
  std::size_t attribute_dim = 8;
  std::vector<std::size_t> seen_counts{50};    // single entry broadcasts
  std::vector<std::size_t> unseen_counts{50};  // single entry broadcasts
  double separation = 5.0;
  double noise = 0.5;
  double attribute_noise = 0.05;
  double seen_test_fraction = 0.2;
  std::size_t nuisance_dim = 0;
  double nuisance_scale = 0.0;
  // Rank of the subspace the class means live in (0 = full feature_dim).
  // Seen classes must span it for the attribute-to-feature map to be
  // identifiable from seen data alone.
  std::size_t mean_subspace_dim = 0;
};

namespace detail {

inline std::vector<std::size_t> broadcast_counts(const std::vector<std::size_t>& counts,
                                                 std::size_t n, const char* what) {
  if (counts.size() == 1) return std::vector<std::size_t>(n, counts[0]);
  if (counts.size() != n)
    throw DataError(std::string("synthetic spec: ") + what + " count list length mismatch");
  return counts;
}

}  // namespace detail

template <class T>
SplitDataset<T> make_synthetic_tzsl(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.num_seen_classes == 0 || spec.num_unseen_classes == 0 || spec.feature_dim == 0 ||
      spec.attribute_dim == 0)
    throw DataError("synthetic spec: counts and dims must be positive");
  const auto seen_counts =
      detail::broadcast_counts(spec.seen_counts, spec.num_seen_classes, "seen");
  const auto unseen_counts =
      detail::broadcast_counts(spec.unseen_counts, spec.num_unseen_classes, "unseen");
  for (std::size_t c : seen_counts)
    if (c == 0) throw DataError("synthetic spec: per-class counts must be positive");
  for (std::size_t c : unseen_counts)
    if (c == 0) throw DataError("synthetic spec: per-class counts must be positive");

  const std::size_t n_classes = spec.num_seen_classes + spec.num_unseen_classes;
  const std::size_t base_dim = spec.feature_dim;
  const std::size_t full_dim = base_dim + spec.nuisance_dim;

  Rng rng(derive_seed(seed, "synthetic"));

  // Class means: separation * (random unit direction), optionally confined to
  // a shared low-rank subspace.
  const std::size_t rank =
      spec.mean_subspace_dim == 0 ? base_dim : std::min(spec.mean_subspace_dim, base_dim);
  Mat<double> basis(rank, base_dim);
  if (rank < base_dim) {
    // Gram-Schmidt over random rows.
    for (std::size_t r = 0; r < rank; ++r) {
      for (std::size_t j = 0; j < base_dim; ++j) basis(r, j) = rng.normal();
      for (std::size_t p = 0; p < r; ++p) {
        double dot = 0.0;
        for (std::size_t j = 0; j < base_dim; ++j) dot += basis(r, j) * basis(p, j);
        for (std::size_t j = 0; j < base_dim; ++j) basis(r, j) -= dot * basis(p, j);
      }
      double norm = 0.0;
      for (std::size_t j = 0; j < base_dim; ++j) norm += basis(r, j) * basis(r, j);
      norm = std::sqrt(norm);
      for (std::size_t j = 0; j < base_dim; ++j) basis(r, j) /= norm;
    }
  }
  std::vector<std::vector<double>> means(n_classes, std::vector<double>(base_dim));
  for (auto& mu : means) {
    if (rank < base_dim) {
      std::vector<double> w(rank);
      double wn = 0.0;
      for (double& x : w) {
        x = rng.normal();
        wn += x * x;
      }
      wn = std::sqrt(wn);
      for (std::size_t j = 0; j < base_dim; ++j) {
        double v = 0.0;
        for (std::size_t r = 0; r < rank; ++r) v += (w[r] / wn) * basis(r, j);
        mu[j] = spec.separation * v;
      }
    } else {
      double norm = 0.0;
      for (double& x : mu) {
        x = rng.normal();
        norm += x * x;
      }
      norm = std::sqrt(norm);
      for (double& x : mu) x = spec.separation * x / norm;
    }
  }

  // Fixed random projection for attributes.
  Mat<double> proj(spec.attribute_dim, base_dim);
  const double proj_scale = 1.0 / std::sqrt(static_cast<double>(base_dim));
  for (auto& v : proj.data) v = proj_scale * rng.normal();

  auto make_attributes = [&](std::size_t first, std::size_t count) {
    Mat<T> table(count, spec.attribute_dim);
    for (std::size_t c = 0; c < count; ++c)
      for (std::size_t j = 0; j < spec.attribute_dim; ++j) {
        double v = 0.0;
        for (std::size_t i = 0; i < base_dim; ++i) v += proj(j, i) * means[first + c][i];
        table(c, j) = static_cast<T>(v + spec.attribute_noise * rng.normal());
      }
    return table;
  };

  Mat<T> seen_attr = make_attributes(0, spec.num_seen_classes);
  Mat<T> unseen_attr = make_attributes(spec.num_seen_classes, spec.num_unseen_classes);

  auto sample_class_rows = [&](std::size_t class_index, std::size_t count, Mat<T>& out,
                               std::size_t out_row) {
    for (std::size_t s = 0; s < count; ++s) {
      for (std::size_t j = 0; j < base_dim; ++j)
        out(out_row + s, j) =
            static_cast<T>(means[class_index][j] + spec.noise * rng.normal());
      for (std::size_t j = 0; j < spec.nuisance_dim; ++j)
        out(out_row + s, base_dim + j) = static_cast<T>(spec.nuisance_scale * rng.normal());
    }
  };

  SplitDataset<T> ds;
  // Seen rows with per-class held-out tail.
  std::size_t n_seen_train = 0, n_seen_test = 0;
  std::vector<std::size_t> test_counts(spec.num_seen_classes);
  for (std::size_t c = 0; c < spec.num_seen_classes; ++c) {
    test_counts[c] = static_cast<std::size_t>(
        std::floor(spec.seen_test_fraction * static_cast<double>(seen_counts[c]) + 0.5));
    if (test_counts[c] >= seen_counts[c]) test_counts[c] = seen_counts[c] - 1;
    n_seen_train += seen_counts[c] - test_counts[c];
    n_seen_test += test_counts[c];
  }
  ds.seen_features = Mat<T>(n_seen_train, full_dim);
  ds.seen_test_features = Mat<T>(n_seen_test, full_dim);
  std::size_t train_row = 0, test_row = 0;
  for (std::size_t c = 0; c < spec.num_seen_classes; ++c) {
    Mat<T> rows(seen_counts[c], full_dim);
    sample_class_rows(c, seen_counts[c], rows, 0);
    const std::size_t keep = seen_counts[c] - test_counts[c];
    for (std::size_t i = 0; i < keep; ++i, ++train_row) {
      std::copy(rows.row(i).begin(), rows.row(i).end(), ds.seen_features.row(train_row).begin());
      ds.seen_labels.push_back(static_cast<int>(c));
    }
    for (std::size_t i = keep; i < seen_counts[c]; ++i, ++test_row) {
      std::copy(rows.row(i).begin(), rows.row(i).end(),
                ds.seen_test_features.row(test_row).begin());
      ds.seen_test_labels.push_back(static_cast<int>(c));
    }
  }

  std::size_t n_unseen = 0;
  for (std::size_t c : unseen_counts) n_unseen += c;
  ds.unseen_features = Mat<T>(n_unseen, full_dim);
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.num_unseen_classes; ++c) {
    sample_class_rows(spec.num_seen_classes + c, unseen_counts[c], ds.unseen_features, row);
    for (std::size_t i = 0; i < unseen_counts[c]; ++i)
      ds.unseen_labels_eval.push_back(static_cast<int>(c));
    row += unseen_counts[c];
  }

  ds.seen_attributes = std::move(seen_attr);
  ds.unseen_attributes = std::move(unseen_attr);
  validate_dataset(ds);
  return ds;
}

}  // namespace tzsl
