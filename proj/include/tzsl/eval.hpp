#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tzsl/dataspace.hpp"
#include "tzsl/errors.hpp"
#include "tzsl/linear_classifier.hpp"
#include "tzsl/matrix.hpp"
#include "tzsl/net.hpp"
#include "tzsl/prior.hpp"

namespace tzsl {

// ---- metrics -----------------------------------------------------------------

struct PerClassAccuracy {
  std::vector<double> per_class;  // -1 marks classes with no test examples
  double mean = 0.0;              // unweighted mean over classes present
};

inline PerClassAccuracy per_class_top1(std::span<const int> predictions,
                                       std::span<const int> labels, std::size_t num_classes) {
  if (labels.empty()) throw DataError("per_class_top1: empty input");
  if (predictions.size() != labels.size())
    throw DataError("per_class_top1: prediction/label length mismatch");
  std::vector<double> correct(num_classes, 0.0), total(num_classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t y = static_cast<std::size_t>(labels[i]);
    if (y >= num_classes) throw DataError("per_class_top1: label out of range");
    total[y] += 1.0;
    if (predictions[i] == labels[i]) correct[y] += 1.0;
  }
  PerClassAccuracy out;
  out.per_class.assign(num_classes, -1.0);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (total[c] == 0.0) continue;  // classes without test examples cannot be scored
    out.per_class[c] = correct[c] / total[c];
    sum += out.per_class[c];
    present += 1;
  }
  if (present == 0) throw DataError("per_class_top1: no class has test examples");
  out.mean = sum / static_cast<double>(present);
  return out;
}

// H = 2 * a * b / (a + b), zero when either side is zero.
inline double harmonic_mean(double acc_s, double acc_u) {
  if (acc_s <= 0.0 || acc_u <= 0.0) return 0.0;
  return 2.0 * acc_s * acc_u / (acc_s + acc_u);
}

// ---- synthesis and augmentation ------------------------------------------------

// Per-class counts for synthesized sets: `n_per_class * num_classes` rows
// apportioned uniformly or by the prior (largest remainder).
inline std::vector<std::size_t> synthesis_counts(std::size_t num_classes,
                                                 std::size_t n_per_class,
                                                 const std::string& weighting,
                                                 const ClassPrior* prior) {
  if (weighting == "uniform" || prior == nullptr)
    return std::vector<std::size_t>(num_classes, n_per_class);
  if (weighting != "prior")
    throw ConfigError("unknown synthesis weighting '" + weighting + "'");
  if (prior->size() != num_classes) throw DataError("synthesis_counts: prior size mismatch");
  const std::size_t total = n_per_class * num_classes;
  std::vector<std::size_t> counts(num_classes, 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double exact = prior->probs[c] * static_cast<double>(total);
    counts[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total && i < remainders.size(); ++i, ++assigned)
    counts[remainders[i].second] += 1;
  return counts;
}

// Labelled synthetic set: counts[c] rows per class, deterministic in `seed`.
template <class T>
std::pair<Mat<T>, std::vector<int>> synthesize_labeled_set(const ConditionalSampler<T>& sampler,
                                                           std::span<const std::size_t> counts,
                                                           std::uint64_t seed) {
  Rng rng(derive_seed(seed, "synthesize_labeled_set"));
  Mat<T> x;
  std::vector<int> labels;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) continue;
    Mat<T> rows = sampler(c, counts[c], rng);
    x = x.rows == 0 ? std::move(rows) : vstack(x, rows);
    labels.insert(labels.end(), counts[c], static_cast<int>(c));
  }
  return {std::move(x), std::move(labels)};
}

// The final predictive model: a single fully connected layer + softmax over
// N_u classes (TZSL) or N_s + N_u classes (generalized), trained with
// cross-entropy for a fixed number of epochs.
template <class T>
LinearClassifier<T> train_final_classifier(const Mat<T>& features, std::span<const int> labels,
                                           std::size_t num_classes, const ClassifierConfig& cfg,
                                           std::uint64_t seed) {
  return train_linear_classifier(features, labels, num_classes, cfg, seed);
}

// x = [v, h, a_hat]: visual features, the regressor's first-layer hidden
// representation, and its pseudo attributes.
template <class T>
Mat<T> augment(const Mat<T>& v, const DenseNet<T>& regressor, bool hidden_post_activation = true) {
  auto [h, a_hat] = forward_hidden(regressor, v, hidden_post_activation);
  return hstack(hstack(v, h), a_hat);
}

enum class InferenceSpace : unsigned char { kAttribute, kHidden, kVisual, kConcatenated };

inline InferenceSpace inference_space_from_string(const std::string& s) {
  if (s == "attribute") return InferenceSpace::kAttribute;
  if (s == "hidden") return InferenceSpace::kHidden;
  if (s == "visual") return InferenceSpace::kVisual;
  if (s == "concatenated") return InferenceSpace::kConcatenated;
  throw ConfigError("unknown inference space '" + s + "'");
}

inline std::string to_string(InferenceSpace s) {
  switch (s) {
    case InferenceSpace::kAttribute: return "attribute";
    case InferenceSpace::kHidden: return "hidden";
    case InferenceSpace::kVisual: return "visual";
    case InferenceSpace::kConcatenated: return "concatenated";
  }
  return "?";
}

template <class T>
Mat<T> project_to_space(const Mat<T>& v, const DenseNet<T>& regressor, InferenceSpace space,
                        bool hidden_post_activation = true) {
  switch (space) {
    case InferenceSpace::kVisual:
      return v;
    case InferenceSpace::kAttribute:
      return forward(regressor, v);
    case InferenceSpace::kHidden:
      return forward_hidden(regressor, v, hidden_post_activation).first;
    case InferenceSpace::kConcatenated:
      return augment(v, regressor, hidden_post_activation);
  }
  throw Error("project_to_space: unknown space");
}

// ---- reports -------------------------------------------------------------------

struct EvalReport {
  std::vector<double> per_class_unseen;
  double acc_unseen = 0.0;
  std::optional<double> acc_seen;
  std::optional<double> harmonic;
  std::string inference_space = "concatenated";
  std::string method = "classifier";
  std::string prior_mode;
  std::optional<double> prior_tv_error;
  std::uint64_t seed = 0;
  std::string synth_weighting;
  std::vector<std::string> warnings;
  nlohmann::json config_echo = nlohmann::json::object();

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["per_class_unseen"] = per_class_unseen;
    j["acc_unseen"] = acc_unseen;
    if (acc_seen) j["acc_seen"] = *acc_seen;
    if (harmonic) j["harmonic_mean"] = *harmonic;
    j["inference_space"] = inference_space;
    j["method"] = method;
    j["prior_mode"] = prior_mode;
    if (prior_tv_error) j["prior_tv_error"] = *prior_tv_error;
    j["seed"] = seed;
    j["synth_weighting"] = synth_weighting;
    j["warnings"] = warnings;
    j["config"] = config_echo;
    return j;
  }

  static std::string csv_header() {
    return "acc_unseen,acc_seen,harmonic_mean,inference_space,method,prior_mode,prior_tv_error,"
           "seed,synth_weighting";
  }

  std::string to_csv_row() const {
    auto opt = [](const std::optional<double>& v) {
      return v ? std::to_string(*v) : std::string();
    };
    return std::to_string(acc_unseen) + "," + opt(acc_seen) + "," + opt(harmonic) + "," +
           inference_space + "," + method + "," + prior_mode + "," + opt(prior_tv_error) + "," +
           std::to_string(seed) + "," + synth_weighting;
  }
};

struct EvalOptions {
  std::size_t synth_per_class = 400;
  std::string synth_weighting = "uniform";  // "uniform" | "prior"
  ClassifierConfig classifier;
  std::uint64_t seed = 0;
  InferenceSpace space = InferenceSpace::kConcatenated;
  std::string method = "classifier";  // "classifier" | "nearest_attribute"
  double seen_test_fraction = 0.2;
  bool hidden_post_activation = true;
  std::string prior_mode = "given";  // echoed into the report
};

// ---- TZSL evaluation --------------------------------------------------------------

// Train the final predictive model on synthesized unseen features projected
// into the chosen space; score the real unlabelled pool against eval labels.
template <class T>
EvalReport infer_in_space(const ModelSet<T>& models, const SplitDataset<T>& ds,
                          const ClassPrior& prior, const EvalOptions& opts) {
  if (!ds.has_eval_labels()) throw DataError("evaluation requires unseen_labels_eval");
  const std::size_t n_u = ds.num_unseen_classes();

  EvalReport report;
  report.inference_space = to_string(opts.space);
  report.method = opts.method;
  report.prior_mode = opts.prior_mode;
  report.seed = opts.seed;
  report.synth_weighting = opts.synth_weighting;
  if (ds.has_eval_labels()) {
    const ClassPrior truth = empirical_class_prior(ds.unseen_labels_eval, n_u);
    report.prior_tv_error = prior_tv_distance(prior, truth);
  }

  std::vector<int> preds;
  if (opts.method == "nearest_attribute") {
    if (opts.space != InferenceSpace::kAttribute)
      throw ConfigError("nearest_attribute inference is only valid in the attribute space");
    Mat<T> pseudo = forward(models.regressor, ds.unseen_features);
    preds.resize(pseudo.rows);
    for (std::size_t i = 0; i < pseudo.rows; ++i) {
      preds[i] = detail::nearest_center(ds.unseen_attributes, pseudo.row(i));
    }
  } else if (opts.method == "classifier") {
    const std::vector<std::size_t> counts =
        synthesis_counts(n_u, opts.synth_per_class, opts.synth_weighting, &prior);
    auto sampler = generator_sampler(models.generator, ds.unseen_attributes, models.latent_dim);
    auto [synth_x, synth_y] = synthesize_labeled_set<T>(
        sampler, counts, derive_seed(opts.seed, "tzsl_eval_synth"));
    Mat<T> train_x =
        project_to_space(synth_x, models.regressor, opts.space, opts.hidden_post_activation);
    LinearClassifier<T> clf =
        train_final_classifier(train_x, std::span<const int>(synth_y), n_u, opts.classifier,
                               derive_seed(opts.seed, "tzsl_eval_clf"));
    report.warnings = clf.warnings;
    Mat<T> test_x = project_to_space(ds.unseen_features, models.regressor, opts.space,
                                     opts.hidden_post_activation);
    preds = clf.predict(test_x);
  } else {
    throw ConfigError("unknown inference method '" + opts.method + "'");
  }

  PerClassAccuracy acc = per_class_top1(preds, ds.unseen_labels_eval, n_u);
  report.per_class_unseen = acc.per_class;
  report.acc_unseen = acc.mean;
  return report;
}

template <class T>
EvalReport tzsl_evaluate(const ModelSet<T>& models, const SplitDataset<T>& ds,
                         const ClassPrior& prior, const EvalOptions& opts) {
  return infer_in_space(models, ds, prior, opts);
}

namespace detail {

// Deterministic per-class tail split used when a dataset does not carry an
// explicit seen-test blob.
template <class T>
std::pair<Mat<T>, std::vector<int>> carve_seen_test(const SplitDataset<T>& ds, double fraction) {
  std::vector<std::vector<std::size_t>> by_class(ds.num_seen_classes());
  for (std::size_t i = 0; i < ds.seen_labels.size(); ++i)
    by_class[static_cast<std::size_t>(ds.seen_labels[i])].push_back(i);
  std::vector<std::size_t> picked;
  for (auto& idx : by_class) {
    const std::size_t n_test =
        std::min(idx.size(), static_cast<std::size_t>(
                                 std::ceil(fraction * static_cast<double>(idx.size()))));
    picked.insert(picked.end(), idx.end() - static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  Mat<T> x = take_rows(ds.seen_features, std::span<const std::size_t>(picked));
  std::vector<int> y(picked.size());
  for (std::size_t i = 0; i < picked.size(); ++i) y[i] = ds.seen_labels[picked[i]];
  return {std::move(x), std::move(y)};
}

}  // namespace detail

// Generalized evaluation over N_s + N_u classes: one classifier trained on
// synthesized features for every class (seen classes from their attributes,
// unseen from the prior), scored on the held-out seen split plus the real
// unseen pool. Unseen class c maps to joint label N_s + c.
template <class T>
EvalReport gtzsl_evaluate(const ModelSet<T>& models, const SplitDataset<T>& ds,
                          const ClassPrior& prior, const EvalOptions& opts) {
  if (!ds.has_eval_labels()) throw DataError("evaluation requires unseen_labels_eval");
  const std::size_t n_s = ds.num_seen_classes();
  const std::size_t n_u = ds.num_unseen_classes();

  Mat<T> seen_test_x = ds.seen_test_features;
  std::vector<int> seen_test_y = ds.seen_test_labels;
  if (!ds.has_seen_test()) {
    if (!(opts.seen_test_fraction > 0.0))
      throw DataError("gtzsl evaluation requires a seen test split");
    auto carved = detail::carve_seen_test(ds, opts.seen_test_fraction);
    seen_test_x = std::move(carved.first);
    seen_test_y = std::move(carved.second);
  }

  Mat<T> all_attributes = vstack(ds.seen_attributes, ds.unseen_attributes);
  auto sampler = generator_sampler(models.generator, all_attributes, models.latent_dim);
  std::vector<std::size_t> counts(n_s, opts.synth_per_class);
  const std::vector<std::size_t> unseen_counts =
      synthesis_counts(n_u, opts.synth_per_class, opts.synth_weighting, &prior);
  counts.insert(counts.end(), unseen_counts.begin(), unseen_counts.end());

  auto [synth_x, synth_y] =
      synthesize_labeled_set<T>(sampler, counts, derive_seed(opts.seed, "gtzsl_eval_synth"));
  Mat<T> train_x =
      project_to_space(synth_x, models.regressor, opts.space, opts.hidden_post_activation);
  LinearClassifier<T> clf =
      train_final_classifier(train_x, std::span<const int>(synth_y), n_s + n_u, opts.classifier,
                             derive_seed(opts.seed, "gtzsl_eval_clf"));

  Mat<T> seen_proj = project_to_space(seen_test_x, models.regressor, opts.space,
                                      opts.hidden_post_activation);
  Mat<T> unseen_proj = project_to_space(ds.unseen_features, models.regressor, opts.space,
                                        opts.hidden_post_activation);
  const std::vector<int> seen_pred = clf.predict(seen_proj);
  const std::vector<int> unseen_pred = clf.predict(unseen_proj);

  std::vector<int> unseen_joint(ds.unseen_labels_eval.size());
  for (std::size_t i = 0; i < unseen_joint.size(); ++i)
    unseen_joint[i] = ds.unseen_labels_eval[i] + static_cast<int>(n_s);

  PerClassAccuracy acc_s = per_class_top1(seen_pred, seen_test_y, n_s + n_u);
  PerClassAccuracy acc_u = per_class_top1(unseen_pred, unseen_joint, n_s + n_u);

  EvalReport report;
  report.inference_space = to_string(opts.space);
  report.method = "classifier";
  report.prior_mode = opts.prior_mode;
  report.seed = opts.seed;
  report.synth_weighting = opts.synth_weighting;
  report.warnings = clf.warnings;
  report.per_class_unseen.assign(acc_u.per_class.begin() + static_cast<std::ptrdiff_t>(n_s),
                                 acc_u.per_class.end());
  report.acc_unseen = acc_u.mean;
  report.acc_seen = acc_s.mean;
  report.harmonic = harmonic_mean(acc_s.mean, acc_u.mean);
  const ClassPrior truth = empirical_class_prior(ds.unseen_labels_eval, n_u);
  report.prior_tv_error = prior_tv_distance(prior, truth);
  return report;
}

}  // namespace tzsl
