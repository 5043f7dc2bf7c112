#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tzsl/dataspace.hpp"
#include "tzsl/errors.hpp"
#include "tzsl/optim.hpp"

namespace tzsl {

using json = nlohmann::json;

// Receives ready-to-serialize JSON objects (training steps, prior refreshes);
// the CLI streams them as newline-delimited JSON.
using LogSink = std::function<void(const json&)>;

// All hyperparameters of the pipeline. Defaults follow the published
// configuration (r=1, lambda=1, alpha=1, beta=10, gamma=10, AdamW 1e-3 with
// betas (0.5, 0.999), hidden width 4096, five critic steps per generator step,
// one level-1 step per five level-2 steps).
struct TrainConfig {
  double radius = 1.0;
  double lambda = 1.0;
  double alpha = 1.0;
  double beta = 10.0;
  double gamma = 10.0;
  std::size_t latent_dim = 0;  // 0 = attribute dimension
  std::vector<std::size_t> hidden_dims = {4096};
  int epochs_inductive = 300;
  int epochs_transductive = 300;
  int batch_size = 64;
  int critic_steps = 5;
  int level2_per_level1 = 5;
  OptimConfig optim;
  std::size_t synth_per_class_train = 400;  // CPE/BBSE internal synthesis
  std::size_t synth_per_class_eval = 400;
  std::string prior_mode = "cpe";  // given | uniform | cpe | bbse
  std::vector<double> given_prior;  // optional; empty = derive from eval labels
  std::uint64_t seed = 0;
  std::string precision = "f64";  // f32 | f64
  std::string feature_norm = "l2";
  bool sigmoid_generator = false;  // Min-Max companion head (norm experiment)
  int classifier_epochs = 25;
  double seen_test_fraction = 0.2;
  std::string synth_weighting = "uniform";  // uniform | prior
  std::string inference_space = "concatenated";
  bool hidden_post_activation = true;
  bool reset_optimizer_between_phases = false;
  int checkpoint_every = 0;  // epochs; 0 = final checkpoint only
  double adversary_ceiling = 1e6;
  bool pretune = false;
  int pretune_epochs = 15;
  // Critic-only steps for the unseen-data critics at the inductive ->
  // transductive hand-off (they start untrained there; an uninformed critic
  // feeds noise into a converged generator).
  int critic_warmup_steps = 0;

  void validate() const {
    if (!(radius > 0.0)) throw ConfigError("config: radius must be positive");
    if (lambda < 0.0 || alpha < 0.0 || beta < 0.0 || gamma < 0.0)
      throw ConfigError("config: loss weights must be non-negative");
    if (epochs_inductive < 0 || epochs_transductive < 0)
      throw ConfigError("config: epoch counts must be non-negative");
    if (batch_size < 1 || critic_steps < 1 || level2_per_level1 < 1)
      throw ConfigError("config: step counts must be at least 1");
    if (!(optim.learning_rate > 0.0)) throw ConfigError("config: learning_rate must be positive");
    if (hidden_dims.empty()) throw ConfigError("config: hidden_dims must not be empty");
    if (precision != "f32" && precision != "f64")
      throw ConfigError("config: precision must be f32 or f64");
    if (prior_mode != "given" && prior_mode != "uniform" && prior_mode != "cpe" &&
        prior_mode != "bbse")
      throw ConfigError("config: unknown prior_mode '" + prior_mode + "'");
    if (synth_weighting != "prior" && synth_weighting != "uniform")
      throw ConfigError("config: unknown synth_weighting '" + synth_weighting + "'");
    if (classifier_epochs < 1 || pretune_epochs < 1)
      throw ConfigError("config: classifier/pretune epochs must be at least 1");
    if (synth_per_class_train == 0 || synth_per_class_eval == 0)
      throw ConfigError("config: synthesis counts must be positive");
  }
};

// A complete run description: hyperparameters plus the data source, output
// directory, and experiment mode.
struct RunConfig {
  TrainConfig train;
  std::string dataset_path;                // exclusive with `synthetic`
  std::optional<SyntheticSpec> synthetic;  // in-memory desk-scale data
  std::optional<std::uint64_t> data_seed;  // synthetic generation seed (defaults to train.seed)
  std::string out_dir;
  std::string mode = "train";  // train | norm-exp

  std::uint64_t synthetic_seed() const { return data_seed.value_or(train.seed); }

  void validate() const {
    train.validate();
    if (dataset_path.empty() == !synthetic.has_value())
      throw ConfigError("config: exactly one of data.path or data.synthetic is required");
    if (mode != "train" && mode != "norm-exp")
      throw ConfigError("config: unknown mode '" + mode + "'");
  }
};

namespace detail {

inline void check_keys(const json& obj, const std::set<std::string>& allowed,
                       const std::string& scope) {
  if (!obj.is_object()) throw ConfigError("config: '" + scope + "' must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("config: unknown key '" + (scope.empty() ? it.key() : scope + "." + it.key()) +
                        "'");
}

template <class T>
void read_field(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: bad value for key '") + key + "'");
  }
}

}  // namespace detail

inline OptimConfig optimizer_from_json(const json& j, const std::string& scope) {
  detail::check_keys(j, {"learning_rate", "beta1", "beta2", "weight_decay", "epsilon"}, scope);
  OptimConfig oc;
  detail::read_field(j, "learning_rate", oc.learning_rate);
  detail::read_field(j, "beta1", oc.beta1);
  detail::read_field(j, "beta2", oc.beta2);
  detail::read_field(j, "weight_decay", oc.weight_decay);
  detail::read_field(j, "epsilon", oc.epsilon);
  return oc;
}

inline json optimizer_to_json(const OptimConfig& oc) {
  return json{{"learning_rate", oc.learning_rate},
              {"beta1", oc.beta1},
              {"beta2", oc.beta2},
              {"weight_decay", oc.weight_decay},
              {"epsilon", oc.epsilon}};
}

inline SyntheticSpec synthetic_from_json(const json& j, const std::string& scope) {
  detail::check_keys(j,
                     {"num_seen_classes", "num_unseen_classes", "feature_dim", "attribute_dim",
                      "seen_counts", "unseen_counts", "separation", "noise", "attribute_noise",
                      "seen_test_fraction", "nuisance_dim", "nuisance_scale",
                      "mean_subspace_dim"},
                     scope);
  SyntheticSpec s;
  detail::read_field(j, "num_seen_classes", s.num_seen_classes);
  detail::read_field(j, "num_unseen_classes", s.num_unseen_classes);
  detail::read_field(j, "feature_dim", s.feature_dim);
  detail::read_field(j, "attribute_dim", s.attribute_dim);
  detail::read_field(j, "seen_counts", s.seen_counts);
  detail::read_field(j, "unseen_counts", s.unseen_counts);
  detail::read_field(j, "separation", s.separation);
  detail::read_field(j, "noise", s.noise);
  detail::read_field(j, "attribute_noise", s.attribute_noise);
  detail::read_field(j, "seen_test_fraction", s.seen_test_fraction);
  detail::read_field(j, "nuisance_dim", s.nuisance_dim);
  detail::read_field(j, "nuisance_scale", s.nuisance_scale);
  detail::read_field(j, "mean_subspace_dim", s.mean_subspace_dim);
  return s;
}

inline json synthetic_to_json(const SyntheticSpec& s) {
  return json{{"num_seen_classes", s.num_seen_classes},
              {"num_unseen_classes", s.num_unseen_classes},
              {"feature_dim", s.feature_dim},
              {"attribute_dim", s.attribute_dim},
              {"seen_counts", s.seen_counts},
              {"unseen_counts", s.unseen_counts},
              {"separation", s.separation},
              {"noise", s.noise},
              {"attribute_noise", s.attribute_noise},
              {"seen_test_fraction", s.seen_test_fraction},
              {"nuisance_dim", s.nuisance_dim},
              {"nuisance_scale", s.nuisance_scale},
              {"mean_subspace_dim", s.mean_subspace_dim}};
}

inline TrainConfig train_config_from_json(const json& j, const std::string& scope = "train") {
  detail::check_keys(
      j, {"radius",        "lambda",
          "alpha",         "beta",
          "gamma",         "latent_dim",
          "hidden_dims",   "epochs_inductive",
          "epochs_transductive", "batch_size",
          "critic_steps",  "level2_per_level1",
          "optimizer",     "synth_per_class_train",
          "synth_per_class_eval", "prior_mode",
          "given_prior",   "seed",
          "precision",     "feature_norm",
          "sigmoid_generator", "classifier_epochs",
          "seen_test_fraction", "synth_weighting",
          "inference_space", "hidden_post_activation",
          "reset_optimizer_between_phases", "checkpoint_every",
          "adversary_ceiling", "pretune",
          "pretune_epochs", "critic_warmup_steps"},
      scope);
  TrainConfig c;
  detail::read_field(j, "radius", c.radius);
  detail::read_field(j, "lambda", c.lambda);
  detail::read_field(j, "alpha", c.alpha);
  detail::read_field(j, "beta", c.beta);
  detail::read_field(j, "gamma", c.gamma);
  detail::read_field(j, "latent_dim", c.latent_dim);
  detail::read_field(j, "hidden_dims", c.hidden_dims);
  detail::read_field(j, "epochs_inductive", c.epochs_inductive);
  detail::read_field(j, "epochs_transductive", c.epochs_transductive);
  detail::read_field(j, "batch_size", c.batch_size);
  detail::read_field(j, "critic_steps", c.critic_steps);
  detail::read_field(j, "level2_per_level1", c.level2_per_level1);
  if (j.contains("optimizer")) c.optim = optimizer_from_json(j.at("optimizer"), scope + ".optimizer");
  detail::read_field(j, "synth_per_class_train", c.synth_per_class_train);
  detail::read_field(j, "synth_per_class_eval", c.synth_per_class_eval);
  detail::read_field(j, "prior_mode", c.prior_mode);
  detail::read_field(j, "given_prior", c.given_prior);
  detail::read_field(j, "seed", c.seed);
  detail::read_field(j, "precision", c.precision);
  detail::read_field(j, "feature_norm", c.feature_norm);
  detail::read_field(j, "sigmoid_generator", c.sigmoid_generator);
  detail::read_field(j, "classifier_epochs", c.classifier_epochs);
  detail::read_field(j, "seen_test_fraction", c.seen_test_fraction);
  detail::read_field(j, "synth_weighting", c.synth_weighting);
  detail::read_field(j, "inference_space", c.inference_space);
  detail::read_field(j, "hidden_post_activation", c.hidden_post_activation);
  detail::read_field(j, "reset_optimizer_between_phases", c.reset_optimizer_between_phases);
  detail::read_field(j, "checkpoint_every", c.checkpoint_every);
  detail::read_field(j, "adversary_ceiling", c.adversary_ceiling);
  detail::read_field(j, "pretune", c.pretune);
  detail::read_field(j, "pretune_epochs", c.pretune_epochs);
  detail::read_field(j, "critic_warmup_steps", c.critic_warmup_steps);
  c.validate();
  return c;
}

// Echo with every default materialized.
inline json train_config_to_json(const TrainConfig& c) {
  return json{{"radius", c.radius},
              {"lambda", c.lambda},
              {"alpha", c.alpha},
              {"beta", c.beta},
              {"gamma", c.gamma},
              {"latent_dim", c.latent_dim},
              {"hidden_dims", c.hidden_dims},
              {"epochs_inductive", c.epochs_inductive},
              {"epochs_transductive", c.epochs_transductive},
              {"batch_size", c.batch_size},
              {"critic_steps", c.critic_steps},
              {"level2_per_level1", c.level2_per_level1},
              {"optimizer", optimizer_to_json(c.optim)},
              {"synth_per_class_train", c.synth_per_class_train},
              {"synth_per_class_eval", c.synth_per_class_eval},
              {"prior_mode", c.prior_mode},
              {"given_prior", c.given_prior},
              {"seed", c.seed},
              {"precision", c.precision},
              {"feature_norm", c.feature_norm},
              {"sigmoid_generator", c.sigmoid_generator},
              {"classifier_epochs", c.classifier_epochs},
              {"seen_test_fraction", c.seen_test_fraction},
              {"synth_weighting", c.synth_weighting},
              {"inference_space", c.inference_space},
              {"hidden_post_activation", c.hidden_post_activation},
              {"reset_optimizer_between_phases", c.reset_optimizer_between_phases},
              {"checkpoint_every", c.checkpoint_every},
              {"adversary_ceiling", c.adversary_ceiling},
              {"pretune", c.pretune},
              {"pretune_epochs", c.pretune_epochs},
              {"critic_warmup_steps", c.critic_warmup_steps}};
}

inline RunConfig run_config_from_json(const json& j) {
  detail::check_keys(j, {"train", "data", "out", "mode"}, "");
  RunConfig rc;
  if (j.contains("train")) rc.train = train_config_from_json(j.at("train"));
  if (j.contains("data")) {
    const json& d = j.at("data");
    detail::check_keys(d, {"path", "synthetic", "seed"}, "data");
    if (d.contains("path")) rc.dataset_path = d.at("path").get<std::string>();
    if (d.contains("synthetic"))
      rc.synthetic = synthetic_from_json(d.at("synthetic"), "data.synthetic");
    if (d.contains("seed")) rc.data_seed = d.at("seed").get<std::uint64_t>();
  }
  detail::read_field(j, "out", rc.out_dir);
  detail::read_field(j, "mode", rc.mode);
  rc.validate();
  return rc;
}

inline json run_config_to_json(const RunConfig& rc) {
  json data = json::object();
  if (!rc.dataset_path.empty()) data["path"] = rc.dataset_path;
  if (rc.synthetic) data["synthetic"] = synthetic_to_json(*rc.synthetic);
  if (rc.data_seed) data["seed"] = *rc.data_seed;
  return json{{"train", train_config_to_json(rc.train)},
              {"data", data},
              {"out", rc.out_dir},
              {"mode", rc.mode}};
}

}  // namespace tzsl
