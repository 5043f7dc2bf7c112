#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tzsl/config.hpp"
#include "tzsl/dataspace.hpp"
#include "tzsl/errors.hpp"
#include "tzsl/eval.hpp"
#include "tzsl/io.hpp"
#include "tzsl/norm_experiment.hpp"
#include "tzsl/prior.hpp"
#include "tzsl/train.hpp"

namespace tzsl::cli {

namespace fs = std::filesystem;

// Exit codes: 0 success, 1 usage/config error, 2 runtime/numeric error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string precision;  // empty = from config
};

inline RunConfig load_run_config(const CommonArgs& args) {
  if (args.config_path.empty()) throw ConfigError("--config is required");
  std::ifstream in(args.config_path);
  if (!in) throw ConfigError("cannot open config file '" + args.config_path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
  }
  RunConfig rc = run_config_from_json(j);
  if (!args.out_dir.empty()) rc.out_dir = args.out_dir;
  if (args.seed) rc.train.seed = *args.seed;
  if (!args.precision.empty()) rc.train.precision = args.precision;
  rc.train.validate();
  return rc;
}

inline void write_json_file(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw DataError("cannot write '" + path.string() + "'");
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << text;
  if (!out) throw DataError("cannot write '" + path.string() + "'");
}

namespace detail {

template <class T>
SplitDataset<T> obtain_raw_dataset(const RunConfig& rc) {
  if (rc.synthetic) return make_synthetic_tzsl<T>(*rc.synthetic, rc.synthetic_seed());
  DatasetLoadOptions opts;
  opts.prepare = false;
  return load_dataset<T>(rc.dataset_path, opts);
}

template <class T>
SplitDataset<T> obtain_prepared_dataset(const RunConfig& rc) {
  SplitDataset<T> raw = obtain_raw_dataset<T>(rc);
  return prepare_dataset(std::move(raw), feature_norm_from_string(rc.train.feature_norm),
                         static_cast<T>(rc.train.radius));
}

inline json dataset_summary(std::size_t n_seen, std::size_t n_seen_test, std::size_t n_unseen,
                            std::size_t n_s, std::size_t n_u,
                            const std::optional<ClassPrior>& unseen_prior) {
  json j;
  j["seen_examples"] = n_seen;
  j["seen_test_examples"] = n_seen_test;
  j["unseen_examples"] = n_unseen;
  j["seen_classes"] = n_s;
  j["unseen_classes"] = n_u;
  if (unseen_prior) j["empirical_unseen_prior"] = unseen_prior->probs;
  return j;
}

}  // namespace detail

// ---- gen-data -------------------------------------------------------------------

// Writes the synthetic dataset described by the config (raw, unnormalized
// payloads; normalization happens at load time) and prints a summary.
inline int cmd_gen_data(const CommonArgs& args, std::ostream& out = std::cout) {
  RunConfig rc = load_run_config(args);
  if (!rc.synthetic) throw ConfigError("gen-data requires data.synthetic in the config");
  if (rc.out_dir.empty()) throw ConfigError("gen-data requires an output directory (--out)");
  // Blobs are f32; generate at matching precision so saved bytes are replayable.
  SplitDataset<double> ds = make_synthetic_tzsl<double>(*rc.synthetic, rc.synthetic_seed());
  save_dataset(rc.out_dir, ds);
  std::optional<ClassPrior> prior;
  if (ds.has_eval_labels())
    prior = empirical_class_prior(ds.unseen_labels_eval, ds.num_unseen_classes());
  json summary = detail::dataset_summary(ds.seen_features.rows, ds.seen_test_features.rows,
                                         ds.unseen_features.rows, ds.num_seen_classes(),
                                         ds.num_unseen_classes(), prior);
  summary["out"] = rc.out_dir;
  summary["config"] = run_config_to_json(rc);
  out << summary.dump(2) << "\n";
  return kExitOk;
}

// ---- train -----------------------------------------------------------------------

template <class T>
int run_train(const RunConfig& rc, std::ostream& out) {
  if (rc.out_dir.empty()) throw ConfigError("train requires an output directory (--out)");
  const fs::path out_dir(rc.out_dir);
  fs::create_directories(out_dir);

  std::ofstream log(out_dir / "train_log.jsonl");
  if (!log) throw DataError("cannot write training log in '" + rc.out_dir + "'");
  LogSink sink = [&log](const json& line) { log << line.dump() << "\n"; };

  SplitDataset<T> ds = detail::obtain_prepared_dataset<T>(rc);
  const json config_echo = run_config_to_json(rc);

  std::function<void(const TrainState<T>&)> hook;
  if (rc.train.checkpoint_every > 0) {
    hook = [&](const TrainState<T>& st) {
      if (st.epoch % rc.train.checkpoint_every != 0) return;
      save_checkpoint(out_dir / ("checkpoint_epoch_" + std::to_string(st.epoch)), st.models,
                      st.prior, config_echo);
    };
  }

  auto [state, report] = run_pipeline<T>(ds, rc.train, sink, hook);
  report.config_echo = config_echo;

  save_checkpoint(out_dir / "checkpoint", state.models, state.prior, config_echo);
  write_json_file(out_dir / "report.json", report.to_json());
  write_text_file(out_dir / "report.csv",
                  EvalReport::csv_header() + "\n" + report.to_csv_row() + "\n");
  out << report.to_json().dump(2) << "\n";
  return kExitOk;
}

inline int cmd_train(const CommonArgs& args, std::ostream& out = std::cout) {
  RunConfig rc = load_run_config(args);
  if (rc.train.precision == "f32") return run_train<float>(rc, out);
  return run_train<double>(rc, out);
}

// ---- eval ------------------------------------------------------------------------

struct EvalArgs {
  CommonArgs common;
  std::string checkpoint_dir;
  std::string data_dir;
  std::string mode = "tzsl";  // tzsl | gtzsl | spaces
};

template <class T>
int run_eval(const EvalArgs& args, const RunConfig& rc, std::ostream& out) {
  Checkpoint<T> ck = load_checkpoint<T>(args.checkpoint_dir);
  DatasetLoadOptions load_opts;
  load_opts.feature_norm = feature_norm_from_string(rc.train.feature_norm);
  load_opts.radius = rc.train.radius;
  SplitDataset<T> ds = load_dataset<T>(args.data_dir, load_opts);
  if (ds.d_v() != ck.models.d_v)
    throw DataError("checkpoint expects feature dim " + std::to_string(ck.models.d_v) +
                    ", dataset has " + std::to_string(ds.d_v()));
  if (ds.d_a() != ck.models.d_a)
    throw DataError("checkpoint expects attribute dim " + std::to_string(ck.models.d_a) +
                    ", dataset has " + std::to_string(ds.d_a()));

  EvalOptions opts = eval_options_from_config<T>(rc.train);
  const json config_echo = run_config_to_json(rc);
  const fs::path out_dir = rc.out_dir.empty() ? fs::path(args.checkpoint_dir) : fs::path(rc.out_dir);

  if (args.mode == "tzsl" || args.mode == "gtzsl") {
    EvalReport report = args.mode == "tzsl"
                            ? tzsl_evaluate(ck.models, ds, ck.prior, opts)
                            : gtzsl_evaluate(ck.models, ds, ck.prior, opts);
    report.config_echo = config_echo;
    write_json_file(out_dir / ("eval_" + args.mode + ".json"), report.to_json());
    write_text_file(out_dir / ("eval_" + args.mode + ".csv"),
                    EvalReport::csv_header() + "\n" + report.to_csv_row() + "\n");
    out << report.to_json().dump(2) << "\n";
    return kExitOk;
  }
  if (args.mode == "spaces") {
    json reports = json::array();
    std::string csv = EvalReport::csv_header() + "\n";
    for (InferenceSpace space : {InferenceSpace::kAttribute, InferenceSpace::kHidden,
                                 InferenceSpace::kVisual, InferenceSpace::kConcatenated}) {
      EvalOptions space_opts = opts;
      space_opts.space = space;
      EvalReport report = tzsl_evaluate(ck.models, ds, ck.prior, space_opts);
      report.config_echo = config_echo;
      reports.push_back(report.to_json());
      csv += report.to_csv_row() + "\n";
    }
    write_json_file(out_dir / "eval_spaces.json", reports);
    write_text_file(out_dir / "eval_spaces.csv", csv);
    out << reports.dump(2) << "\n";
    return kExitOk;
  }
  throw ConfigError("unknown eval mode '" + args.mode + "'");
}

inline int cmd_eval(const EvalArgs& args, std::ostream& out = std::cout) {
  if (args.checkpoint_dir.empty() || args.data_dir.empty())
    throw ConfigError("eval requires --checkpoint and --data");
  RunConfig rc;
  if (!args.common.config_path.empty()) {
    rc = load_run_config(args.common);
  } else {
    // No config file: reuse the configuration echoed into the checkpoint.
    std::ifstream in(fs::path(args.checkpoint_dir) / "manifest.json");
    if (!in) throw DataError("missing checkpoint manifest in '" + args.checkpoint_dir + "'");
    json manifest;
    in >> manifest;
    const json echoed = manifest.value("config", json::object());
    if (echoed.contains("train")) rc.train = train_config_from_json(echoed.at("train"));
    rc.dataset_path = args.data_dir;
    if (!args.common.out_dir.empty()) rc.out_dir = args.common.out_dir;
    if (args.common.seed) rc.train.seed = *args.common.seed;
    if (!args.common.precision.empty()) rc.train.precision = args.common.precision;
  }
  if (rc.train.precision == "f32") return run_eval<float>(args, rc, out);
  return run_eval<double>(args, rc, out);
}

// ---- prior -----------------------------------------------------------------------

struct PriorArgs {
  CommonArgs common;
  std::string checkpoint_dir;
  std::string data_dir;
  std::string method = "cpe";  // cpe | bbse | uniform
  int trials = 1;
};

template <class T>
int run_prior(const PriorArgs& args, const RunConfig& rc, std::ostream& out) {
  if (args.trials < 1) throw ConfigError("prior requires --trials >= 1");
  if (args.method != "cpe" && args.method != "bbse" && args.method != "uniform")
    throw ConfigError("unknown prior method '" + args.method + "'");
  Checkpoint<T> ck = load_checkpoint<T>(args.checkpoint_dir);
  DatasetLoadOptions load_opts;
  load_opts.feature_norm = feature_norm_from_string(rc.train.feature_norm);
  load_opts.radius = rc.train.radius;
  SplitDataset<T> ds = load_dataset<T>(args.data_dir, load_opts);
  if (ds.d_v() != ck.models.d_v)
    throw DataError("checkpoint expects feature dim " + std::to_string(ck.models.d_v) +
                    ", dataset has " + std::to_string(ds.d_v()));

  const std::size_t n_u = ds.num_unseen_classes();
  const auto truth = true_unseen_prior(ds);
  ClassifierConfig clf_cfg;
  clf_cfg.epochs = rc.train.classifier_epochs;
  clf_cfg.batch_size = rc.train.batch_size;
  clf_cfg.optim = rc.train.optim;
  auto sampler = generator_sampler(ck.models.generator, ds.unseen_attributes,
                                   ck.models.latent_dim);

  const fs::path out_dir =
      rc.out_dir.empty() ? fs::path(args.checkpoint_dir) : fs::path(rc.out_dir);
  fs::create_directories(out_dir);
  std::ofstream trials_log(out_dir / "prior_trials.jsonl");

  std::vector<double> tv_errors;
  int failures = 0;
  for (int trial = 0; trial < args.trials; ++trial) {
    const std::uint64_t trial_seed =
        derive_seed(rc.train.seed, "prior_trial", static_cast<std::uint64_t>(trial));
    json line;
    line["trial"] = trial;
    line["method"] = args.method;
    line["seed"] = trial_seed;
    try {
      ClassPrior prior =
          args.method == "uniform"
              ? uniform_prior(n_u)
              : (args.method == "cpe"
                     ? cpe_estimate(sampler, ds.unseen_features, n_u,
                                    rc.train.synth_per_class_train, trial_seed, clf_cfg)
                     : bbse_estimate(sampler, ds.unseen_features, n_u,
                                     rc.train.synth_per_class_train, trial_seed, clf_cfg));
      line["prior"] = prior.probs;
      if (truth) {
        const double tv = prior_tv_distance(prior, *truth);
        line["tv_error"] = tv;
        tv_errors.push_back(tv);
      }
    } catch (const Error& e) {
      // One bad trial (e.g. a singular BBSE solve) must not sink the sweep.
      line["error"] = e.what();
      failures += 1;
    }
    trials_log << line.dump() << "\n";
    out << line.dump() << "\n";
  }

  json report;
  report["method"] = args.method;
  report["trials"] = args.trials;
  report["failures"] = failures;
  if (!tv_errors.empty()) {
    double mean = 0.0;
    for (double v : tv_errors) mean += v;
    mean /= static_cast<double>(tv_errors.size());
    double var = 0.0;
    for (double v : tv_errors) var += (v - mean) * (v - mean);
    var /= static_cast<double>(tv_errors.size());
    report["tv_error_mean"] = mean;
    report["tv_error_stddev"] = std::sqrt(var);
  }
  if (truth) report["true_prior"] = truth->probs;
  report["config"] = run_config_to_json(rc);
  write_json_file(out_dir / "prior_report.json", report);
  out << report.dump(2) << "\n";
  return kExitOk;
}

inline int cmd_prior(const PriorArgs& args, std::ostream& out = std::cout) {
  if (args.checkpoint_dir.empty() || args.data_dir.empty())
    throw ConfigError("prior requires --checkpoint and --data");
  RunConfig rc;
  if (!args.common.config_path.empty()) {
    rc = load_run_config(args.common);
  } else {
    std::ifstream in(fs::path(args.checkpoint_dir) / "manifest.json");
    if (!in) throw DataError("missing checkpoint manifest in '" + args.checkpoint_dir + "'");
    json manifest;
    in >> manifest;
    const json echoed = manifest.value("config", json::object());
    if (echoed.contains("train")) rc.train = train_config_from_json(echoed.at("train"));
    rc.dataset_path = args.data_dir;
    if (!args.common.out_dir.empty()) rc.out_dir = args.common.out_dir;
    if (args.common.seed) rc.train.seed = *args.common.seed;
    if (!args.common.precision.empty()) rc.train.precision = args.common.precision;
  }
  if (rc.train.precision == "f32") return run_prior<float>(args, rc, out);
  return run_prior<double>(args, rc, out);
}

// ---- norm-exp ---------------------------------------------------------------------

template <class T>
int run_norm_exp(const RunConfig& rc, std::ostream& out) {
  if (rc.out_dir.empty()) throw ConfigError("norm-exp requires an output directory (--out)");
  const fs::path out_dir(rc.out_dir);
  fs::create_directories(out_dir);
  std::ofstream log(out_dir / "norm_exp_log.jsonl");
  LogSink sink = [&log](const json& line) { log << line.dump() << "\n"; };

  SplitDataset<T> raw = detail::obtain_raw_dataset<T>(rc);
  NormExperimentResult result = run_norm_experiment<T>(raw, rc.train, sink);

  auto hist_csv = [&](const NormRunResult& r) {
    std::string csv = "bin_lo,bin_hi,real_density,synth_density\n";
    const double width = r.hist_real.bin_width();
    for (std::size_t b = 0; b < r.hist_real.density.size(); ++b) {
      const double lo = r.hist_real.lo + static_cast<double>(b) * width;
      csv += std::to_string(lo) + "," + std::to_string(lo + width) + "," +
             std::to_string(r.hist_real.density[b]) + "," +
             std::to_string(r.hist_synth.density[b]) + "\n";
    }
    return csv;
  };
  write_text_file(out_dir / "hist_l2.csv", hist_csv(result.l2));
  write_text_file(out_dir / "hist_minmax.csv", hist_csv(result.minmax));

  std::string acc_csv = "epoch,acc_l2,acc_minmax\n";
  for (std::size_t e = 0; e < result.l2.accuracy_by_epoch.size(); ++e)
    acc_csv += std::to_string(e) + "," + std::to_string(result.l2.accuracy_by_epoch[e]) + "," +
               std::to_string(result.minmax.accuracy_by_epoch[e]) + "\n";
  write_text_file(out_dir / "accuracy.csv", acc_csv);

  json report = result.to_json();
  report["config"] = run_config_to_json(rc);
  write_json_file(out_dir / "norm_report.json", report);
  out << report.dump(2) << "\n";
  return kExitOk;
}

inline int cmd_norm_experiment(const CommonArgs& args, std::ostream& out = std::cout) {
  RunConfig rc = load_run_config(args);
  if (rc.train.precision == "f32") return run_norm_exp<float>(rc, out);
  return run_norm_exp<double>(rc, out);
}

// Maps library errors onto the documented exit codes.
template <class Fn>
int guarded(Fn&& fn, std::ostream& err = std::cerr) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace tzsl::cli
