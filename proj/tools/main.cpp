#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tzsl/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Transductive zero-shot learning at the feature level: bi-directional "
               "adversarial alignment, unseen-class prior estimation, evaluation harnesses."};
  app.require_subcommand(1);

  tzsl::cli::CommonArgs common;
  std::uint64_t seed_flag = 0;
  bool seed_set = false;

  auto add_common = [&](CLI::App* sub, bool with_out = true) {
    sub->add_option("--config", common.config_path, "JSON run configuration");
    if (with_out) sub->add_option("--out", common.out_dir, "output directory");
    sub->add_option("--seed", seed_flag, "seed override")->each([&](const std::string&) {
      seed_set = true;
    });
    sub->add_option("--precision", common.precision, "f32 or f64")
        ->check(CLI::IsMember({"f32", "f64"}));
  };

  CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic dataset directory");
  add_common(gen);

  CLI::App* train = app.add_subcommand("train", "run the full training pipeline");
  add_common(train);

  tzsl::cli::EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval);
  eval->add_option("--checkpoint", eval_args.checkpoint_dir, "checkpoint directory")->required();
  eval->add_option("--data", eval_args.data_dir, "dataset directory")->required();
  eval->add_option("--mode", eval_args.mode, "tzsl | gtzsl | spaces")
      ->check(CLI::IsMember({"tzsl", "gtzsl", "spaces"}));

  tzsl::cli::PriorArgs prior_args;
  CLI::App* prior = app.add_subcommand("prior", "run prior-estimation trials on a checkpoint");
  add_common(prior);
  prior->add_option("--checkpoint", prior_args.checkpoint_dir, "checkpoint directory")
      ->required();
  prior->add_option("--data", prior_args.data_dir, "dataset directory")->required();
  prior->add_option("--method", prior_args.method, "cpe | bbse | uniform")
      ->check(CLI::IsMember({"cpe", "bbse", "uniform"}));
  prior->add_option("--trials", prior_args.trials, "number of seeded trials");

  CLI::App* norm = app.add_subcommand("norm-exp", "L2 vs Min-Max normalization comparison");
  add_common(norm);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return tzsl::cli::kExitUsage;
  }
  if (seed_set) common.seed = seed_flag;

  return tzsl::cli::guarded([&]() -> int {
    if (gen->parsed()) return tzsl::cli::cmd_gen_data(common);
    if (train->parsed()) return tzsl::cli::cmd_train(common);
    if (eval->parsed()) {
      eval_args.common = common;
      return tzsl::cli::cmd_eval(eval_args);
    }
    if (prior->parsed()) {
      prior_args.common = common;
      return tzsl::cli::cmd_prior(prior_args);
    }
    if (norm->parsed()) return tzsl::cli::cmd_norm_experiment(common);
    throw tzsl::ConfigError("no subcommand given");
  });
}
