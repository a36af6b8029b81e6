#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "magshift/config.hpp"
#include "magshift/pipeline.hpp"
#include "magshift/version.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t jobs = 0;
  bool jobs_set = false;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "Experiment config file")
      ->required();
  cmd->add_option("--out", opts.out_dir, "Output directory override");
  cmd->add_option("--seed", opts.seed, "Run seed override")
      ->each([&](const std::string&) { opts.seed_set = true; });
  cmd->add_option("--jobs", opts.jobs, "Worker pool size (0 = all cores)")
      ->each([&](const std::string&) { opts.jobs_set = true; });
}

// Precedence: --out flag, then MAGSHIFT_OUT, then the config value.
magshift::ExperimentConfig load(const CommonOptions& opts) {
  magshift::ExperimentConfig cfg = magshift::parse_config(opts.config_path);
  if (const char* env = std::getenv("MAGSHIFT_OUT"); env && *env) {
    cfg.run.out_dir = env;
  }
  if (!opts.out_dir.empty()) cfg.run.out_dir = opts.out_dir;
  if (opts.seed_set) cfg.run.seed = opts.seed;
  if (opts.jobs_set) cfg.run.jobs = opts.jobs;
  return cfg;
}

int run(const CommonOptions& opts, const std::string& stage) {
  const magshift::ExperimentConfig cfg = load(opts);
  const int status =
      magshift::run_stage(cfg, stage, magshift::config_hash(opts.config_path));
  if (status != 0) {
    std::cerr << "magshift: stage '" << stage
              << "' finished with failures; see FAILED markers under "
              << cfg.run.out_dir << "\n";
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Magnification-robust patch classification experiments"};
  app.set_version_flag("--version", std::string(magshift::kVersion));
  app.require_subcommand(1);

  CommonOptions opts;
  const char* stages[] = {magshift::kStageAll, magshift::kStageSplit,
                          magshift::kStageTrain, magshift::kStageEval,
                          magshift::kStageSignature};
  const char* descriptions[] = {
      "Run every stage end to end",
      "Generate or ingest data, build the split and LOMO folds",
      "Train the configured methods on every fold",
      "Evaluate trained checkpoints on the held-out magnifications",
      "Fit sparse signatures and the cross-fold stability report"};
  for (std::size_t i = 0; i < 5; ++i) {
    add_common(app.add_subcommand(stages[i], descriptions[i]), opts);
  }

  std::string validate_path;
  CLI::App* validate_cmd =
      app.add_subcommand("validate", "Check a config file and list problems");
  validate_cmd->add_option("--config", validate_path, "Experiment config file")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (validate_cmd->parsed()) {
      const auto errors = magshift::validate_config(validate_path);
      if (errors.empty()) {
        std::cout << "ok\n";
        return 0;
      }
      for (const std::string& e : errors) std::cout << e << "\n";
      return 1;
    }
    for (const char* stage : stages) {
      if (app.get_subcommand(stage)->parsed()) return run(opts, stage);
    }
    return 1;
  } catch (const magshift::ConfigError& e) {
    std::cerr << "magshift: " << e.what() << "\n";
    return 1;
  } catch (const magshift::IoError& e) {
    std::cerr << "magshift: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "magshift: " << e.what() << "\n";
    return 2;
  }
}
