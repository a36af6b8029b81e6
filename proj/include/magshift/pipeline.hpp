#pragma once

#include <string>

#include "magshift/config.hpp"
#include "magshift/splitting.hpp"

namespace magshift {

// Dataset, canonical split and LOMO folds derived deterministically from the
// config; every stage rebuilds this in memory and reads heavyweight artifacts
// (checkpoints) from the output tree.
struct Workspace {
  DatasetTable ds;
  SplitAssignment split;
  std::vector<LomoFold> folds;
};

Workspace build_workspace(const ExperimentConfig& cfg);

inline constexpr const char* kStageSplit = "split";
inline constexpr const char* kStageTrain = "train";
inline constexpr const char* kStageEval = "eval";
inline constexpr const char* kStageSignature = "signature";
inline constexpr const char* kStageAll = "all";

// Runs one stage (or all of them) against cfg.run.out_dir. Returns 0 on
// success and 2 when any stage or method failed; partial artifacts stay on
// disk next to a FAILED marker naming the failure. Configuration problems
// throw ConfigError.
int run_stage(const ExperimentConfig& cfg, const std::string& stage,
              const std::string& config_hash_hex);

inline int run_experiment(const ExperimentConfig& cfg,
                          const std::string& config_hash_hex = "") {
  return run_stage(cfg, kStageAll, config_hash_hex);
}

std::string fold_dir_name(Magnification m);

}  // namespace magshift
