#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "magshift/augment.hpp"
#include "magshift/dataset.hpp"
#include "magshift/training.hpp"

namespace magshift {

enum class Method { Baseline, Gan, Grl };

std::string to_string(Method m);

struct DataConfig {
  enum class Source { Synthetic, Table } source = Source::Synthetic;
  SynthConfig synth;
  std::filesystem::path table_path;
};

struct SplitConfig {
  std::array<double, 3> fractions{0.64, 0.16, 0.20};
  std::uint64_t seed = 1;
};

struct SignatureConfig {
  // Empty alpha grid: use the analytic path from alpha_max.
  std::vector<double> alpha_grid;
  std::vector<double> gamma_grid{0.0, 1e-4, 1e-2};
};

struct RunConfig {
  std::vector<Method> methods{Method::Baseline, Method::Gan, Method::Grl};
  std::filesystem::path out_dir = "runs/out";
  std::uint64_t seed = 7;
  std::size_t jobs = 0;  // 0: hardware concurrency
  double threshold = 0.5;
  std::size_t calibration_bins = 10;
};

// Everything a full experiment needs. Encoder settings come from [train]
// with optional per-method overrides in [train.baseline], [train.gan]
// and [train.grl].
struct ExperimentConfig {
  DataConfig data;
  SplitConfig split;
  EncoderConfig train_baseline;
  EncoderConfig train_gan;
  EncoderConfig train_grl;
  GanConfig gan;
  SignatureConfig signature;
  RunConfig run;

  const EncoderConfig& encoder_for(Method m) const;
};

// Parses the sectioned key/value format (see README). Throws ConfigError
// with every collected problem on failure.
ExperimentConfig parse_config(const std::filesystem::path& path);

// Collects all structural and range violations instead of failing fast.
// An empty result means the file is valid.
std::vector<std::string> validate_config(const std::filesystem::path& path);

// FNV-1a over the raw file bytes, hex-encoded; stamped into run manifests.
std::string config_hash(const std::filesystem::path& path);

}  // namespace magshift
