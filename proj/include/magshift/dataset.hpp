#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "magshift/errors.hpp"

namespace magshift {

// The four acquisition magnifications, plus a tag for generator output.
// Synthetic samples never enter a DatasetTable; they only appear in augmented
// training sets and are excluded from domain-classifier targets.
enum class Magnification : int { M40 = 0, M100 = 1, M200 = 2, M400 = 3, Synth = 4 };

inline constexpr std::array<Magnification, 4> kMagnifications{
    Magnification::M40, Magnification::M100, Magnification::M200,
    Magnification::M400};

int magnification_value(Magnification m);  // 40, 100, 200, 400 (Synth: -1)
std::string to_string(Magnification m);
std::optional<Magnification> magnification_from_string(const std::string& s);

// One image patch (or externally extracted feature vector).
struct Sample {
  std::int64_t sample_id = 0;
  std::int64_t patient_id = 0;
  int label = 0;  // 0 benign, 1 malignant
  Magnification magnification = Magnification::M40;
  std::vector<double> values;

  bool operator==(const Sample&) const = default;
};

struct StratumKey {
  int label;
  Magnification magnification;
  auto operator<=>(const StratumKey&) const = default;
};

// Immutable sample collection with patient and (label, magnification) indices.
// Safe for concurrent reads once constructed. The read observer is test and
// audit instrumentation: when set, every values_of() access reports the
// sample id. Attach it before any concurrent use; the callback itself must be
// thread-safe.
class DatasetTable {
 public:
  DatasetTable() = default;
  explicit DatasetTable(std::vector<Sample> samples);

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  std::size_t p_in() const { return p_in_; }

  const Sample& sample_at(std::size_t index) const { return samples_[index]; }
  const Sample& sample_by_id(std::int64_t sample_id) const;
  bool contains(std::int64_t sample_id) const {
    return pos_by_id_.count(sample_id) != 0;
  }

  // Feature access; fires the read observer.
  std::span<const double> values_of(std::int64_t sample_id) const;

  const std::map<std::int64_t, std::vector<std::int64_t>>& index_by_patient()
      const {
    return by_patient_;
  }
  const std::map<StratumKey, std::vector<std::int64_t>>& index_by_stratum()
      const {
    return by_stratum_;
  }

  std::vector<std::int64_t> all_ids() const;

  void set_read_observer(std::function<void(std::int64_t)> observer) const {
    observer_ = std::move(observer);
  }

  bool operator==(const DatasetTable& other) const {
    return samples_ == other.samples_;
  }

 private:
  std::vector<Sample> samples_;
  std::size_t p_in_ = 0;
  std::unordered_map<std::int64_t, std::size_t> pos_by_id_;
  std::map<std::int64_t, std::vector<std::int64_t>> by_patient_;
  std::map<StratumKey, std::vector<std::int64_t>> by_stratum_;
  mutable std::function<void(std::int64_t)> observer_;
};

// Procedural stand-in for a multi-magnification patch dataset. Patches are
// patch_side x patch_side pixel grids flattened row-major.
struct SynthConfig {
  std::size_t n_patients = 82;
  std::size_t patches_per_patient_per_mag = 6;
  double malignant_patient_fraction = 0.66;
  std::size_t patch_side = 8;
  double style_strength = 2.0;    // magnification texture amplitude
  double class_signal_strength = 1.0;
  double patient_effect_strength = 0.5;
  std::uint64_t seed = 7;
};

// Throws ConfigError naming the offending field.
void validate(const SynthConfig& cfg);

// Deterministic in cfg (including seed). Every patient carries one label and
// has patches at all four magnifications. Patch values are the sum of a
// class-dependent blob, a magnification-specific texture, a per-patient
// offset, and unit-variance noise.
DatasetTable generate_synthetic(const SynthConfig& cfg);

// Column names of the delimited text schema. Feature columns are either
// listed explicitly or inferred as every header column after `magnification`.
struct TableSchema {
  std::string sample_id = "sample_id";
  std::string patient_id = "patient_id";
  std::string label = "label";
  std::string magnification = "magnification";
  std::vector<std::string> features;  // empty: infer from header
};

DatasetTable ingest_feature_table(const std::filesystem::path& path,
                                  const TableSchema& schema = {});

void export_feature_table(const DatasetTable& ds,
                          const std::filesystem::path& path);

// Same schema; used for augmented sets that may contain SYNTH samples.
void export_samples(std::span<const Sample> samples, std::size_t p_in,
                    const std::filesystem::path& path);

std::map<StratumKey, std::size_t> stratum_counts(const DatasetTable& ds);

}  // namespace magshift
