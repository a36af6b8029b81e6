#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "magshift/dataset.hpp"

namespace magshift {

enum class Split : int { Train = 0, Val = 1, Test = 2 };

std::string to_string(Split s);

// Canonical patient-disjoint partition. Every sample inherits its patient's
// split, so the two maps are always consistent.
struct SplitAssignment {
  std::unordered_map<std::int64_t, Split> sample_split;
  std::map<std::int64_t, Split> patient_split;
  std::array<double, 3> target_fractions{0.64, 0.16, 0.20};

  Split of_sample(std::int64_t sample_id) const;
};

// Greedy stratified assignment: patients are processed largest first (ties by
// ascending patient_id) and placed into the split that most reduces the total
// absolute deviation of per-(label x magnification) sample fractions from the
// targets. The seed parameter is reserved; the procedure is fully
// deterministic in its inputs.
SplitAssignment stratified_group_split(const DatasetTable& ds,
                                       std::array<double, 3> fractions,
                                       std::uint64_t seed);

// Per-split fractions of samples and of patients, in (train, val, test) order.
struct SplitFractions {
  std::array<double, 3> sample_fractions{};
  std::array<double, 3> patient_fractions{};
};
SplitFractions split_fractions(const DatasetTable& ds,
                               const SplitAssignment& split);

// One held-out-magnification experiment unit.
struct LomoFold {
  Magnification held_out = Magnification::M40;
  std::vector<std::int64_t> train_ids;
  std::vector<std::int64_t> val_ids;
  std::vector<std::int64_t> test_ids;
  // The three training magnifications mapped to {0,1,2} in ascending order.
  std::map<Magnification, int> domain_encoding;
  // Benign-to-malignant count ratio on this fold's training samples.
  double pos_weight = 1.0;
};

// One fold per magnification, in ascending magnification order.
std::vector<LomoFold> build_lomo_folds(const DatasetTable& ds,
                                       const SplitAssignment& split);

struct LeakageAudit {
  std::vector<std::string> patient_overlap_violations;
  std::vector<std::string> magnification_violations;
  // (role, label) -> count; roles in train/val/test order.
  std::array<std::array<std::size_t, 2>, 3> class_counts{};

  bool passed() const {
    return patient_overlap_violations.empty() &&
           magnification_violations.empty();
  }
  std::size_t total_samples() const;
};

// Violations are report content, not errors.
LeakageAudit audit_leakage(const LomoFold& fold, const DatasetTable& ds);

void export_split_manifest(const DatasetTable& ds, const SplitAssignment& split,
                           const std::filesystem::path& path);
void export_fold_manifest(const DatasetTable& ds, const SplitAssignment& split,
                          std::span<const LomoFold> folds,
                          const std::filesystem::path& path);

}  // namespace magshift
