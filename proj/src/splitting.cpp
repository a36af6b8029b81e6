#include "magshift/splitting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace magshift {

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "TRAIN";
    case Split::Val: return "VAL";
    case Split::Test: return "TEST";
  }
  return "?";
}

Split SplitAssignment::of_sample(std::int64_t sample_id) const {
  auto it = sample_split.find(sample_id);
  if (it == sample_split.end()) {
    throw IndexError("sample " + std::to_string(sample_id) +
                     " has no split assignment");
  }
  return it->second;
}

SplitAssignment stratified_group_split(const DatasetTable& ds,
                                       std::array<double, 3> fractions,
                                       std::uint64_t /*seed*/) {
  double sum = 0.0;
  for (double f : fractions) {
    if (f <= 0.0) throw ConfigError("split fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  const auto& by_patient = ds.index_by_patient();
  if (by_patient.size() < 3) {
    throw InfeasibleError("need at least 3 patients for a 3-way split, have " +
                          std::to_string(by_patient.size()));
  }

  // Stratum totals over the whole table; fractions are measured against them.
  const auto& by_stratum = ds.index_by_stratum();
  std::vector<StratumKey> strata;
  std::map<StratumKey, std::size_t> stratum_index;
  std::vector<double> stratum_total;
  for (const auto& [key, ids] : by_stratum) {
    stratum_index[key] = strata.size();
    strata.push_back(key);
    stratum_total.push_back(static_cast<double>(ids.size()));
  }

  // Per-patient stratum profile.
  struct PatientInfo {
    std::int64_t id;
    std::size_t n_samples;
    std::vector<std::size_t> counts;  // per stratum
  };
  std::vector<PatientInfo> patients;
  patients.reserve(by_patient.size());
  for (const auto& [pid, sample_ids] : by_patient) {
    PatientInfo info{pid, sample_ids.size(),
                     std::vector<std::size_t>(strata.size(), 0)};
    for (std::int64_t sid : sample_ids) {
      const Sample& s = ds.sample_by_id(sid);
      info.counts[stratum_index.at(StratumKey{s.label, s.magnification})]++;
    }
    patients.push_back(std::move(info));
  }
  std::sort(patients.begin(), patients.end(),
            [](const PatientInfo& a, const PatientInfo& b) {
              if (a.n_samples != b.n_samples) return a.n_samples > b.n_samples;
              return a.id < b.id;
            });

  // assigned[s][g]: samples of stratum g placed into split s so far.
  std::array<std::vector<double>, 3> assigned;
  for (auto& v : assigned) v.assign(strata.size(), 0.0);
  std::array<std::vector<std::int64_t>, 3> members;

  auto deviation = [&](int candidate, const PatientInfo& p) {
    double d = 0.0;
    for (std::size_t g = 0; g < strata.size(); ++g) {
      for (int s = 0; s < 3; ++s) {
        double cnt = assigned[s][g];
        if (s == candidate) cnt += static_cast<double>(p.counts[g]);
        d += std::abs(cnt / stratum_total[g] - fractions[s]);
      }
    }
    return d;
  };

  std::map<std::int64_t, Split> patient_split;
  for (const PatientInfo& p : patients) {
    int best = 0;
    double best_dev = deviation(0, p);
    for (int s = 1; s < 3; ++s) {
      const double dev = deviation(s, p);
      if (dev < best_dev) {
        best = s;
        best_dev = dev;
      }
    }
    for (std::size_t g = 0; g < strata.size(); ++g)
      assigned[best][g] += static_cast<double>(p.counts[g]);
    members[best].push_back(p.id);
    patient_split[p.id] = static_cast<Split>(best);
  }

  // Guard: with at least 3 patients every split must end up inhabited. Move
  // the smallest patient out of the most populated split if one is empty.
  for (int s = 0; s < 3; ++s) {
    if (!members[s].empty()) continue;
    int donor = 0;
    for (int t = 1; t < 3; ++t)
      if (members[t].size() > members[donor].size()) donor = t;
    std::int64_t smallest = members[donor][0];
    std::size_t smallest_n = by_patient.at(smallest).size();
    for (std::int64_t pid : members[donor]) {
      const std::size_t n = by_patient.at(pid).size();
      if (n < smallest_n || (n == smallest_n && pid < smallest)) {
        smallest = pid;
        smallest_n = n;
      }
    }
    std::erase(members[donor], smallest);
    members[s].push_back(smallest);
    patient_split[smallest] = static_cast<Split>(s);
  }

  SplitAssignment out;
  out.target_fractions = fractions;
  out.patient_split = std::move(patient_split);
  for (const auto& [pid, split] : out.patient_split)
    for (std::int64_t sid : by_patient.at(pid)) out.sample_split[sid] = split;
  return out;
}

SplitFractions split_fractions(const DatasetTable& ds,
                               const SplitAssignment& split) {
  SplitFractions out;
  std::array<std::size_t, 3> samples{};
  std::array<std::size_t, 3> patients{};
  for (const auto& [sid, s] : split.sample_split)
    samples[static_cast<int>(s)]++;
  for (const auto& [pid, s] : split.patient_split)
    patients[static_cast<int>(s)]++;
  const double n = static_cast<double>(ds.size());
  const double np = static_cast<double>(ds.index_by_patient().size());
  for (int i = 0; i < 3; ++i) {
    out.sample_fractions[i] = n > 0 ? static_cast<double>(samples[i]) / n : 0.0;
    out.patient_fractions[i] =
        np > 0 ? static_cast<double>(patients[i]) / np : 0.0;
  }
  return out;
}

std::vector<LomoFold> build_lomo_folds(const DatasetTable& ds,
                                       const SplitAssignment& split) {
  std::vector<LomoFold> folds;
  for (Magnification held_out : kMagnifications) {
    LomoFold fold;
    fold.held_out = held_out;
    int code = 0;
    for (Magnification m : kMagnifications) {
      if (m != held_out) fold.domain_encoding[m] = code++;
    }
    std::size_t train_benign = 0, train_malignant = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const Sample& s = ds.sample_at(i);
      const Split role = split.of_sample(s.sample_id);
      if (role == Split::Test) {
        if (s.magnification == held_out) fold.test_ids.push_back(s.sample_id);
      } else if (s.magnification != held_out) {
        if (role == Split::Train) {
          fold.train_ids.push_back(s.sample_id);
          (s.label == 0 ? train_benign : train_malignant)++;
        } else {
          fold.val_ids.push_back(s.sample_id);
        }
      }
    }
    if (fold.train_ids.empty() || fold.test_ids.empty()) {
      throw DataError("fold " + to_string(held_out) +
                      ": empty train or test partition");
    }
    if (train_malignant == 0 || train_benign == 0) {
      throw DataError("fold " + to_string(held_out) +
                      ": training split lacks one class");
    }
    fold.pos_weight =
        static_cast<double>(train_benign) / static_cast<double>(train_malignant);
    folds.push_back(std::move(fold));
  }
  return folds;
}

std::size_t LeakageAudit::total_samples() const {
  std::size_t n = 0;
  for (const auto& role : class_counts)
    for (std::size_t c : role) n += c;
  return n;
}

LeakageAudit audit_leakage(const LomoFold& fold, const DatasetTable& ds) {
  LeakageAudit audit;
  const std::array<const std::vector<std::int64_t>*, 3> roles{
      &fold.train_ids, &fold.val_ids, &fold.test_ids};
  const std::array<std::string, 3> role_names{"train", "val", "test"};

  std::array<std::set<std::int64_t>, 3> patients;
  for (int r = 0; r < 3; ++r) {
    for (std::int64_t sid : *roles[r]) {
      const Sample& s = ds.sample_by_id(sid);
      patients[r].insert(s.patient_id);
      audit.class_counts[r][s.label]++;
      const bool held = s.magnification == fold.held_out;
      if (r == 2 ? !held : held) {
        audit.magnification_violations.push_back(
            role_names[r] + " sample " + std::to_string(sid) +
            " has magnification " + to_string(s.magnification) +
            " (held out: " + to_string(fold.held_out) + ")");
      }
    }
  }
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b)
      for (std::int64_t pid : patients[a])
        if (patients[b].count(pid)) {
          audit.patient_overlap_violations.push_back(
              "patient " + std::to_string(pid) + " appears in " +
              role_names[a] + " and " + role_names[b]);
        }
  return audit;
}

void export_split_manifest(const DatasetTable& ds, const SplitAssignment& split,
                           const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sample_id,split\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::int64_t sid = ds.sample_at(i).sample_id;
    out << sid << "," << to_string(split.of_sample(sid)) << "\n";
  }
}

void export_fold_manifest(const DatasetTable& ds, const SplitAssignment& split,
                          std::span<const LomoFold> folds,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sample_id,split,fold,role\n";
  for (const LomoFold& fold : folds) {
    std::unordered_map<std::int64_t, std::string> role;
    for (std::int64_t sid : fold.train_ids) role[sid] = "TRAIN";
    for (std::int64_t sid : fold.val_ids) role[sid] = "VAL";
    for (std::int64_t sid : fold.test_ids) role[sid] = "TEST";
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const std::int64_t sid = ds.sample_at(i).sample_id;
      auto it = role.find(sid);
      out << sid << "," << to_string(split.of_sample(sid)) << ","
          << to_string(fold.held_out) << ","
          << (it == role.end() ? std::string("EXCLUDED") : it->second) << "\n";
    }
  }
}

}  // namespace magshift
