#include "magshift/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "magshift/rng.hpp"

namespace magshift {

namespace {

constexpr std::uint64_t kLabelStream = 0x61;
constexpr std::uint64_t kPatientStream = 0x62;
constexpr std::uint64_t kPatchStream = 0x63;

// Cycles per patch width, one band per magnification.
constexpr std::array<double, 4> kTextureFrequency{1.0, 2.0, 3.0, 4.0};

// Phase jitter (radians) around the magnification's canonical grating.
constexpr double kPhaseJitter = 0.4;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

int magnification_value(Magnification m) {
  switch (m) {
    case Magnification::M40: return 40;
    case Magnification::M100: return 100;
    case Magnification::M200: return 200;
    case Magnification::M400: return 400;
    case Magnification::Synth: return -1;
  }
  return -1;
}

std::string to_string(Magnification m) {
  if (m == Magnification::Synth) return "SYNTH";
  return std::to_string(magnification_value(m));
}

std::optional<Magnification> magnification_from_string(const std::string& s) {
  if (s == "40") return Magnification::M40;
  if (s == "100") return Magnification::M100;
  if (s == "200") return Magnification::M200;
  if (s == "400") return Magnification::M400;
  if (s == "SYNTH") return Magnification::Synth;
  return std::nullopt;
}

DatasetTable::DatasetTable(std::vector<Sample> samples)
    : samples_(std::move(samples)) {
  if (samples_.empty()) return;
  p_in_ = samples_[0].values.size();
  pos_by_id_.reserve(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const Sample& s = samples_[i];
    if (s.label != 0 && s.label != 1) {
      throw IntegrityError("sample " + std::to_string(s.sample_id) +
                           ": label must be 0 or 1, got " +
                           std::to_string(s.label));
    }
    if (s.magnification == Magnification::Synth) {
      throw IntegrityError("sample " + std::to_string(s.sample_id) +
                           ": SYNTH samples cannot enter a dataset table");
    }
    if (s.values.size() != p_in_) {
      throw IntegrityError("sample " + std::to_string(s.sample_id) +
                           ": value length " +
                           std::to_string(s.values.size()) +
                           " differs from table width " +
                           std::to_string(p_in_));
    }
    if (!pos_by_id_.emplace(s.sample_id, i).second) {
      throw IntegrityError("duplicate sample_id " +
                           std::to_string(s.sample_id));
    }
    by_patient_[s.patient_id].push_back(s.sample_id);
    by_stratum_[StratumKey{s.label, s.magnification}].push_back(s.sample_id);
  }
}

const Sample& DatasetTable::sample_by_id(std::int64_t sample_id) const {
  auto it = pos_by_id_.find(sample_id);
  if (it == pos_by_id_.end()) {
    throw IndexError("unknown sample_id " + std::to_string(sample_id));
  }
  return samples_[it->second];
}

std::span<const double> DatasetTable::values_of(std::int64_t sample_id) const {
  const Sample& s = sample_by_id(sample_id);
  if (observer_) observer_(sample_id);
  return s.values;
}

std::vector<std::int64_t> DatasetTable::all_ids() const {
  std::vector<std::int64_t> ids;
  ids.reserve(samples_.size());
  for (const Sample& s : samples_) ids.push_back(s.sample_id);
  return ids;
}

void validate(const SynthConfig& cfg) {
  if (cfg.n_patients < 1) throw ConfigError("synth.n_patients: must be >= 1");
  if (cfg.patches_per_patient_per_mag < 1) {
    throw ConfigError("synth.patches_per_patient_per_mag: must be >= 1");
  }
  if (!(cfg.malignant_patient_fraction > 0.0 &&
        cfg.malignant_patient_fraction < 1.0)) {
    throw ConfigError("synth.malignant_patient_fraction: must be in (0,1)");
  }
  if (cfg.patch_side < 4) throw ConfigError("synth.patch_side: must be >= 4");
  if (cfg.style_strength < 0.0) {
    throw ConfigError("synth.style_strength: must be >= 0");
  }
  if (cfg.class_signal_strength < 0.0) {
    throw ConfigError("synth.class_signal_strength: must be >= 0");
  }
  if (cfg.patient_effect_strength < 0.0) {
    throw ConfigError("synth.patient_effect_strength: must be >= 0");
  }
}

DatasetTable generate_synthetic(const SynthConfig& cfg) {
  validate(cfg);
  const std::size_t side = cfg.patch_side;
  const std::size_t p = side * side;

  // Patient labels: a seeded permutation takes the first k as malignant.
  std::vector<std::int64_t> patients(cfg.n_patients);
  for (std::size_t i = 0; i < cfg.n_patients; ++i)
    patients[i] = static_cast<std::int64_t>(i + 1);
  Rng label_rng(mix_seed(cfg.seed, kLabelStream));
  std::vector<std::int64_t> order = patients;
  label_rng.shuffle(order);
  const auto n_malignant = static_cast<std::size_t>(
      std::llround(static_cast<double>(cfg.n_patients) *
                   cfg.malignant_patient_fraction));
  std::map<std::int64_t, int> label_of;
  for (std::size_t i = 0; i < order.size(); ++i)
    label_of[order[i]] = i < n_malignant ? 1 : 0;

  // Class pattern: centered blob, positive for malignant, negative for
  // benign, so a linear readout can recover the label at any magnification.
  std::vector<double> blob(p);
  const double c0 = (static_cast<double>(side) - 1.0) / 2.0;
  const double width = static_cast<double>(side) / 4.0;
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) {
      const double dr = (static_cast<double>(r) - c0) / width;
      const double dc = (static_cast<double>(c) - c0) / width;
      blob[r * side + c] = std::exp(-0.5 * (dr * dr + dc * dc));
    }

  std::vector<Sample> samples;
  samples.reserve(cfg.n_patients * 4 * cfg.patches_per_patient_per_mag);
  std::int64_t next_id = 1;
  for (std::int64_t patient : patients) {
    // Per-patient appearance offset, shared by all of the patient's patches.
    Rng patient_rng(mix_seed(cfg.seed, kPatientStream,
                             static_cast<std::uint64_t>(patient)));
    std::vector<double> offset(p);
    for (double& v : offset) v = cfg.patient_effect_strength * patient_rng.normal();

    const int label = label_of[patient];
    const double class_sign = label == 1 ? 1.0 : -1.0;
    for (std::size_t mi = 0; mi < kMagnifications.size(); ++mi) {
      const double freq = kTextureFrequency[mi];
      for (std::size_t j = 0; j < cfg.patches_per_patient_per_mag; ++j) {
        Rng patch_rng(mix_seed(
            mix_seed(cfg.seed, kPatchStream,
                     static_cast<std::uint64_t>(patient)),
            mi, j));
        Sample s;
        s.sample_id = next_id++;
        s.patient_id = patient;
        s.label = label;
        s.magnification = kMagnifications[mi];
        s.values.resize(p);
        const double phase = kPhaseJitter * patch_rng.normal();
        for (std::size_t r = 0; r < side; ++r)
          for (std::size_t c = 0; c < side; ++c) {
            const double texture =
                std::cos(2.0 * std::numbers::pi * freq *
                             (static_cast<double>(c) + 0.5) /
                             static_cast<double>(side) +
                         phase);
            s.values[r * side + c] =
                cfg.class_signal_strength * class_sign * blob[r * side + c] +
                cfg.style_strength * texture + offset[r * side + c] +
                patch_rng.normal();
          }
        samples.push_back(std::move(s));
      }
    }
  }
  return DatasetTable(std::move(samples));
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t row) {
  double v = 0.0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("row " + std::to_string(row) + ": bad number '" + s + "'");
  }
  return v;
}

std::int64_t parse_int(const std::string& s, std::size_t row) {
  std::int64_t v = 0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("row " + std::to_string(row) + ": bad integer '" + s +
                     "'");
  }
  return v;
}

}  // namespace

DatasetTable ingest_feature_table(const std::filesystem::path& path,
                                  const TableSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty file " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_line(line);

  auto column_of = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw SchemaError("missing column '" + name + "' in " + path.string());
    }
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t id_col = column_of(schema.sample_id);
  const std::size_t patient_col = column_of(schema.patient_id);
  const std::size_t label_col = column_of(schema.label);
  const std::size_t mag_col = column_of(schema.magnification);

  std::vector<std::size_t> feature_cols;
  if (schema.features.empty()) {
    for (std::size_t i = mag_col + 1; i < header.size(); ++i)
      feature_cols.push_back(i);
    if (feature_cols.empty()) {
      throw SchemaError("no feature columns after '" + schema.magnification +
                        "' in " + path.string());
    }
  } else {
    for (const std::string& name : schema.features)
      feature_cols.push_back(column_of(name));
  }

  std::vector<Sample> samples;
  std::size_t row = 1;  // header is row 1
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != header.size()) {
      throw ParseError("row " + std::to_string(row) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    Sample s;
    s.sample_id = parse_int(fields[id_col], row);
    s.patient_id = parse_int(fields[patient_col], row);
    const std::int64_t label = parse_int(fields[label_col], row);
    if (label != 0 && label != 1) {
      throw ParseError("row " + std::to_string(row) + ": label must be 0 or 1");
    }
    s.label = static_cast<int>(label);
    const auto mag = magnification_from_string(fields[mag_col]);
    if (!mag || *mag == Magnification::Synth) {
      throw ParseError("row " + std::to_string(row) + ": bad magnification '" +
                       fields[mag_col] + "'");
    }
    s.magnification = *mag;
    s.values.reserve(feature_cols.size());
    for (std::size_t col : feature_cols)
      s.values.push_back(parse_double(fields[col], row));
    samples.push_back(std::move(s));
  }
  return DatasetTable(std::move(samples));
}

namespace {

void write_schema_rows(std::ostream& out, std::span<const Sample> samples,
                       std::size_t p_in) {
  out << "sample_id,patient_id,label,magnification";
  for (std::size_t j = 0; j < p_in; ++j) out << ",f" << j;
  out << "\n";
  for (const Sample& s : samples) {
    out << s.sample_id << "," << s.patient_id << "," << s.label << ","
        << to_string(s.magnification);
    for (double v : s.values) out << "," << format_double(v);
    out << "\n";
  }
}

}  // namespace

void export_feature_table(const DatasetTable& ds,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  std::vector<Sample> rows;
  rows.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) rows.push_back(ds.sample_at(i));
  write_schema_rows(out, rows, ds.p_in());
}

void export_samples(std::span<const Sample> samples, std::size_t p_in,
                    const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_schema_rows(out, samples, p_in);
}

std::map<StratumKey, std::size_t> stratum_counts(const DatasetTable& ds) {
  std::map<StratumKey, std::size_t> counts;
  for (const auto& [key, ids] : ds.index_by_stratum())
    counts[key] = ids.size();
  return counts;
}

}  // namespace magshift
