#include "magshift/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace magshift {

std::string to_string(Method m) {
  switch (m) {
    case Method::Baseline: return "baseline";
    case Method::Gan: return "gan";
    case Method::Grl: return "grl";
  }
  return "?";
}

const EncoderConfig& ExperimentConfig::encoder_for(Method m) const {
  switch (m) {
    case Method::Baseline: return train_baseline;
    case Method::Gan: return train_gan;
    case Method::Grl: return train_grl;
  }
  return train_baseline;
}

namespace {

struct RawConfig {
  // section -> key -> value, last assignment wins
  std::map<std::string, std::map<std::string, std::string>> sections;
};

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

RawConfig read_raw(const std::filesystem::path& path,
                   std::vector<std::string>& errors) {
  RawConfig raw;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line.substr(0, line.find('#')));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') {
        errors.push_back("line " + std::to_string(line_no) +
                         ": unterminated section header");
        continue;
      }
      section = trim(text.substr(1, text.size() - 2));
      raw.sections[section];
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(line_no) +
                       ": expected key = value");
      continue;
    }
    raw.sections[section][trim(text.substr(0, eq))] = trim(text.substr(eq + 1));
  }
  return raw;
}

// Typed getters collecting errors under "section.key" names.
class Reader {
 public:
  Reader(const RawConfig& raw, std::vector<std::string>& errors)
      : raw_(raw), errors_(errors) {}

  bool has(const std::string& section, const std::string& key) const {
    auto sec = raw_.sections.find(section);
    return sec != raw_.sections.end() && sec->second.count(key) != 0;
  }

  std::string str(const std::string& section, const std::string& key,
                  std::string fallback) const {
    auto sec = raw_.sections.find(section);
    if (sec == raw_.sections.end()) return fallback;
    auto it = sec->second.find(key);
    return it == sec->second.end() ? fallback : it->second;
  }

  double number(const std::string& section, const std::string& key,
                double fallback) {
    if (!has(section, key)) return fallback;
    const std::string text = str(section, key, "");
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      fail(section, key, "not a number: '" + text + "'");
      return fallback;
    }
    return v;
  }

  std::uint64_t uinteger(const std::string& section, const std::string& key,
                         std::uint64_t fallback) {
    if (!has(section, key)) return fallback;
    const std::string text = str(section, key, "");
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      fail(section, key, "not a non-negative integer: '" + text + "'");
      return fallback;
    }
    return v;
  }

  bool boolean(const std::string& section, const std::string& key,
               bool fallback) {
    if (!has(section, key)) return fallback;
    const std::string text = str(section, key, "");
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    fail(section, key, "not a boolean: '" + text + "'");
    return fallback;
  }

  std::vector<std::string> tokens(const std::string& section,
                                  const std::string& key) const {
    std::vector<std::string> out;
    std::istringstream ss(str(section, key, ""));
    std::string token;
    while (ss >> token) out.push_back(token);
    return out;
  }

  std::vector<double> numbers(const std::string& section,
                              const std::string& key,
                              std::vector<double> fallback) {
    if (!has(section, key)) return fallback;
    std::vector<double> out;
    for (const std::string& token : tokens(section, key)) {
      double v = 0.0;
      auto [ptr, ec] =
          std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec != std::errc() || ptr != token.data() + token.size()) {
        fail(section, key, "not a number: '" + token + "'");
        return fallback;
      }
      out.push_back(v);
    }
    return out;
  }

  void fail(const std::string& section, const std::string& key,
            const std::string& message) {
    errors_.push_back(section + "." + key + ": " + message);
  }

  const RawConfig& raw() const { return raw_; }

 private:
  const RawConfig& raw_;
  std::vector<std::string>& errors_;
};

EncoderConfig read_encoder(Reader& reader, const std::string& base,
                           const std::string& override_section,
                           std::vector<std::string>& errors) {
  EncoderConfig cfg;
  auto pick = [&](const std::string& key) {
    return reader.has(override_section, key) ? override_section : base;
  };
  {
    const std::string sec = pick("hidden");
    std::vector<double> hidden =
        reader.numbers(sec, "hidden", {64.0, 32.0});
    cfg.hidden_widths.clear();
    for (double w : hidden) {
      if (w < 1.0 || w != std::floor(w)) {
        errors.push_back(sec + ".hidden: widths must be positive integers");
        cfg.hidden_widths = {64, 32};
        break;
      }
      cfg.hidden_widths.push_back(static_cast<std::size_t>(w));
    }
  }
  cfg.embedding_dim = static_cast<std::size_t>(
      reader.uinteger(pick("embedding_dim"), "embedding_dim", 32));
  cfg.seed = reader.uinteger(pick("seed"), "seed", 3);
  cfg.lr = reader.number(pick("lr"), "lr", 0.05);
  cfg.weight_decay = reader.number(pick("weight_decay"), "weight_decay", 1e-4);
  cfg.batch_size = static_cast<std::size_t>(
      reader.uinteger(pick("batch_size"), "batch_size", 64));
  cfg.max_epochs = static_cast<std::size_t>(
      reader.uinteger(pick("max_epochs"), "max_epochs", 150));
  cfg.lambda = reader.number(pick("lambda"), "lambda", 1.0);
  cfg.lambda_warmup_epochs = static_cast<std::size_t>(reader.uinteger(
      pick("lambda_warmup_epochs"), "lambda_warmup_epochs", 0));
  cfg.patience =
      static_cast<std::size_t>(reader.uinteger(pick("patience"), "patience", 20));
  try {
    validate(cfg);
  } catch (const ConfigError& e) {
    errors.push_back(e.what());
  }
  return cfg;
}

ExperimentConfig read_config(const std::filesystem::path& path,
                             std::vector<std::string>& errors) {
  const RawConfig raw = read_raw(path, errors);
  Reader reader(raw, errors);
  ExperimentConfig cfg;

  const std::string source = reader.str("data", "source", "synthetic");
  if (source == "synthetic") {
    cfg.data.source = DataConfig::Source::Synthetic;
  } else if (source == "table") {
    cfg.data.source = DataConfig::Source::Table;
    cfg.data.table_path = reader.str("data", "path", "");
    if (cfg.data.table_path.empty()) {
      errors.push_back("data.path: required when data.source = table");
    }
  } else {
    errors.push_back("data.source: must be 'synthetic' or 'table'");
  }
  cfg.data.synth.n_patients = static_cast<std::size_t>(
      reader.uinteger("data", "n_patients", cfg.data.synth.n_patients));
  cfg.data.synth.patches_per_patient_per_mag = static_cast<std::size_t>(
      reader.uinteger("data", "patches_per_patient_per_mag",
                      cfg.data.synth.patches_per_patient_per_mag));
  cfg.data.synth.malignant_patient_fraction =
      reader.number("data", "malignant_patient_fraction",
                    cfg.data.synth.malignant_patient_fraction);
  cfg.data.synth.patch_side = static_cast<std::size_t>(
      reader.uinteger("data", "patch_side", cfg.data.synth.patch_side));
  cfg.data.synth.style_strength =
      reader.number("data", "style_strength", cfg.data.synth.style_strength);
  cfg.data.synth.class_signal_strength = reader.number(
      "data", "class_signal_strength", cfg.data.synth.class_signal_strength);
  cfg.data.synth.patient_effect_strength =
      reader.number("data", "patient_effect_strength",
                    cfg.data.synth.patient_effect_strength);
  cfg.data.synth.seed = reader.uinteger("data", "seed", cfg.data.synth.seed);
  if (cfg.data.source == DataConfig::Source::Synthetic) {
    try {
      validate(cfg.data.synth);
    } catch (const ConfigError& e) {
      errors.push_back(e.what());
    }
  }

  {
    std::vector<double> fractions =
        reader.numbers("split", "fractions", {0.64, 0.16, 0.20});
    if (fractions.size() != 3) {
      errors.push_back("split.fractions: expected three values");
    } else {
      double sum = 0.0;
      bool positive = true;
      for (double f : fractions) {
        sum += f;
        positive = positive && f > 0.0;
      }
      if (!positive) {
        errors.push_back("split.fractions: every fraction must be positive");
      } else if (std::abs(sum - 1.0) > 1e-9) {
        errors.push_back("split.fractions: must sum to 1");
      } else {
        cfg.split.fractions = {fractions[0], fractions[1], fractions[2]};
      }
    }
    cfg.split.seed = reader.uinteger("split", "seed", cfg.split.seed);
  }

  cfg.train_baseline = read_encoder(reader, "train", "train.baseline", errors);
  cfg.train_gan = read_encoder(reader, "train", "train.gan", errors);
  cfg.train_grl = read_encoder(reader, "train", "train.grl", errors);

  cfg.gan.latent_dim = static_cast<std::size_t>(
      reader.uinteger("gan", "latent_dim", cfg.gan.latent_dim));
  {
    std::vector<double> widths = reader.numbers("gan", "gen_hidden", {32.0});
    cfg.gan.gen_hidden.clear();
    for (double w : widths)
      cfg.gan.gen_hidden.push_back(static_cast<std::size_t>(w));
    widths = reader.numbers("gan", "disc_hidden", {32.0});
    cfg.gan.disc_hidden.clear();
    for (double w : widths)
      cfg.gan.disc_hidden.push_back(static_cast<std::size_t>(w));
  }
  cfg.gan.steps =
      static_cast<std::size_t>(reader.uinteger("gan", "steps", cfg.gan.steps));
  cfg.gan.batch_size = static_cast<std::size_t>(
      reader.uinteger("gan", "batch_size", cfg.gan.batch_size));
  cfg.gan.lr = reader.number("gan", "lr", cfg.gan.lr);
  cfg.gan.seed = reader.uinteger("gan", "seed", cfg.gan.seed);
  cfg.gan.synth_fraction_cap = reader.number("gan", "synth_fraction_cap",
                                             cfg.gan.synth_fraction_cap);
  cfg.gan.saturating_generator_loss = reader.boolean(
      "gan", "saturating_generator_loss", cfg.gan.saturating_generator_loss);
  try {
    validate(cfg.gan);
  } catch (const ConfigError& e) {
    errors.push_back(e.what());
  }

  cfg.signature.alpha_grid = reader.numbers("signature", "alpha_grid", {});
  cfg.signature.gamma_grid =
      reader.numbers("signature", "gamma_grid", cfg.signature.gamma_grid);
  for (double a : cfg.signature.alpha_grid)
    if (a < 0.0) errors.push_back("signature.alpha_grid: must be >= 0");
  for (double g : cfg.signature.gamma_grid)
    if (g < 0.0) errors.push_back("signature.gamma_grid: must be >= 0");
  if (cfg.signature.gamma_grid.empty()) {
    errors.push_back("signature.gamma_grid: must not be empty");
  }

  {
    std::vector<std::string> methods = reader.tokens("run", "methods");
    if (reader.has("run", "methods")) {
      cfg.run.methods.clear();
      for (const std::string& name : methods) {
        if (name == "baseline") {
          cfg.run.methods.push_back(Method::Baseline);
        } else if (name == "gan") {
          cfg.run.methods.push_back(Method::Gan);
        } else if (name == "grl") {
          cfg.run.methods.push_back(Method::Grl);
        } else {
          errors.push_back("run.methods: unknown method '" + name + "'");
        }
      }
    }
    if (cfg.run.methods.empty()) {
      errors.push_back("run.methods: must not be empty");
    }
    cfg.run.out_dir = reader.str("run", "out_dir", cfg.run.out_dir.string());
    cfg.run.seed = reader.uinteger("run", "seed", cfg.run.seed);
    cfg.run.jobs = static_cast<std::size_t>(
        reader.uinteger("run", "jobs", cfg.run.jobs));
    cfg.run.threshold = reader.number("run", "threshold", cfg.run.threshold);
    if (!(cfg.run.threshold >= 0.0 && cfg.run.threshold <= 1.0)) {
      errors.push_back("run.threshold: must lie in [0,1]");
    }
    cfg.run.calibration_bins = static_cast<std::size_t>(
        reader.uinteger("run", "calibration_bins", cfg.run.calibration_bins));
    if (cfg.run.calibration_bins < 1) {
      errors.push_back("run.calibration_bins: must be >= 1");
    }
  }

  // Unknown sections usually mean a typo.
  static const std::set<std::string> known{
      "",     "data",        "split",          "train",    "train.baseline",
      "train.gan", "train.grl", "gan", "signature", "run"};
  for (const auto& [name, entries] : raw.sections) {
    if (!known.count(name)) {
      errors.push_back("unknown section [" + name + "]");
    }
  }
  return cfg;
}

}  // namespace

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::vector<std::string> errors;
  ExperimentConfig cfg = read_config(path, errors);
  if (!errors.empty()) {
    std::string message = "invalid config " + path.string() + ":";
    for (const std::string& e : errors) message += "\n  " + e;
    throw ConfigError(message);
  }
  return cfg;
}

std::vector<std::string> validate_config(const std::filesystem::path& path) {
  std::vector<std::string> errors;
  read_config(path, errors);
  return errors;
}

std::string config_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char byte = 0;
  while (in.get(byte)) {
    hash ^= static_cast<std::uint8_t>(byte);
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace magshift
