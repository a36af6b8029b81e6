#include "magshift/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "magshift/evaluation.hpp"
#include "magshift/signature.hpp"
#include "magshift/textio.hpp"
#include "magshift/version.hpp"

namespace magshift {

namespace fs = std::filesystem;

namespace {

// Stream tags for per-task seed derivation.
constexpr std::uint64_t kTrainTask = 0x31;
constexpr std::uint64_t kGanTask = 0x32;
constexpr std::uint64_t kMixTask = 0x33;

std::size_t method_index(Method m) { return static_cast<std::size_t>(m); }

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

// Runs tasks on a bounded pool; each task captures its own failures.
void run_tasks(std::size_t jobs, const std::vector<std::function<void()>>& tasks) {
  if (tasks.empty()) return;
  if (jobs == 0) {
    jobs = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  }
  jobs = std::min(jobs, tasks.size());
  if (jobs == 1) {
    for (const auto& task : tasks) task();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= tasks.size()) break;
        tasks[i]();
      }
    });
  }
  for (auto& w : workers) w.join();
}

class FailureLog {
 public:
  void add(const std::string& scope, const std::string& message) {
    const std::lock_guard<std::mutex> lock(mu_);
    items_.emplace_back(scope, message);
  }
  bool empty() const { return items_.empty(); }
  std::vector<std::string> messages_for(const std::string& scope) const {
    std::vector<std::string> out;
    for (const auto& [s, m] : items_)
      if (s == scope) out.push_back(m);
    return out;
  }
  const std::vector<std::pair<std::string, std::string>>& items() const {
    return items_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<std::pair<std::string, std::string>> items_;
};

std::vector<double> labels_of(const DatasetTable& ds,
                              std::span<const std::int64_t> ids) {
  std::vector<double> y;
  y.reserve(ids.size());
  for (std::int64_t sid : ids)
    y.push_back(static_cast<double>(ds.sample_by_id(sid).label));
  return y;
}

void write_metric_rows(
    const fs::path& path, const std::string& method, const std::string& fold,
    const std::vector<std::pair<std::string, double>>& rows) {
  std::string text = "method,fold,metric,value\n";
  for (const auto& [name, value] : rows) {
    text += method + "," + fold + "," + name + "," + format_double(value) + "\n";
  }
  write_text(path, text);
}

std::vector<std::pair<std::string, double>> scalar_rows(
    const MetricsReport& r) {
  return {{"f1", r.f1},
          {"auc", r.auc},
          {"accuracy", r.accuracy},
          {"sensitivity", r.sensitivity},
          {"specificity", r.specificity},
          {"brier", r.brier}};
}

void write_history(const fs::path& path, const TrainedModel& model) {
  std::string text = "epoch,train_loss,val_loss\n";
  for (const EpochStats& e : model.history) {
    text += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," +
            format_double(e.val_loss) + "\n";
  }
  write_text(path, text);
}

void write_predictions(const fs::path& path,
                       std::span<const std::int64_t> ids,
                       std::span<const double> y_true,
                       std::span<const double> y_prob) {
  std::string text = "sample_id,y_true,y_prob\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    text += std::to_string(ids[i]) + "," + format_double(y_true[i]) + "," +
            format_double(y_prob[i]) + "\n";
  }
  write_text(path, text);
}

void write_roc(const fs::path& path, std::span<const RocPoint> points) {
  std::string text = "fpr,tpr\n";
  for (const RocPoint& pt : points)
    text += format_double(pt.fpr) + "," + format_double(pt.tpr) + "\n";
  write_text(path, text);
}

void write_calibration(const fs::path& path,
                       std::span<const CalibrationBin> bins) {
  std::string text = "bin_mean_prob,bin_frac_positive,count\n";
  for (const CalibrationBin& b : bins) {
    text += format_double(b.mean_prob) + "," + format_double(b.frac_positive) +
            "," + std::to_string(b.count) + "\n";
  }
  write_text(path, text);
}

struct Paths {
  fs::path out;
  fs::path method_dir(const char* stage, Method m) const {
    return out / stage / to_string(m);
  }
  fs::path fold_dir(const char* stage, Method m, Magnification mag) const {
    return method_dir(stage, m) / fold_dir_name(mag);
  }
};

void write_manifest(const Paths& paths, const ExperimentConfig& cfg,
                    const std::string& hash) {
  std::string text;
  text += "version " + std::string(kVersion) + "\n";
  text += "config_hash " + (hash.empty() ? "unknown" : hash) + "\n";
  text += "run_seed " + std::to_string(cfg.run.seed) + "\n";
  text += "data_seed " + std::to_string(cfg.data.synth.seed) + "\n";
  text += "split_seed " + std::to_string(cfg.split.seed) + "\n";
  text += "train_seeds baseline=" + std::to_string(cfg.train_baseline.seed) +
          " gan=" + std::to_string(cfg.train_gan.seed) +
          " grl=" + std::to_string(cfg.train_grl.seed) + "\n";
  text += "gan_seed " + std::to_string(cfg.gan.seed) + "\n";
  text += "methods";
  for (Method m : cfg.run.methods) text += " " + to_string(m);
  text += "\n";
  text += "jobs " + std::to_string(cfg.run.jobs) + "\n";
  text += "threshold " + format_double(cfg.run.threshold) + "\n";
  write_text(paths.out / "run_manifest.txt", text);
}

void stage_split(const Paths& paths, const ExperimentConfig& cfg,
                 const Workspace& ws) {
  {
    std::string text = "label,magnification,count\n";
    for (const auto& [key, count] : stratum_counts(ws.ds)) {
      text += std::to_string(key.label) + "," + to_string(key.magnification) +
              "," + std::to_string(count) + "\n";
    }
    write_text(paths.out / "data" / "stratum_counts.csv", text);
  }
  fs::create_directories(paths.out / "split");
  export_split_manifest(ws.ds, ws.split, paths.out / "split" / "split_manifest.csv");
  export_fold_manifest(ws.ds, ws.split, ws.folds,
                       paths.out / "split" / "fold_manifest.csv");
  std::string text;
  const SplitFractions fractions = split_fractions(ws.ds, ws.split);
  text += "target_fractions " + format_double(cfg.split.fractions[0]) + " " +
          format_double(cfg.split.fractions[1]) + " " +
          format_double(cfg.split.fractions[2]) + "\n";
  text += "sample_fractions " + format_double(fractions.sample_fractions[0]) +
          " " + format_double(fractions.sample_fractions[1]) + " " +
          format_double(fractions.sample_fractions[2]) + "\n";
  text += "patient_fractions " + format_double(fractions.patient_fractions[0]) +
          " " + format_double(fractions.patient_fractions[1]) + " " +
          format_double(fractions.patient_fractions[2]) + "\n";
  for (const LomoFold& fold : ws.folds) {
    const LeakageAudit audit = audit_leakage(fold, ws.ds);
    text += "fold " + to_string(fold.held_out) + " " +
            (audit.passed() ? "PASS" : "FAIL") +
            " pos_weight=" + format_double(fold.pos_weight) +
            " train=" + std::to_string(fold.train_ids.size()) +
            " val=" + std::to_string(fold.val_ids.size()) +
            " test=" + std::to_string(fold.test_ids.size()) + "\n";
    for (const std::string& v : audit.patient_overlap_violations)
      text += "  violation patient " + v + "\n";
    for (const std::string& v : audit.magnification_violations)
      text += "  violation magnification " + v + "\n";
  }
  write_text(paths.out / "split" / "audit.txt", text);
}

void train_one(const Paths& paths, const ExperimentConfig& cfg,
               const Workspace& ws, Method method, std::size_t fold_index) {
  const LomoFold& fold = ws.folds[fold_index];
  EncoderConfig ecfg = cfg.encoder_for(method);
  ecfg.seed = mix_seed(mix_seed(cfg.run.seed, kTrainTask, ecfg.seed),
                       method_index(method) * 8 + fold_index);
  const fs::path dir = paths.fold_dir(kStageTrain, method, fold.held_out);
  fs::create_directories(dir);

  TrainedModel model;
  if (method == Method::Grl) {
    model = train_grl(fold, ws.ds, ecfg);
  } else if (method == Method::Baseline) {
    model = train_baseline(fold, ws.ds, ecfg);
  } else {
    GanConfig benign_cfg = cfg.gan;
    benign_cfg.seed =
        mix_seed(cfg.run.seed, kGanTask, cfg.gan.seed + fold_index * 2);
    GanConfig malignant_cfg = cfg.gan;
    malignant_cfg.seed =
        mix_seed(cfg.run.seed, kGanTask, cfg.gan.seed + fold_index * 2 + 1);
    const GanPair benign = train_gan(fold, ws.ds, 0, benign_cfg);
    const GanPair malignant = train_gan(fold, ws.ds, 1, malignant_cfg);
    GanConfig mix_cfg = cfg.gan;
    mix_cfg.seed = mix_seed(cfg.run.seed, kMixTask, cfg.gan.seed + fold_index);
    const AugmentedSet augmented =
        mix_augmented(fold, ws.ds, benign, malignant, mix_cfg);
    {
      std::vector<Sample> synthetic(augmented.samples.begin() +
                                        static_cast<std::ptrdiff_t>(augmented.n_real),
                                    augmented.samples.end());
      export_samples(synthetic, ws.ds.p_in(), dir / "synthetic.csv");
    }
    const TrainView train = gather_view(augmented.samples, fold.domain_encoding);
    const TrainView val = gather_view(ws.ds, fold.val_ids, fold.domain_encoding);
    model = train_baseline_on(train, val, fold.pos_weight, ecfg);
  }
  save_model(dir / "checkpoint.bin", model);
  write_history(dir / "history.csv", model);
}

// Returns methods whose train artifacts are ready (no FAILED marker).
std::vector<Method> usable_methods(const Paths& paths,
                                   const ExperimentConfig& cfg) {
  std::vector<Method> ok;
  for (Method m : cfg.run.methods) {
    if (!fs::exists(paths.method_dir(kStageTrain, m) / "FAILED")) {
      ok.push_back(m);
    }
  }
  return ok;
}

void eval_one(const Paths& paths, const ExperimentConfig& cfg,
              const Workspace& ws, Method method) {
  std::vector<MetricsReport> reports;
  std::vector<ScoredSet> scored_sets;
  for (const LomoFold& fold : ws.folds) {
    const fs::path ckpt =
        paths.fold_dir(kStageTrain, method, fold.held_out) / "checkpoint.bin";
    const TrainedModel model = load_model(ckpt);
    ScoredSet scored;
    scored.method = to_string(method);
    scored.fold = to_string(fold.held_out);
    scored.y_true = labels_of(ws.ds, fold.test_ids);
    scored.y_prob = predict_proba(model, ws.ds, fold.test_ids);
    const MetricsReport report =
        evaluate(scored, cfg.run.threshold, cfg.run.calibration_bins);
    const fs::path dir = paths.fold_dir(kStageEval, method, fold.held_out);
    write_predictions(dir / "predictions.csv", fold.test_ids, scored.y_true,
                      scored.y_prob);
    auto rows = scalar_rows(report);
    rows.emplace_back("selected_epoch",
                      static_cast<double>(model.selected_epoch));
    write_metric_rows(dir / "metrics.csv", scored.method, scored.fold, rows);
    write_roc(dir / "roc.csv", report.roc);
    reports.push_back(report);
    scored_sets.push_back(std::move(scored));
  }
  const MetricsReport mean = aggregate_report(reports);
  write_metric_rows(paths.method_dir(kStageEval, method) / "aggregate.csv",
                    to_string(method), "average", scalar_rows(mean));
  const ScoredSet pooled = pool(scored_sets);
  write_calibration(paths.method_dir(kStageEval, method) / "calibration.csv",
                    calibration_curve(pooled, cfg.run.calibration_bins));
}

void signature_one(const Paths& paths, const ExperimentConfig& cfg,
                   const Workspace& ws, Method method,
                   std::vector<std::vector<std::size_t>>& supports,
                   std::mutex& supports_mu, std::size_t fold_index) {
  const LomoFold& fold = ws.folds[fold_index];
  const fs::path ckpt =
      paths.fold_dir(kStageTrain, method, fold.held_out) / "checkpoint.bin";
  const TrainedModel model = load_model(ckpt);

  const Matrix train_emb = embed(model, ws.ds, fold.train_ids);
  const Standardizer st = fit_standardizer(train_emb);
  const Matrix d_train = apply(st, train_emb);
  const Matrix d_val = apply(st, embed(model, ws.ds, fold.val_ids));
  const Matrix d_test = apply(st, embed(model, ws.ds, fold.test_ids));
  const std::vector<double> y_train = labels_of(ws.ds, fold.train_ids);
  const std::vector<double> y_val = labels_of(ws.ds, fold.val_ids);
  const std::vector<double> y_test = labels_of(ws.ds, fold.test_ids);

  std::vector<GridPoint> grid;
  if (cfg.signature.alpha_grid.empty()) {
    grid = default_grid(alpha_max(d_train, y_train), cfg.signature.gamma_grid);
  } else {
    for (double alpha : cfg.signature.alpha_grid)
      for (double gamma : cfg.signature.gamma_grid)
        grid.push_back(GridPoint{alpha, gamma});
  }
  const SelectionResult sel =
      select_regularization(d_train, y_train, d_val, y_val, grid);

  const fs::path dir = paths.fold_dir(kStageSignature, method, fold.held_out);
  {
    std::string text = "fold,dimension,coefficient\n";
    const std::string fold_name = to_string(fold.held_out);
    text += fold_name + ",intercept," + format_double(sel.model.intercept) + "\n";
    for (std::size_t j : sel.model.support) {
      text += fold_name + "," + std::to_string(j) + "," +
              format_double(sel.model.beta[j]) + "\n";
    }
    write_text(dir / "coefficients.csv", text);
  }
  {
    ScoredSet scored;
    scored.method = to_string(method);
    scored.fold = to_string(fold.held_out);
    scored.y_true = y_test;
    scored.y_prob = predict_proba(sel.model, d_test);
    const MetricsReport report =
        evaluate(scored, cfg.run.threshold, cfg.run.calibration_bins);
    auto rows = scalar_rows(report);
    rows.emplace_back("size", static_cast<double>(sel.model.support.size()));
    rows.emplace_back("alpha", sel.chosen.alpha);
    rows.emplace_back("gamma", sel.chosen.gamma);
    rows.emplace_back("val_auc", sel.val_auc);
    rows.emplace_back("converged", sel.model.converged ? 1.0 : 0.0);
    write_metric_rows(dir / "metrics.csv", scored.method, scored.fold, rows);
  }
  {
    const std::lock_guard<std::mutex> lock(supports_mu);
    supports[fold_index] = sel.model.support;
  }
}

void write_stability(const Paths& paths, Method method,
                     const std::vector<std::vector<std::size_t>>& supports,
                     std::size_t p, const Workspace& ws) {
  const StabilityReport report = stability_report(supports, p);
  std::string text = "method " + to_string(method) + "\n";
  text += "sizes";
  double mean_size = 0.0;
  for (std::size_t i = 0; i < report.support_sizes.size(); ++i) {
    text += " " + to_string(ws.folds[i].held_out) + "=" +
            std::to_string(report.support_sizes[i]);
    mean_size += static_cast<double>(report.support_sizes[i]);
  }
  mean_size /= static_cast<double>(report.support_sizes.size());
  text += "\nmean_size " + format_double(mean_size) + "\n";
  for (std::size_t j = 0; j < p; ++j) {
    if (report.selection_frequency[j] > 0.0) {
      text += "frequency " + std::to_string(j) + " " +
              format_double(report.selection_frequency[j]) + "\n";
    }
  }
  double offdiag = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < supports.size(); ++a) {
    for (std::size_t b = a + 1; b < supports.size(); ++b) {
      text += "jaccard " + to_string(ws.folds[a].held_out) + " " +
              to_string(ws.folds[b].held_out) + " " +
              format_double(report.jaccard[a][b]) + "\n";
      offdiag += report.jaccard[a][b];
      ++pairs;
    }
  }
  if (pairs > 0) {
    text += "mean_offdiag_jaccard " + format_double(offdiag / static_cast<double>(pairs)) +
            "\n";
  }
  write_text(paths.method_dir(kStageSignature, method) / "stability.txt", text);
}

}  // namespace

std::string fold_dir_name(Magnification m) {
  return "fold_" + to_string(m);
}

Workspace build_workspace(const ExperimentConfig& cfg) {
  Workspace ws;
  if (cfg.data.source == DataConfig::Source::Synthetic) {
    ws.ds = generate_synthetic(cfg.data.synth);
  } else {
    ws.ds = ingest_feature_table(cfg.data.table_path);
  }
  ws.split = stratified_group_split(ws.ds, cfg.split.fractions, cfg.split.seed);
  ws.folds = build_lomo_folds(ws.ds, ws.split);
  return ws;
}

int run_stage(const ExperimentConfig& cfg, const std::string& stage,
              const std::string& config_hash_hex) {
  const bool all = stage == kStageAll;
  if (!all && stage != kStageSplit && stage != kStageTrain &&
      stage != kStageEval && stage != kStageSignature) {
    throw ConfigError("unknown stage '" + stage + "'");
  }
  Paths paths{cfg.run.out_dir};
  fs::create_directories(paths.out);
  write_manifest(paths, cfg, config_hash_hex);

  Workspace ws;
  try {
    ws = build_workspace(cfg);
  } catch (const std::exception& e) {
    write_text(paths.out / "FAILED",
               std::string("stage ") + (all ? kStageSplit : stage.c_str()) +
                   ": " + e.what() + "\n");
    return 2;
  }

  FailureLog failures;

  if (all || stage == kStageSplit) {
    try {
      stage_split(paths, cfg, ws);
    } catch (const std::exception& e) {
      write_text(paths.out / "FAILED",
                 std::string("stage split: ") + e.what() + "\n");
      return 2;
    }
  }

  if (all || stage == kStageTrain) {
    std::vector<std::function<void()>> tasks;
    for (Method method : cfg.run.methods) {
      for (std::size_t f = 0; f < ws.folds.size(); ++f) {
        tasks.emplace_back([&, method, f] {
          try {
            train_one(paths, cfg, ws, method, f);
          } catch (const std::exception& e) {
            failures.add(to_string(method),
                         "stage train, fold " +
                             to_string(ws.folds[f].held_out) + ": " + e.what());
          }
        });
      }
    }
    run_tasks(cfg.run.jobs, tasks);
    for (Method method : cfg.run.methods) {
      const auto messages = failures.messages_for(to_string(method));
      if (!messages.empty()) {
        std::string text;
        for (const std::string& m : messages) text += m + "\n";
        write_text(paths.method_dir(kStageTrain, method) / "FAILED", text);
      }
    }
  }

  if (all || stage == kStageEval) {
    for (Method method : usable_methods(paths, cfg)) {
      try {
        eval_one(paths, cfg, ws, method);
      } catch (const std::exception& e) {
        failures.add(to_string(method), std::string("stage eval: ") + e.what());
        write_text(paths.method_dir(kStageEval, method) / "FAILED",
                   std::string("stage eval: ") + e.what() + "\n");
      }
    }
  }

  if (all || stage == kStageSignature) {
    for (Method method : usable_methods(paths, cfg)) {
      if (method == Method::Gan) continue;  // signatures target baseline and grl
      std::vector<std::vector<std::size_t>> supports(ws.folds.size());
      std::mutex supports_mu;
      std::atomic<bool> method_ok{true};
      std::vector<std::function<void()>> tasks;
      for (std::size_t f = 0; f < ws.folds.size(); ++f) {
        tasks.emplace_back([&, method, f] {
          try {
            signature_one(paths, cfg, ws, method, supports, supports_mu, f);
          } catch (const std::exception& e) {
            method_ok = false;
            failures.add(to_string(method),
                         "stage signature, fold " +
                             to_string(ws.folds[f].held_out) + ": " + e.what());
          }
        });
      }
      run_tasks(cfg.run.jobs, tasks);
      if (method_ok) {
        std::size_t p = 0;
        try {
          const fs::path ckpt =
              paths.fold_dir(kStageTrain, method, ws.folds[0].held_out) /
              "checkpoint.bin";
          p = load_model(ckpt).embedding_dim();
          write_stability(paths, method, supports, p, ws);
        } catch (const std::exception& e) {
          failures.add(to_string(method),
                       std::string("stage signature: ") + e.what());
          write_text(paths.method_dir(kStageSignature, method) / "FAILED",
                     std::string("stage signature: ") + e.what() + "\n");
        }
      } else {
        std::string text;
        for (const std::string& m : failures.messages_for(to_string(method)))
          text += m + "\n";
        write_text(paths.method_dir(kStageSignature, method) / "FAILED", text);
      }
    }
  }

  return failures.empty() ? 0 : 2;
}

}  // namespace magshift
