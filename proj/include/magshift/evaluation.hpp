#pragma once

#include <span>
#include <string>
#include <vector>

namespace magshift {

// Ground-truth labels with predicted positive-class probabilities.
struct ScoredSet {
  std::vector<double> y_true;  // 0 or 1
  std::vector<double> y_prob;  // in [0,1]
  std::string fold;
  std::string method;
};

void validate(const ScoredSet& s);

struct ConfusionMetrics {
  double accuracy;
  double sensitivity;  // recall on the positive (malignant) class
  double specificity;
  double f1;
};

// Predictions are prob >= threshold. Throws UndefinedMetricError naming
// sensitivity or specificity when the corresponding class is absent.
ConfusionMetrics confusion_metrics(const ScoredSet& s, double threshold = 0.5);

// Tie-aware Mann-Whitney statistic: P(score_pos > score_neg) + P(tie)/2,
// equal to the trapezoidal area under the tie-aware ROC staircase.
double auc(const ScoredSet& s);

// Mean squared difference between probability and outcome.
double brier(const ScoredSet& s);

struct RocPoint {
  double fpr;
  double tpr;
};

// Staircase from (0,0) to (1,1), one step per distinct score.
std::vector<RocPoint> roc_points(const ScoredSet& s);

struct CalibrationBin {
  double mean_prob;
  double frac_positive;
  std::size_t count;
};

// Equal-width bins on [0,1] (last bin right-closed); empty bins are omitted.
std::vector<CalibrationBin> calibration_curve(const ScoredSet& s,
                                              std::size_t n_bins = 10);

struct MetricsReport {
  std::string method;
  std::string fold;
  double f1 = 0.0;
  double auc = 0.0;
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double brier = 0.0;
  std::vector<RocPoint> roc;
  std::vector<CalibrationBin> calibration;
};

MetricsReport evaluate(const ScoredSet& s, double threshold = 0.5,
                       std::size_t n_bins = 10);

// Unweighted mean of each scalar metric; curve fields are left empty.
MetricsReport aggregate_report(std::span<const MetricsReport> per_fold);

// Pooled labels/probabilities across sets (calibration over folds).
ScoredSet pool(std::span<const ScoredSet> sets);

double jaccard_index(std::span<const std::size_t> a,
                     std::span<const std::size_t> b);

}  // namespace magshift
