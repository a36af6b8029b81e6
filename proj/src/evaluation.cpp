#include "magshift/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "magshift/errors.hpp"

namespace magshift {

void validate(const ScoredSet& s) {
  if (s.y_true.size() != s.y_prob.size()) {
    throw ShapeError("scored set: " + std::to_string(s.y_true.size()) +
                     " labels vs " + std::to_string(s.y_prob.size()) +
                     " probabilities");
  }
  for (double y : s.y_true) {
    if (y != 0.0 && y != 1.0) {
      throw DataError("scored set: labels must be 0 or 1");
    }
  }
  for (double p : s.y_prob) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw DataError("scored set: probabilities must lie in [0,1]");
    }
  }
}

ConfusionMetrics confusion_metrics(const ScoredSet& s, double threshold) {
  validate(s);
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < s.y_true.size(); ++i) {
    const bool predicted = s.y_prob[i] >= threshold;
    if (s.y_true[i] == 1.0) {
      (predicted ? tp : fn)++;
    } else {
      (predicted ? fp : tn)++;
    }
  }
  if (tp + fn == 0) {
    throw UndefinedMetricError("sensitivity undefined: no positive samples");
  }
  if (tn + fp == 0) {
    throw UndefinedMetricError("specificity undefined: no negative samples");
  }
  ConfusionMetrics m{};
  m.accuracy = (tp + tn) / (tp + tn + fp + fn);
  m.sensitivity = tp / (tp + fn);
  m.specificity = tn / (tn + fp);
  m.f1 = (2.0 * tp + fp + fn) == 0.0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
  return m;
}

double auc(const ScoredSet& s) {
  validate(s);
  const std::size_t n = s.y_true.size();
  std::size_t n_pos = 0;
  for (double y : s.y_true) n_pos += y == 1.0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw UndefinedMetricError("auc undefined: needs both classes");
  }
  // Midrank formulation.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return s.y_prob[a] < s.y_prob[b];
  });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && s.y_prob[idx[j]] == s.y_prob[idx[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t t = i; t < j; ++t)
      if (s.y_true[idx[t]] == 1.0) rank_sum_pos += midrank;
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

double brier(const ScoredSet& s) {
  validate(s);
  if (s.y_true.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < s.y_true.size(); ++i) {
    const double d = s.y_prob[i] - s.y_true[i];
    acc += d * d;
  }
  return acc / static_cast<double>(s.y_true.size());
}

std::vector<RocPoint> roc_points(const ScoredSet& s) {
  validate(s);
  const std::size_t n = s.y_true.size();
  std::size_t n_pos = 0;
  for (double y : s.y_true) n_pos += y == 1.0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw UndefinedMetricError("roc undefined: needs both classes");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return s.y_prob[a] > s.y_prob[b];
  });
  std::vector<RocPoint> points;
  points.push_back(RocPoint{0.0, 0.0});
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && s.y_prob[idx[j]] == s.y_prob[idx[i]]) ++j;
    for (std::size_t t = i; t < j; ++t) {
      if (s.y_true[idx[t]] == 1.0) {
        ++tp;
      } else {
        ++fp;
      }
    }
    points.push_back(
        RocPoint{static_cast<double>(fp) / static_cast<double>(n_neg),
                 static_cast<double>(tp) / static_cast<double>(n_pos)});
    i = j;
  }
  return points;
}

std::vector<CalibrationBin> calibration_curve(const ScoredSet& s,
                                              std::size_t n_bins) {
  validate(s);
  if (n_bins < 1) throw ConfigError("calibration: n_bins must be >= 1");
  std::vector<double> prob_sum(n_bins, 0.0), pos_sum(n_bins, 0.0);
  std::vector<std::size_t> counts(n_bins, 0);
  for (std::size_t i = 0; i < s.y_prob.size(); ++i) {
    auto bin = static_cast<std::size_t>(s.y_prob[i] *
                                        static_cast<double>(n_bins));
    if (bin == n_bins) bin = n_bins - 1;  // p == 1 falls in the last bin
    prob_sum[bin] += s.y_prob[i];
    pos_sum[bin] += s.y_true[i];
    counts[bin]++;
  }
  std::vector<CalibrationBin> bins;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (counts[b] == 0) continue;
    const double c = static_cast<double>(counts[b]);
    bins.push_back(CalibrationBin{prob_sum[b] / c, pos_sum[b] / c, counts[b]});
  }
  return bins;
}

MetricsReport evaluate(const ScoredSet& s, double threshold,
                       std::size_t n_bins) {
  MetricsReport report;
  report.method = s.method;
  report.fold = s.fold;
  const ConfusionMetrics cm = confusion_metrics(s, threshold);
  report.accuracy = cm.accuracy;
  report.sensitivity = cm.sensitivity;
  report.specificity = cm.specificity;
  report.f1 = cm.f1;
  report.auc = auc(s);
  report.brier = brier(s);
  report.roc = roc_points(s);
  report.calibration = calibration_curve(s, n_bins);
  return report;
}

MetricsReport aggregate_report(std::span<const MetricsReport> per_fold) {
  if (per_fold.empty()) {
    throw DataError("aggregate_report: needs at least one report");
  }
  MetricsReport mean;
  mean.method = per_fold.front().method;
  mean.fold = "average";
  const double m = static_cast<double>(per_fold.size());
  for (const MetricsReport& r : per_fold) {
    mean.f1 += r.f1;
    mean.auc += r.auc;
    mean.accuracy += r.accuracy;
    mean.sensitivity += r.sensitivity;
    mean.specificity += r.specificity;
    mean.brier += r.brier;
  }
  mean.f1 /= m;
  mean.auc /= m;
  mean.accuracy /= m;
  mean.sensitivity /= m;
  mean.specificity /= m;
  mean.brier /= m;
  return mean;
}

ScoredSet pool(std::span<const ScoredSet> sets) {
  ScoredSet pooled;
  pooled.fold = "pooled";
  for (const ScoredSet& s : sets) {
    if (pooled.method.empty()) pooled.method = s.method;
    pooled.y_true.insert(pooled.y_true.end(), s.y_true.begin(), s.y_true.end());
    pooled.y_prob.insert(pooled.y_prob.end(), s.y_prob.begin(), s.y_prob.end());
  }
  return pooled;
}

double jaccard_index(std::span<const std::size_t> a,
                     std::span<const std::size_t> b) {
  const std::set<std::size_t> sa(a.begin(), a.end());
  const std::set<std::size_t> sb(b.begin(), b.end());
  std::size_t inter = 0;
  for (std::size_t v : sa) inter += sb.count(v);
  const std::size_t uni = sa.size() + sb.size() - inter;
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace magshift
