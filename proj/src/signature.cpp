#include "magshift/signature.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "magshift/errors.hpp"
#include "magshift/evaluation.hpp"

namespace magshift {

namespace {

constexpr double kTolerance = 1e-7;
constexpr std::size_t kMaxSweeps = 10000;

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double soft_threshold(double u, double t) {
  if (u > t) return u - t;
  if (u < -t) return u + t;
  return 0.0;
}

double bernoulli_nll(double y, double s) {
  // -y log(sigma(s)) - (1-y) log(1-sigma(s)) in softplus form.
  const double sp_pos = s > 0.0 ? s + std::log1p(std::exp(-s))
                                : std::log1p(std::exp(s));
  return sp_pos - y * s;
}

}  // namespace

Standardizer fit_standardizer(const Matrix& train_embeddings) {
  const std::size_t n = train_embeddings.rows, p = train_embeddings.cols;
  if (n < 2) {
    throw DataError("standardizer needs >= 2 rows, got " + std::to_string(n));
  }
  Standardizer st;
  st.mean.assign(p, 0.0);
  st.std_dev.assign(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) st.mean[j] += train_embeddings.at(i, j);
  for (double& m : st.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      const double d = train_embeddings.at(i, j) - st.mean[j];
      st.std_dev[j] += d * d;
    }
  for (double& s : st.std_dev) {
    s = std::sqrt(s / static_cast<double>(n));  // population std
    if (s == 0.0) s = 1.0;
  }
  return st;
}

Matrix apply(const Standardizer& st, const Matrix& embeddings) {
  if (embeddings.cols != st.mean.size()) {
    throw ShapeError("standardizer width " + std::to_string(st.mean.size()) +
                     " vs matrix cols " + std::to_string(embeddings.cols));
  }
  Matrix out = embeddings;
  for (std::size_t i = 0; i < out.rows; ++i)
    for (std::size_t j = 0; j < out.cols; ++j)
      out.at(i, j) = (out.at(i, j) - st.mean[j]) / st.std_dev[j];
  return out;
}

double alpha_max(const Matrix& d, std::span<const double> y) {
  const std::size_t n = d.rows, p = d.cols;
  double y_mean = 0.0;
  for (double v : y) y_mean += v;
  y_mean /= static_cast<double>(n);
  double best = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += d.at(i, j) * (y[i] - y_mean);
    best = std::max(best, std::abs(acc / static_cast<double>(n)));
  }
  return best;
}

double objective_value(const Matrix& d, std::span<const double> y,
                       double intercept, std::span<const double> beta,
                       double alpha, double gamma) {
  const std::size_t n = d.rows, p = d.cols;
  double nll = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = intercept;
    for (std::size_t j = 0; j < p; ++j) s += d.at(i, j) * beta[j];
    nll += bernoulli_nll(y[i], s);
  }
  double l1 = 0.0, l2 = 0.0;
  for (double b : beta) {
    l1 += std::abs(b);
    l2 += b * b;
  }
  return nll / static_cast<double>(n) + alpha * l1 + 0.5 * gamma * l2;
}

SparseModel fit_sparse_logistic(const Matrix& d, std::span<const double> y,
                                double alpha, double gamma) {
  const std::size_t n = d.rows, p = d.cols;
  if (alpha < 0.0 || gamma < 0.0) {
    throw ConfigError("elastic net: alpha and gamma must be >= 0");
  }
  if (n == 0) throw DataError("elastic net: empty data");
  bool has_pos = false, has_neg = false;
  for (double v : y) (v > 0.5 ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) {
    throw FitError("elastic net: labels contain a single class");
  }

  // Per-coordinate curvature bound of the majorizer: (1/4n) sum d_ij^2.
  std::vector<double> curvature(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j)
      curvature[j] += d.at(i, j) * d.at(i, j);
  for (double& h : curvature) h /= 4.0 * static_cast<double>(n);

  SparseModel model;
  model.alpha = alpha;
  model.gamma = gamma;
  model.beta.assign(p, 0.0);
  std::vector<double> score(n, 0.0);  // intercept + d . beta, maintained

  model.converged = false;
  for (std::size_t sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double max_update = 0.0;
    // Intercept (unpenalized), curvature bound 1/4.
    {
      double grad = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        grad += stable_sigmoid(score[i]) - y[i];
      grad /= static_cast<double>(n);
      const double delta = -grad / 0.25;
      model.intercept += delta;
      for (double& s : score) s += delta;
      max_update = std::max(max_update, std::abs(delta));
    }
    for (std::size_t j = 0; j < p; ++j) {
      const double h = curvature[j] + gamma;
      if (curvature[j] == 0.0 && gamma == 0.0) continue;  // flat column
      double grad = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        grad += d.at(i, j) * (stable_sigmoid(score[i]) - y[i]);
      grad = grad / static_cast<double>(n) + gamma * model.beta[j];
      const double candidate = h * model.beta[j] - grad;
      const double updated = soft_threshold(candidate, alpha) / h;
      const double delta = updated - model.beta[j];
      if (delta != 0.0) {
        model.beta[j] = updated;
        for (std::size_t i = 0; i < n; ++i) score[i] += delta * d.at(i, j);
        max_update = std::max(max_update, std::abs(delta));
      }
    }
    if (max_update < kTolerance) {
      model.converged = true;
      break;
    }
  }

  for (std::size_t j = 0; j < p; ++j)
    if (model.beta[j] != 0.0) model.support.push_back(j);
  return model;
}

std::vector<double> predict_proba(const SparseModel& model, const Matrix& d) {
  if (d.cols != model.beta.size()) {
    throw ShapeError("sparse model width " + std::to_string(model.beta.size()) +
                     " vs matrix cols " + std::to_string(d.cols));
  }
  std::vector<double> probs(d.rows);
  for (std::size_t i = 0; i < d.rows; ++i) {
    double s = model.intercept;
    for (std::size_t j : model.support) s += d.at(i, j) * model.beta[j];
    probs[i] = stable_sigmoid(s);
  }
  return probs;
}

std::vector<GridPoint> default_grid(double alpha_max_value,
                                    std::span<const double> gammas) {
  std::vector<GridPoint> grid;
  for (int k = 0; k <= 8; ++k) {
    const double alpha = alpha_max_value * std::pow(10.0, -0.5 * k);
    for (double gamma : gammas) grid.push_back(GridPoint{alpha, gamma});
  }
  return grid;
}

SelectionResult select_regularization(const Matrix& train_d,
                                      std::span<const double> train_y,
                                      const Matrix& val_d,
                                      std::span<const double> val_y,
                                      std::span<const GridPoint> grid) {
  if (grid.empty()) throw ConfigError("regularization grid is empty");
  bool any_ok = false;
  std::string last_error;
  std::size_t best_index = 0;
  double best_auc = -1.0;
  std::size_t best_support = 0;
  double best_alpha = 0.0;
  SparseModel best_model;

  for (std::size_t i = 0; i < grid.size(); ++i) {
    SparseModel model;
    double val_auc = 0.0;
    try {
      model = fit_sparse_logistic(train_d, train_y, grid[i].alpha,
                                  grid[i].gamma);
      ScoredSet scored;
      scored.y_true.assign(val_y.begin(), val_y.end());
      scored.y_prob = predict_proba(model, val_d);
      val_auc = auc(scored);
    } catch (const std::exception& e) {
      last_error = e.what();
      continue;
    }
    const bool better =
        !any_ok || val_auc > best_auc ||
        (val_auc == best_auc &&
         (model.support.size() < best_support ||
          (model.support.size() == best_support && grid[i].alpha > best_alpha)));
    if (better) {
      best_index = i;
      best_auc = val_auc;
      best_support = model.support.size();
      best_alpha = grid[i].alpha;
      best_model = std::move(model);
    }
    any_ok = true;
  }
  if (!any_ok) {
    throw FitError("regularization selection: every fit failed (" +
                   last_error + ")");
  }

  SelectionResult result;
  result.chosen = grid[best_index];
  result.val_auc = best_auc;
  // Refit on the training split with the winning pair.
  result.model = fit_sparse_logistic(train_d, train_y, result.chosen.alpha,
                                     result.chosen.gamma);
  return result;
}

StabilityReport stability_report(
    const std::vector<std::vector<std::size_t>>& supports, std::size_t p) {
  if (supports.empty()) {
    throw DataError("stability report: needs at least one support");
  }
  StabilityReport report;
  const std::size_t m = supports.size();
  report.selection_frequency.assign(p, 0.0);
  std::vector<std::set<std::size_t>> sets;
  for (const auto& support : supports) {
    report.support_sizes.push_back(support.size());
    for (std::size_t j : support) {
      if (j >= p) {
        throw IndexError("support index " + std::to_string(j) +
                         " out of range [0," + std::to_string(p) + ")");
      }
      report.selection_frequency[j] += 1.0;
    }
    sets.emplace_back(support.begin(), support.end());
  }
  for (double& f : report.selection_frequency) f /= static_cast<double>(m);

  report.jaccard.assign(m, std::vector<double>(m, 1.0));
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      std::size_t inter = 0;
      for (std::size_t j : sets[a]) inter += sets[b].count(j);
      const std::size_t uni = sets[a].size() + sets[b].size() - inter;
      const double jac = uni == 0 ? 1.0
                                  : static_cast<double>(inter) /
                                        static_cast<double>(uni);
      report.jaccard[a][b] = jac;
      report.jaccard[b][a] = jac;
    }
  }
  return report;
}

}  // namespace magshift
