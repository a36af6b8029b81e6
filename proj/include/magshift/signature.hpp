#pragma once

#include <span>
#include <vector>

#include "magshift/matrix.hpp"

namespace magshift {

// Per-dimension centering/scaling fitted on the training split only.
// Zero-variance dimensions keep std 1 so they transform to exact zeros.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> std_dev;
};

Standardizer fit_standardizer(const Matrix& train_embeddings);
Matrix apply(const Standardizer& st, const Matrix& embeddings);

// Elastic-net logistic model: minimizes
//   (1/n) sum nll(y_i, sigmoid(b0 + d_i . beta)) + alpha*|beta|_1
//   + (gamma/2)*|beta|_2^2
// with an unpenalized intercept. The support is the set of exact nonzeros
// produced by soft-thresholding.
struct SparseModel {
  double intercept = 0.0;
  std::vector<double> beta;
  double alpha = 0.0;
  double gamma = 0.0;
  std::vector<std::size_t> support;
  bool converged = true;
};

// Cyclic coordinate descent on a quadratic majorization (curvature bound 1/4
// per sample), soft-thresholding each coordinate. Stops when the largest
// coordinate update falls below 1e-7 or after 10000 sweeps; hitting the sweep
// cap only flags `converged`.
SparseModel fit_sparse_logistic(const Matrix& d, std::span<const double> y,
                                double alpha, double gamma);

// Smallest alpha that zeroes every coefficient on centered columns:
// max_j |(1/n) sum_i d_ij (y_i - mean(y))|.
double alpha_max(const Matrix& d, std::span<const double> y);

double objective_value(const Matrix& d, std::span<const double> y,
                       double intercept, std::span<const double> beta,
                       double alpha, double gamma);

std::vector<double> predict_proba(const SparseModel& model, const Matrix& d);

struct GridPoint {
  double alpha;
  double gamma;
};

// alpha in {alpha_max * 10^(-k/2), k = 0..8} crossed with the gamma list.
std::vector<GridPoint> default_grid(double alpha_max_value,
                                    std::span<const double> gammas);

struct SelectionResult {
  GridPoint chosen{0.0, 0.0};
  SparseModel model;
  double val_auc = 0.0;
};

// Picks the grid point with the highest validation AUC (ties: smaller
// support, then larger alpha, then first occurrence) and refits on train.
SelectionResult select_regularization(const Matrix& train_d,
                                      std::span<const double> train_y,
                                      const Matrix& val_d,
                                      std::span<const double> val_y,
                                      std::span<const GridPoint> grid);

struct StabilityReport {
  std::vector<std::size_t> support_sizes;
  std::vector<double> selection_frequency;      // length p
  std::vector<std::vector<double>> jaccard;     // symmetric, unit diagonal
};

// Jaccard of two empty supports is defined as 1.
StabilityReport stability_report(
    const std::vector<std::vector<std::size_t>>& supports, std::size_t p);

}  // namespace magshift
