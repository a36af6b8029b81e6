#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "magshift/dataset.hpp"
#include "magshift/matrix.hpp"
#include "magshift/nn.hpp"
#include "magshift/splitting.hpp"

namespace magshift {

struct EncoderConfig {
  std::size_t input_dim = 0;  // 0: take from the data
  std::vector<std::size_t> hidden_widths{64, 32};
  std::size_t embedding_dim = 32;
  std::uint64_t seed = 1;
  double lr = 0.05;
  double weight_decay = 1e-4;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 150;
  double lambda = 1.0;  // gradient-reversal strength
  std::size_t lambda_warmup_epochs = 0;  // 0: fixed lambda from epoch 1
  std::size_t patience = 20;  // early stop after this many non-improving epochs
};

void validate(const EncoderConfig& cfg);

struct EpochStats {
  std::size_t epoch;  // 1-based
  double train_loss;
  double val_loss;
};

// Encoder plus heads at the best-validation epoch. The domain head is only
// present for adversarially trained models.
struct TrainedModel {
  EncoderConfig config;
  Mlp encoder;
  Mlp path_head;    // embedding -> 1 logit
  Mlp domain_head;  // embedding -> n_domains logits; empty if unused
  bool has_domain_head = false;
  std::vector<EpochStats> history;
  std::size_t selected_epoch = 0;

  std::size_t embedding_dim() const { return encoder.output_dim(); }
};

// Materialized feature/label/domain arrays for one data partition. A domain
// of -1 marks samples without a magnification tag (synthetic patches); they
// are skipped by the domain loss.
struct TrainView {
  Matrix x;
  std::vector<double> y;
  std::vector<int> domains;
};

TrainView gather_view(const DatasetTable& ds,
                      std::span<const std::int64_t> ids,
                      const std::map<Magnification, int>& domain_encoding);
TrainView gather_view(std::span<const Sample> samples,
                      const std::map<Magnification, int>& domain_encoding);

// Supervised pathology training with class weighting; parameters come from
// the epoch with the lowest validation loss.
TrainedModel train_baseline(const LomoFold& fold, const DatasetTable& ds,
                            const EncoderConfig& cfg);
TrainedModel train_baseline_on(const TrainView& train, const TrainView& val,
                               double pos_weight, const EncoderConfig& cfg);

// Domain-adversarial training: the domain head minimizes the magnification
// loss while the encoder receives its gradient through the reversal layer.
// With lambda = 0 this reproduces train_baseline's encoder and pathology head
// trajectories exactly (the domain head still trains on its own).
TrainedModel train_grl(const LomoFold& fold, const DatasetTable& ds,
                       const EncoderConfig& cfg);
TrainedModel train_grl_on(const TrainView& train, const TrainView& val,
                          double pos_weight, int n_domains,
                          const EncoderConfig& cfg);

Matrix embed(const TrainedModel& model, const Matrix& x);
Matrix embed(const TrainedModel& model, const DatasetTable& ds,
             std::span<const std::int64_t> ids);

std::vector<double> predict_proba(const TrainedModel& model, const Matrix& x);
std::vector<double> predict_proba(const TrainedModel& model,
                                  const DatasetTable& ds,
                                  std::span<const std::int64_t> ids);

// Post-hoc multinomial logistic probe on frozen embeddings: fit on the
// training rows, return accuracy on the evaluation rows. Rows with a negative
// domain are ignored on both sides.
double domain_probe_accuracy(const Matrix& train_x,
                             std::span<const int> train_domains,
                             const Matrix& eval_x,
                             std::span<const int> eval_domains, int n_domains);

// Mean weighted binary cross-entropy of logits against labels; the graph op
// reduces to this formula.
double weighted_bce_value(std::span<const double> logits,
                          std::span<const double> y, double pos_weight);

void save_model(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace magshift
