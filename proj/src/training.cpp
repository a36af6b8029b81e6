#include "magshift/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "magshift/checkpoint.hpp"

namespace magshift {

namespace {

// Stream tags; each RNG consumer gets its own stream so that adding or
// removing one component (e.g. the domain head) cannot shift another's draws.
constexpr std::uint64_t kEncoderInit = 0x11;
constexpr std::uint64_t kPathInit = 0x12;
constexpr std::uint64_t kDomainInit = 0x13;
constexpr std::uint64_t kShuffle = 0x14;

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

ad::Tensor batch_tensor(const Matrix& x, std::span<const std::size_t> rows) {
  std::vector<double> data;
  data.reserve(rows.size() * x.cols);
  for (std::size_t r : rows) {
    const auto row = x.row(r);
    data.insert(data.end(), row.begin(), row.end());
  }
  return ad::Tensor::from({rows.size(), x.cols}, std::move(data));
}

}  // namespace

void validate(const EncoderConfig& cfg) {
  if (cfg.embedding_dim < 1) throw ConfigError("train.embedding_dim: must be >= 1");
  if (cfg.max_epochs < 1) throw ConfigError("train.max_epochs: must be >= 1");
  if (cfg.lambda < 0.0) throw ConfigError("train.lambda: must be >= 0");
  if (cfg.lr <= 0.0) throw ConfigError("train.lr: must be > 0");
  if (cfg.weight_decay < 0.0) throw ConfigError("train.weight_decay: must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
  for (std::size_t w : cfg.hidden_widths)
    if (w < 1) throw ConfigError("train.hidden: widths must be >= 1");
}

TrainView gather_view(const DatasetTable& ds,
                      std::span<const std::int64_t> ids,
                      const std::map<Magnification, int>& domain_encoding) {
  TrainView view;
  view.x = Matrix(ids.size(), ds.p_in());
  view.y.reserve(ids.size());
  view.domains.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto values = ds.values_of(ids[i]);
    std::copy(values.begin(), values.end(), view.x.row(i).begin());
    const Sample& s = ds.sample_by_id(ids[i]);
    view.y.push_back(static_cast<double>(s.label));
    auto it = domain_encoding.find(s.magnification);
    view.domains.push_back(it == domain_encoding.end() ? -1 : it->second);
  }
  return view;
}

TrainView gather_view(std::span<const Sample> samples,
                      const std::map<Magnification, int>& domain_encoding) {
  TrainView view;
  const std::size_t p = samples.empty() ? 0 : samples[0].values.size();
  view.x = Matrix(samples.size(), p);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    std::copy(s.values.begin(), s.values.end(), view.x.row(i).begin());
    view.y.push_back(static_cast<double>(s.label));
    auto it = domain_encoding.find(s.magnification);
    view.domains.push_back(it == domain_encoding.end() ? -1 : it->second);
  }
  return view;
}

double weighted_bce_value(std::span<const double> logits,
                          std::span<const double> y, double pos_weight) {
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    acc += pos_weight * y[i] * stable_softplus(-logits[i]) +
           (1.0 - y[i]) * stable_softplus(logits[i]);
  }
  return acc / static_cast<double>(logits.size());
}

namespace {

TrainedModel train_core(const TrainView& train, const TrainView& val,
                        double pos_weight, const EncoderConfig& cfg_in,
                        bool with_domain, int n_domains) {
  EncoderConfig cfg = cfg_in;
  if (cfg.input_dim == 0) cfg.input_dim = train.x.cols;
  validate(cfg);
  if (train.x.rows == 0) throw TrainError("empty training set");
  if (val.x.rows == 0) throw TrainError("empty validation set");
  if (cfg.input_dim != train.x.cols) {
    throw ShapeError("input_dim " + std::to_string(cfg.input_dim) +
                     " vs training feature width " +
                     std::to_string(train.x.cols));
  }
  if (with_domain && n_domains < 2) {
    throw ConfigError("adversarial training needs at least 2 domains");
  }

  TrainedModel model;
  model.config = cfg;
  Rng enc_rng(mix_seed(cfg.seed, kEncoderInit));
  model.encoder =
      Mlp::init(cfg.input_dim, cfg.hidden_widths, cfg.embedding_dim, enc_rng);
  Rng path_rng(mix_seed(cfg.seed, kPathInit));
  model.path_head = Mlp::init(cfg.embedding_dim, {}, 1, path_rng);
  std::vector<ad::Tensor> params = model.encoder.parameters();
  {
    auto head = model.path_head.parameters();
    params.insert(params.end(), head.begin(), head.end());
  }
  if (with_domain) {
    Rng dom_rng(mix_seed(cfg.seed, kDomainInit));
    model.domain_head = Mlp::init(cfg.embedding_dim, {},
                                  static_cast<std::size_t>(n_domains), dom_rng);
    model.has_domain_head = true;
    auto head = model.domain_head.parameters();
    params.insert(params.end(), head.begin(), head.end());
  }

  Rng shuffle_rng(mix_seed(cfg.seed, kShuffle));
  std::vector<std::size_t> order(train.x.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  Mlp best_encoder, best_path, best_domain;

  auto validation_loss = [&]() {
    const Matrix z = model.encoder.forward(val.x);
    const Matrix s = linear_forward(z, model.path_head.weights[0],
                                    model.path_head.biases[0]);
    return weighted_bce_value(s.data, val.y, pos_weight);
  };

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double lambda_epoch =
        cfg.lambda_warmup_epochs == 0
            ? cfg.lambda
            : cfg.lambda * std::min(1.0, static_cast<double>(epoch - 1) /
                                             static_cast<double>(
                                                 cfg.lambda_warmup_epochs));
    shuffle_rng.shuffle(order);
    double running = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> rows(order.data() + start, len);
      std::vector<double> y_batch(len);
      std::vector<int> d_batch(len);
      for (std::size_t i = 0; i < len; ++i) {
        y_batch[i] = train.y[rows[i]];
        d_batch[i] = train.domains[rows[i]];
      }
      ad::Graph g;
      const ad::Tensor x = batch_tensor(train.x, rows);
      const ad::Tensor z = model.encoder.forward(g, x);
      const ad::Tensor s = model.path_head.forward(g, z);
      const ad::Tensor path_loss = g.weighted_bce(s, y_batch, pos_weight);
      ad::Tensor total = path_loss;
      if (with_domain) {
        const ad::Tensor reversed = g.grad_reverse(z, lambda_epoch);
        const ad::Tensor logits = model.domain_head.forward(g, reversed);
        total = g.add(path_loss, g.multiclass_ce(logits, d_batch));
      }
      const double batch_path_loss = path_loss.item();
      if (!std::isfinite(total.item())) {
        throw NumericError("non-finite training loss at epoch " +
                           std::to_string(epoch));
      }
      g.backward(total);
      ad::sgd_step(params, cfg.lr, cfg.weight_decay);
      running += batch_path_loss * static_cast<double>(len);
    }
    const double train_loss = running / static_cast<double>(order.size());
    const double val_loss = validation_loss();
    if (!std::isfinite(val_loss)) {
      throw NumericError("non-finite validation loss at epoch " +
                         std::to_string(epoch));
    }
    model.history.push_back(EpochStats{epoch, train_loss, val_loss});
    if (val_loss < best_val) {
      best_val = val_loss;
      best_epoch = epoch;
      best_encoder = model.encoder.clone();
      best_path = model.path_head.clone();
      if (with_domain) best_domain = model.domain_head.clone();
    } else if (epoch - best_epoch >= cfg.patience) {
      break;
    }
  }

  model.encoder.copy_values_from(best_encoder);
  model.path_head.copy_values_from(best_path);
  if (with_domain) model.domain_head.copy_values_from(best_domain);
  ad::clear_grads(params);
  model.selected_epoch = best_epoch;
  return model;
}

}  // namespace

TrainedModel train_baseline_on(const TrainView& train, const TrainView& val,
                               double pos_weight, const EncoderConfig& cfg) {
  return train_core(train, val, pos_weight, cfg, false, 0);
}

TrainedModel train_baseline(const LomoFold& fold, const DatasetTable& ds,
                            const EncoderConfig& cfg) {
  const TrainView train = gather_view(ds, fold.train_ids, fold.domain_encoding);
  const TrainView val = gather_view(ds, fold.val_ids, fold.domain_encoding);
  return train_baseline_on(train, val, fold.pos_weight, cfg);
}

TrainedModel train_grl_on(const TrainView& train, const TrainView& val,
                          double pos_weight, int n_domains,
                          const EncoderConfig& cfg) {
  return train_core(train, val, pos_weight, cfg, true, n_domains);
}

TrainedModel train_grl(const LomoFold& fold, const DatasetTable& ds,
                       const EncoderConfig& cfg) {
  const TrainView train = gather_view(ds, fold.train_ids, fold.domain_encoding);
  const TrainView val = gather_view(ds, fold.val_ids, fold.domain_encoding);
  return train_grl_on(train, val, fold.pos_weight,
                      static_cast<int>(fold.domain_encoding.size()), cfg);
}

Matrix embed(const TrainedModel& model, const Matrix& x) {
  if (x.rows == 0) return Matrix(0, model.embedding_dim());
  if (x.cols != model.encoder.input_dim()) {
    throw ShapeError("embed: feature width " + std::to_string(x.cols) +
                     " vs encoder input " +
                     std::to_string(model.encoder.input_dim()));
  }
  return model.encoder.forward(x);
}

Matrix embed(const TrainedModel& model, const DatasetTable& ds,
             std::span<const std::int64_t> ids) {
  Matrix x(ids.size(), ds.p_in());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto values = ds.values_of(ids[i]);
    std::copy(values.begin(), values.end(), x.row(i).begin());
  }
  return embed(model, x);
}

std::vector<double> predict_proba(const TrainedModel& model, const Matrix& x) {
  const Matrix z = embed(model, x);
  const Matrix s = linear_forward(z, model.path_head.weights[0],
                                  model.path_head.biases[0]);
  std::vector<double> probs(s.rows);
  for (std::size_t i = 0; i < s.rows; ++i)
    probs[i] = stable_sigmoid(s.at(i, 0));
  return probs;
}

std::vector<double> predict_proba(const TrainedModel& model,
                                  const DatasetTable& ds,
                                  std::span<const std::int64_t> ids) {
  Matrix x(ids.size(), ds.p_in());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto values = ds.values_of(ids[i]);
    std::copy(values.begin(), values.end(), x.row(i).begin());
  }
  return predict_proba(model, x);
}

double domain_probe_accuracy(const Matrix& train_x,
                             std::span<const int> train_domains,
                             const Matrix& eval_x,
                             std::span<const int> eval_domains, int n_domains) {
  if (n_domains < 2) throw ConfigError("probe needs at least 2 domains");
  const std::size_t p = train_x.cols;
  const auto k = static_cast<std::size_t>(n_domains);

  std::vector<std::size_t> tr_rows, ev_rows;
  for (std::size_t i = 0; i < train_x.rows; ++i)
    if (train_domains[i] >= 0) tr_rows.push_back(i);
  for (std::size_t i = 0; i < eval_x.rows; ++i)
    if (eval_domains[i] >= 0) ev_rows.push_back(i);
  if (tr_rows.empty() || ev_rows.empty()) {
    throw DataError("probe: no labeled rows");
  }

  // Standardize with training statistics (population std; flat columns -> 1).
  std::vector<double> mean(p, 0.0), std_dev(p, 0.0);
  for (std::size_t r : tr_rows)
    for (std::size_t j = 0; j < p; ++j) mean[j] += train_x.at(r, j);
  for (double& m : mean) m /= static_cast<double>(tr_rows.size());
  for (std::size_t r : tr_rows)
    for (std::size_t j = 0; j < p; ++j) {
      const double d = train_x.at(r, j) - mean[j];
      std_dev[j] += d * d;
    }
  for (double& s : std_dev) {
    s = std::sqrt(s / static_cast<double>(tr_rows.size()));
    if (s == 0.0) s = 1.0;
  }

  const std::size_t n = tr_rows.size();
  Matrix x(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j)
      x.at(i, j) = (train_x.at(tr_rows[i], j) - mean[j]) / std_dev[j];

  std::vector<double> w(p * k, 0.0), b(k, 0.0);
  std::vector<double> logits(k), probs(k);
  std::vector<double> gw(p * k), gb(k);
  constexpr std::size_t kIters = 400;
  constexpr double kLr = 0.5;
  for (std::size_t iter = 0; iter < kIters; ++iter) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < k; ++c) {
        double acc = b[c];
        for (std::size_t j = 0; j < p; ++j) acc += x.at(i, j) * w[j * k + c];
        logits[c] = acc;
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double sum = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        probs[c] = std::exp(logits[c] - mx);
        sum += probs[c];
      }
      const int d = train_domains[tr_rows[i]];
      for (std::size_t c = 0; c < k; ++c) {
        const double err =
            probs[c] / sum - (static_cast<int>(c) == d ? 1.0 : 0.0);
        for (std::size_t j = 0; j < p; ++j) gw[j * k + c] += x.at(i, j) * err;
        gb[c] += err;
      }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t idx = 0; idx < w.size(); ++idx)
      w[idx] -= kLr * gw[idx] * inv_n;
    for (std::size_t c = 0; c < k; ++c) b[c] -= kLr * gb[c] * inv_n;
  }

  std::size_t correct = 0;
  for (std::size_t r : ev_rows) {
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      double acc = b[c];
      for (std::size_t j = 0; j < p; ++j)
        acc += (eval_x.at(r, j) - mean[j]) / std_dev[j] * w[j * k + c];
      if (acc > best_score) {
        best_score = acc;
        best = static_cast<int>(c);
      }
    }
    if (best == eval_domains[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ev_rows.size());
}

namespace {

void push_mlp(std::vector<NamedTensor>& out, const std::string& prefix,
              const Mlp& mlp) {
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    const auto& w = mlp.weights[l];
    const auto& b = mlp.biases[l];
    out.push_back(NamedTensor{prefix + ".w" + std::to_string(l), w.shape(),
                              {w.values().begin(), w.values().end()}});
    out.push_back(NamedTensor{prefix + ".b" + std::to_string(l), b.shape(),
                              {b.values().begin(), b.values().end()}});
  }
}

Mlp mlp_from(const std::vector<NamedTensor>& tensors,
             const std::string& prefix) {
  Mlp mlp;
  for (std::size_t l = 0;; ++l) {
    const std::string wname = prefix + ".w" + std::to_string(l);
    const std::string bname = prefix + ".b" + std::to_string(l);
    const NamedTensor* w = nullptr;
    const NamedTensor* b = nullptr;
    for (const auto& t : tensors) {
      if (t.name == wname) w = &t;
      if (t.name == bname) b = &t;
    }
    if (!w || !b) break;
    mlp.weights.push_back(ad::Tensor::from(w->shape, w->values, true));
    mlp.biases.push_back(ad::Tensor::from(b->shape, b->values, true));
  }
  return mlp;
}

}  // namespace

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  std::vector<NamedTensor> tensors;
  push_mlp(tensors, "encoder", model.encoder);
  push_mlp(tensors, "path", model.path_head);
  if (model.has_domain_head) push_mlp(tensors, "domain", model.domain_head);
  tensors.push_back(NamedTensor{
      "meta.selected_epoch",
      {1},
      {static_cast<double>(model.selected_epoch)}});
  save_checkpoint(path, tensors);
}

TrainedModel load_model(const std::filesystem::path& path) {
  const std::vector<NamedTensor> tensors = load_checkpoint(path);
  TrainedModel model;
  model.encoder = mlp_from(tensors, "encoder");
  model.path_head = mlp_from(tensors, "path");
  model.domain_head = mlp_from(tensors, "domain");
  model.has_domain_head = !model.domain_head.weights.empty();
  if (model.encoder.weights.empty() || model.path_head.weights.empty()) {
    throw IoError("checkpoint lacks model tensors: " + path.string());
  }
  for (const auto& t : tensors) {
    if (t.name == "meta.selected_epoch") {
      model.selected_epoch = static_cast<std::size_t>(t.values.at(0));
    }
  }
  model.config.input_dim = model.encoder.input_dim();
  model.config.embedding_dim = model.encoder.output_dim();
  model.config.hidden_widths.clear();
  for (std::size_t l = 0; l + 1 < model.encoder.weights.size(); ++l)
    model.config.hidden_widths.push_back(model.encoder.weights[l].dim(1));
  return model;
}

}  // namespace magshift
