#include "magshift/augment.hpp"

#include <algorithm>
#include <cmath>

#include "magshift/autodiff.hpp"

namespace magshift {

namespace {

constexpr std::uint64_t kGenInit = 0x21;
constexpr std::uint64_t kDiscInit = 0x22;
constexpr std::uint64_t kBatch = 0x23;
constexpr std::uint64_t kLatent = 0x24;

double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

Matrix latent_batch(Rng& rng, std::size_t n, std::size_t dim) {
  Matrix z(n, dim);
  for (double& v : z.data) v = rng.normal();
  return z;
}

ad::Tensor to_tensor(const Matrix& m) {
  return ad::Tensor::from({m.rows, m.cols}, m.data);
}

}  // namespace

void validate(const GanConfig& cfg) {
  if (cfg.latent_dim < 1) throw ConfigError("gan.latent_dim: must be >= 1");
  if (cfg.steps < 1) throw ConfigError("gan.steps: must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("gan.batch_size: must be >= 1");
  if (cfg.lr <= 0.0) throw ConfigError("gan.lr: must be > 0");
  if (cfg.synth_fraction_cap < 0.0 || cfg.synth_fraction_cap > 0.5) {
    throw ConfigError("gan.synth_fraction_cap: must be in [0, 0.5]");
  }
}

double discriminator_loss_value(std::span<const double> real_logits,
                                std::span<const double> fake_logits) {
  double real = 0.0, fake = 0.0;
  for (double s : real_logits) real += stable_softplus(-s);
  for (double s : fake_logits) fake += stable_softplus(s);
  return real / static_cast<double>(real_logits.size()) +
         fake / static_cast<double>(fake_logits.size());
}

double generator_loss_value(std::span<const double> fake_logits,
                            bool saturating) {
  double acc = 0.0;
  for (double s : fake_logits)
    acc += saturating ? -stable_softplus(s) : stable_softplus(-s);
  return acc / static_cast<double>(fake_logits.size());
}

GanPair train_gan_on(const Matrix& real, int class_label,
                     Magnification held_out, const GanConfig& cfg) {
  validate(cfg);
  if (real.rows < cfg.batch_size) {
    throw TrainError("class " + std::to_string(class_label) + ": " +
                     std::to_string(real.rows) +
                     " training samples, need at least batch_size = " +
                     std::to_string(cfg.batch_size));
  }
  GanPair gan;
  gan.class_label = class_label;
  gan.held_out = held_out;
  gan.feature_dim = real.cols;

  Rng gen_rng(mix_seed(cfg.seed, kGenInit));
  Rng disc_rng(mix_seed(cfg.seed, kDiscInit));
  gan.generator = Mlp::init(cfg.latent_dim, cfg.gen_hidden, real.cols, gen_rng);
  gan.discriminator = Mlp::init(real.cols, cfg.disc_hidden, 1, disc_rng);
  std::vector<ad::Tensor> gen_params = gan.generator.parameters();
  std::vector<ad::Tensor> disc_params = gan.discriminator.parameters();

  Rng batch_rng(mix_seed(cfg.seed, kBatch));
  Rng latent_rng(mix_seed(cfg.seed, kLatent));

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    // Discriminator ascent on log D(x) + log(1 - D(G(z))); the generator
    // output is detached (plain forward) so only the critic updates.
    Matrix real_batch(cfg.batch_size, real.cols);
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
      const std::size_t row = batch_rng.index(real.rows);
      std::copy(real.row(row).begin(), real.row(row).end(),
                real_batch.row(i).begin());
    }
    const Matrix fake_detached = gan.generator.forward(
        latent_batch(latent_rng, cfg.batch_size, cfg.latent_dim));
    {
      ad::Graph g;
      const ad::Tensor s_real =
          gan.discriminator.forward(g, to_tensor(real_batch));
      const ad::Tensor s_fake =
          gan.discriminator.forward(g, to_tensor(fake_detached));
      const ad::Tensor loss =
          g.add(g.mean(g.softplus(g.scale(s_real, -1.0))),
                g.mean(g.softplus(s_fake)));
      if (!std::isfinite(loss.item())) {
        throw NumericError("non-finite discriminator loss at step " +
                           std::to_string(step));
      }
      gan.final_disc_loss = loss.item();
      g.backward(loss);
      ad::sgd_step(disc_params, cfg.lr, 0.0);
    }
    // Generator step through the critic; critic gradients are discarded.
    {
      ad::Graph g;
      const ad::Tensor z =
          to_tensor(latent_batch(latent_rng, cfg.batch_size, cfg.latent_dim));
      const ad::Tensor fake = gan.generator.forward(g, z);
      const ad::Tensor s_fake = gan.discriminator.forward(g, fake);
      const ad::Tensor loss =
          cfg.saturating_generator_loss
              ? g.scale(g.mean(g.softplus(s_fake)), -1.0)
              : g.mean(g.softplus(g.scale(s_fake, -1.0)));
      if (!std::isfinite(loss.item())) {
        throw NumericError("non-finite generator loss at step " +
                           std::to_string(step));
      }
      gan.final_gen_loss = loss.item();
      g.backward(loss);
      ad::sgd_step(gen_params, cfg.lr, 0.0);
      ad::clear_grads(disc_params);
    }
  }
  return gan;
}

GanPair train_gan(const LomoFold& fold, const DatasetTable& ds, int class_label,
                  const GanConfig& cfg) {
  if (class_label != 0 && class_label != 1) {
    throw ConfigError("gan class_label must be 0 or 1");
  }
  std::vector<std::int64_t> class_ids;
  for (std::int64_t sid : fold.train_ids)
    if (ds.sample_by_id(sid).label == class_label) class_ids.push_back(sid);
  Matrix real(class_ids.size(), ds.p_in());
  for (std::size_t i = 0; i < class_ids.size(); ++i) {
    const auto values = ds.values_of(class_ids[i]);
    std::copy(values.begin(), values.end(), real.row(i).begin());
  }
  return train_gan_on(real, class_label, fold.held_out, cfg);
}

std::vector<Sample> generate(const GanPair& gan, std::size_t n,
                             std::uint64_t seed, std::int64_t first_id) {
  if (first_id >= 0) throw ConfigError("synthetic ids must be negative");
  Rng rng(seed);
  const Matrix z = latent_batch(rng, n, gan.generator.input_dim());
  const Matrix x = n > 0 ? gan.generator.forward(z) : Matrix(0, gan.feature_dim);
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.sample_id = first_id - static_cast<std::int64_t>(i);
    s.patient_id = first_id - static_cast<std::int64_t>(i);
    s.label = gan.class_label;
    s.magnification = Magnification::Synth;
    s.values.assign(x.row(i).begin(), x.row(i).end());
    out.push_back(std::move(s));
  }
  return out;
}

AugmentedSet mix_augmented(const LomoFold& fold, const DatasetTable& ds,
                           const GanPair& benign_gan,
                           const GanPair& malignant_gan, const GanConfig& cfg) {
  validate(cfg);
  if (benign_gan.class_label != 0 || malignant_gan.class_label != 1) {
    throw ConfigError("mix_augmented: pairs must serve class 0 and class 1");
  }
  if (benign_gan.held_out != fold.held_out ||
      malignant_gan.held_out != fold.held_out) {
    throw PolicyError("mix_augmented: generator was trained for a different fold");
  }

  AugmentedSet out;
  std::size_t n_benign = 0, n_malignant = 0;
  for (std::int64_t sid : fold.train_ids) {
    const Sample& s = ds.sample_by_id(sid);
    (s.label == 0 ? n_benign : n_malignant)++;
    out.samples.push_back(s);
  }
  out.n_real = out.samples.size();

  const double cap = cfg.synth_fraction_cap;
  // Largest synthetic total with fraction <= cap: s / (n_real + s) <= cap.
  const auto budget = static_cast<std::size_t>(
      cap >= 1.0 ? 0
                 : std::floor(cap * static_cast<double>(out.n_real) /
                              (1.0 - cap)));
  const std::size_t deficit_benign =
      n_malignant > n_benign ? n_malignant - n_benign : 0;
  const std::size_t deficit_malignant =
      n_benign > n_malignant ? n_benign - n_malignant : 0;
  std::size_t add_benign = std::min(deficit_benign, budget);
  std::size_t add_malignant = std::min(deficit_malignant, budget - add_benign);

  std::int64_t next_id = -1;
  if (add_benign > 0) {
    auto synth = generate(benign_gan, add_benign, mix_seed(cfg.seed, 0xB0),
                          next_id);
    next_id -= static_cast<std::int64_t>(add_benign);
    out.samples.insert(out.samples.end(), synth.begin(), synth.end());
  }
  if (add_malignant > 0) {
    auto synth = generate(malignant_gan, add_malignant,
                          mix_seed(cfg.seed, 0xB1), next_id);
    out.samples.insert(out.samples.end(), synth.begin(), synth.end());
  }
  out.n_synthetic = add_benign + add_malignant;
  out.synthetic_fraction =
      out.samples.empty()
          ? 0.0
          : static_cast<double>(out.n_synthetic) /
                static_cast<double>(out.samples.size());
  if (out.synthetic_fraction > cap + 1e-12) {
    throw PolicyError("mix_augmented: synthetic fraction " +
                      std::to_string(out.synthetic_fraction) +
                      " exceeds cap " + std::to_string(cap));
  }
  return out;
}

}  // namespace magshift
