#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "magshift/dataset.hpp"
#include "magshift/nn.hpp"
#include "magshift/splitting.hpp"

namespace magshift {

struct GanConfig {
  std::size_t latent_dim = 16;
  std::vector<std::size_t> gen_hidden{32};
  std::vector<std::size_t> disc_hidden{32};
  std::size_t steps = 3000;
  std::size_t batch_size = 64;
  double lr = 0.05;
  std::uint64_t seed = 1;
  double synth_fraction_cap = 0.3;  // of the augmented training set, <= 0.5
  // Default is the non-saturating generator loss -E[log D(G(z))]; the flag
  // switches to the literal minimax form E[log(1 - D(G(z)))].
  bool saturating_generator_loss = false;
};

void validate(const GanConfig& cfg);

// Class-specific generator/discriminator pair trained on one fold's training
// partition.
struct GanPair {
  Mlp generator;      // latent -> feature space
  Mlp discriminator;  // feature space -> 1 logit
  int class_label = 0;
  Magnification held_out = Magnification::M40;
  std::size_t feature_dim = 0;
  double final_disc_loss = 0.0;
  double final_gen_loss = 0.0;
};

// One discriminator update and one generator update per step, alternating.
// Touches only the fold's training samples of the requested class.
GanPair train_gan(const LomoFold& fold, const DatasetTable& ds, int class_label,
                  const GanConfig& cfg);

// Same training loop on a raw sample matrix (rows are samples). Used by
// train_gan and directly by toy-distribution tests.
GanPair train_gan_on(const Matrix& real, int class_label,
                     Magnification held_out, const GanConfig& cfg);

// Synthetic samples with the pair's class label, negative ids from
// `first_id` downward, and the SYNTH magnification tag.
std::vector<Sample> generate(const GanPair& gan, std::size_t n,
                             std::uint64_t seed, std::int64_t first_id = -1);

struct AugmentedSet {
  std::vector<Sample> samples;  // real fold-train samples plus synthetics
  std::size_t n_real = 0;
  std::size_t n_synthetic = 0;
  double synthetic_fraction = 0.0;
};

// Synthetic count per class = min(count that balances the classes, largest
// count keeping the synthetic fraction within cap). Real samples pass through
// unchanged; validation and test are untouched.
AugmentedSet mix_augmented(const LomoFold& fold, const DatasetTable& ds,
                           const GanPair& benign_gan,
                           const GanPair& malignant_gan, const GanConfig& cfg);

// Loss values as trained, exposed for direct objective checks.
double discriminator_loss_value(std::span<const double> real_logits,
                                std::span<const double> fake_logits);
double generator_loss_value(std::span<const double> fake_logits,
                            bool saturating);

}  // namespace magshift
