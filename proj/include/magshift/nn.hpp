#pragma once

#include <span>
#include <vector>

#include "magshift/autodiff.hpp"
#include "magshift/matrix.hpp"
#include "magshift/rng.hpp"

namespace magshift {

// Fully connected stack with ReLU between layers and a linear last layer.
// Both forward paths use the same accumulation order, so graph-free inference
// reproduces training-time activations exactly.
struct Mlp {
  std::vector<ad::Tensor> weights;  // layer l: [in_l, out_l]
  std::vector<ad::Tensor> biases;   // layer l: [out_l]

  // He-normal weights, zero biases. Draw order is fixed: layer by layer,
  // row-major.
  static Mlp init(std::size_t input_dim, std::span<const std::size_t> hidden,
                  std::size_t output_dim, Rng& rng);

  ad::Tensor forward(ad::Graph& g, const ad::Tensor& x) const;
  Matrix forward(const Matrix& x) const;

  std::size_t input_dim() const { return weights.front().dim(0); }
  std::size_t output_dim() const { return weights.back().dim(1); }

  std::vector<ad::Tensor> parameters() const;
  Mlp clone() const;
  void copy_values_from(const Mlp& other);
};

// x @ w + b without a graph, matching Graph::linear arithmetic.
Matrix linear_forward(const Matrix& x, const ad::Tensor& w, const ad::Tensor& b);

}  // namespace magshift
