#include "magshift/nn.hpp"

#include <cmath>

#include "magshift/errors.hpp"

namespace magshift {

Mlp Mlp::init(std::size_t input_dim, std::span<const std::size_t> hidden,
              std::size_t output_dim, Rng& rng) {
  std::vector<std::size_t> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(output_dim);

  Mlp mlp;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l], out = dims[l + 1];
    std::vector<double> w(in * out);
    const double std_dev = std::sqrt(2.0 / static_cast<double>(in));
    for (double& v : w) v = std_dev * rng.normal();
    mlp.weights.push_back(ad::Tensor::from({in, out}, std::move(w), true));
    mlp.biases.push_back(ad::Tensor::zeros({out}, true));
  }
  return mlp;
}

ad::Tensor Mlp::forward(ad::Graph& g, const ad::Tensor& x) const {
  ad::Tensor h = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    h = g.linear(h, weights[l], biases[l]);
    if (l + 1 < weights.size()) h = g.relu(h);
  }
  return h;
}

Matrix linear_forward(const Matrix& x, const ad::Tensor& w,
                      const ad::Tensor& b) {
  const std::size_t a = w.dim(0), out_dim = w.dim(1);
  if (x.cols != a) {
    throw ShapeError("linear_forward: input cols " + std::to_string(x.cols) +
                     " vs weight rows " + std::to_string(a));
  }
  const auto wv = w.values();
  const auto bv = b.values();
  Matrix out(x.rows, out_dim);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < out_dim; ++j) {
      double acc = bv[j];
      for (std::size_t k = 0; k < a; ++k)
        acc += x.at(i, k) * wv[k * out_dim + j];
      out.at(i, j) = acc;
    }
  }
  return out;
}

Matrix Mlp::forward(const Matrix& x) const {
  Matrix h = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    h = linear_forward(h, weights[l], biases[l]);
    if (l + 1 < weights.size()) {
      for (double& v : h.data) v = v > 0.0 ? v : 0.0;
    }
  }
  return h;
}

std::vector<ad::Tensor> Mlp::parameters() const {
  std::vector<ad::Tensor> params;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    params.push_back(weights[l]);
    params.push_back(biases[l]);
  }
  return params;
}

Mlp Mlp::clone() const {
  Mlp copy;
  for (const auto& w : weights) copy.weights.push_back(w.clone());
  for (const auto& b : biases) copy.biases.push_back(b.clone());
  return copy;
}

void Mlp::copy_values_from(const Mlp& other) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    auto dst = weights[l].values_mut();
    const auto src = other.weights[l].values();
    std::copy(src.begin(), src.end(), dst.begin());
    auto dstb = biases[l].values_mut();
    const auto srcb = other.biases[l].values();
    std::copy(srcb.begin(), srcb.end(), dstb.begin());
  }
}

}  // namespace magshift
