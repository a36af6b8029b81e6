#include "magshift/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "magshift/errors.hpp"

namespace magshift::ad {

namespace {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + e^x) without overflow for large |x|.
double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t;
  t.s_ = std::make_shared<Storage>();
  t.s_->shape = std::move(shape);
  t.s_->value.assign(numel(t.s_->shape), 0.0);
  t.s_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw ShapeError("tensor init: shape " + shape_str(shape) +
                     " does not match value count " +
                     std::to_string(values.size()));
  }
  Tensor t;
  t.s_ = std::make_shared<Storage>();
  t.s_->shape = std::move(shape);
  t.s_->value = std::move(values);
  t.s_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item(): tensor has " + std::to_string(size()) +
                     " elements, expected 1");
  }
  return s_->value[0];
}

Tensor Tensor::clone() const {
  Tensor t;
  t.s_ = std::make_shared<Storage>(*s_);
  return t;
}

Tensor Graph::make(Shape shape, bool requires_grad) {
  return Tensor::zeros(std::move(shape), requires_grad);
}

void Graph::record(const Tensor& out, std::function<void()> pull) {
  nodes_.push_back(Node{out, std::move(pull)});
}

Tensor Graph::linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.shape().size() != 2 || w.shape().size() != 2 || b.shape().size() != 1) {
    throw ShapeError("linear: expected x [n,a], w [a,b], b [b]; got x " +
                     shape_str(x.shape()) + ", w " + shape_str(w.shape()) +
                     ", b " + shape_str(b.shape()));
  }
  const std::size_t n = x.dim(0), a = x.dim(1);
  const std::size_t wa = w.dim(0), wb = w.dim(1);
  if (a != wa || b.dim(0) != wb) {
    throw ShapeError("linear: x cols " + std::to_string(a) + " vs w rows " +
                     std::to_string(wa) + ", w cols " + std::to_string(wb) +
                     " vs b size " + std::to_string(b.dim(0)));
  }
  Tensor out = make({n, wb},
                    x.requires_grad() || w.requires_grad() || b.requires_grad());
  const double* xv = x.values().data();
  const double* wv = w.values().data();
  const double* bv = b.values().data();
  double* ov = out.values_mut().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < wb; ++j) {
      double acc = bv[j];
      for (std::size_t k = 0; k < a; ++k) acc += xv[i * a + k] * wv[k * wb + j];
      ov[i * wb + j] = acc;
    }
  }
  record(out, [x, w, b, out, n, a, wb]() mutable {
    const auto go = out.grad();
    if (x.requires_grad()) {
      auto gx = x.accum_grad();
      const auto wv2 = w.values();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < a; ++k) {
          double acc = 0.0;
          for (std::size_t j = 0; j < wb; ++j)
            acc += go[i * wb + j] * wv2[k * wb + j];
          gx[i * a + k] += acc;
        }
    }
    if (w.requires_grad()) {
      auto gw = w.accum_grad();
      const auto xv2 = x.values();
      for (std::size_t k = 0; k < a; ++k)
        for (std::size_t j = 0; j < wb; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < n; ++i)
            acc += xv2[i * a + k] * go[i * wb + j];
          gw[k * wb + j] += acc;
        }
    }
    if (b.requires_grad()) {
      auto gb = b.accum_grad();
      for (std::size_t j = 0; j < wb; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += go[i * wb + j];
        gb[j] += acc;
      }
    }
  });
  return out;
}

Tensor Graph::relu(const Tensor& x) {
  Tensor out = make(x.shape(), x.requires_grad());
  const auto xv = x.values();
  auto ov = out.values_mut();
  for (std::size_t i = 0; i < xv.size(); ++i)
    ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  record(out, [x, out]() mutable {
    if (!x.requires_grad()) return;
    auto gx = x.accum_grad();
    const auto go = out.grad();
    const auto xv2 = x.values();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xv2[i] > 0.0) gx[i] += go[i];
  });
  return out;
}

Tensor Graph::sigmoid(const Tensor& x) {
  Tensor out = make(x.shape(), x.requires_grad());
  const auto xv = x.values();
  auto ov = out.values_mut();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = stable_sigmoid(xv[i]);
  record(out, [x, out]() mutable {
    if (!x.requires_grad()) return;
    auto gx = x.accum_grad();
    const auto go = out.grad();
    const auto s = out.values();
    for (std::size_t i = 0; i < gx.size(); ++i)
      gx[i] += go[i] * s[i] * (1.0 - s[i]);
  });
  return out;
}

Tensor Graph::softplus(const Tensor& x) {
  Tensor out = make(x.shape(), x.requires_grad());
  const auto xv = x.values();
  auto ov = out.values_mut();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = stable_softplus(xv[i]);
  record(out, [x, out]() mutable {
    if (!x.requires_grad()) return;
    auto gx = x.accum_grad();
    const auto go = out.grad();
    const auto xv2 = x.values();
    for (std::size_t i = 0; i < gx.size(); ++i)
      gx[i] += go[i] * stable_sigmoid(xv2[i]);
  });
  return out;
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor out = make(a.shape(), a.requires_grad() || b.requires_grad());
  const auto av = a.values();
  const auto bv = b.values();
  auto ov = out.values_mut();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + bv[i];
  record(out, [a, b, out]() mutable {
    const auto go = out.grad();
    if (a.requires_grad()) {
      auto ga = a.accum_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
    }
    if (b.requires_grad()) {
      auto gb = b.accum_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i];
    }
  });
  return out;
}

Tensor Graph::scale(const Tensor& x, double c) {
  Tensor out = make(x.shape(), x.requires_grad());
  const auto xv = x.values();
  auto ov = out.values_mut();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = c * xv[i];
  record(out, [x, out, c]() mutable {
    if (!x.requires_grad()) return;
    auto gx = x.accum_grad();
    const auto go = out.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += c * go[i];
  });
  return out;
}

Tensor Graph::mean(const Tensor& x) {
  const std::size_t n = x.size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  Tensor out = make({1}, x.requires_grad());
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  out.values_mut()[0] = acc / static_cast<double>(n);
  record(out, [x, out, n]() mutable {
    if (!x.requires_grad()) return;
    auto gx = x.accum_grad();
    const double g = out.grad()[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
  return out;
}

Tensor Graph::weighted_bce(const Tensor& logits,
                           std::span<const double> targets, double pos_weight) {
  if (pos_weight <= 0.0) {
    throw ConfigError("weighted_bce: pos_weight must be > 0, got " +
                      std::to_string(pos_weight));
  }
  const bool column = logits.shape().size() == 2 && logits.dim(1) == 1;
  if (!(logits.shape().size() == 1 || column)) {
    throw ShapeError("weighted_bce: logits must be [n] or [n,1], got " +
                     shape_str(logits.shape()));
  }
  const std::size_t n = logits.size();
  if (n != targets.size()) {
    throw ShapeError("weighted_bce: " + std::to_string(n) + " logits vs " +
                     std::to_string(targets.size()) + " targets");
  }
  if (n == 0) throw ShapeError("weighted_bce: empty batch");
  Tensor out = make({1}, logits.requires_grad());
  const auto sv = logits.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    // -y*w*log(sigma(s)) - (1-y)*log(1-sigma(s))
    acc += pos_weight * targets[i] * stable_softplus(-sv[i]) +
           (1.0 - targets[i]) * stable_softplus(sv[i]);
  }
  out.values_mut()[0] = acc / static_cast<double>(n);
  std::vector<double> y(targets.begin(), targets.end());
  record(out, [logits, out, y = std::move(y), pos_weight, n]() mutable {
    if (!logits.requires_grad()) return;
    auto gs = logits.accum_grad();
    const double g = out.grad()[0] / static_cast<double>(n);
    const auto sv2 = logits.values();
    for (std::size_t i = 0; i < n; ++i) {
      const double p = stable_sigmoid(sv2[i]);
      gs[i] += g * (pos_weight * y[i] * (p - 1.0) + (1.0 - y[i]) * p);
    }
  });
  return out;
}

Tensor Graph::multiclass_ce(const Tensor& logits, std::span<const int> labels) {
  if (logits.shape().size() != 2) {
    throw ShapeError("multiclass_ce: logits must be [n,k], got " +
                     shape_str(logits.shape()));
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (n != labels.size()) {
    throw ShapeError("multiclass_ce: " + std::to_string(n) + " rows vs " +
                     std::to_string(labels.size()) + " labels");
  }
  std::size_t n_valid = 0;
  for (int d : labels) {
    if (d >= static_cast<int>(k)) {
      throw IndexError("multiclass_ce: label " + std::to_string(d) +
                       " out of range [0," + std::to_string(k) + ")");
    }
    if (d >= 0) ++n_valid;
  }
  Tensor out = make({1}, logits.requires_grad());
  const auto sv = logits.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0) continue;
    const double* row = sv.data() + i * k;
    double mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    acc += mx + std::log(sum) - row[labels[i]];
  }
  out.values_mut()[0] = n_valid ? acc / static_cast<double>(n_valid) : 0.0;
  std::vector<int> d(labels.begin(), labels.end());
  record(out, [logits, out, d = std::move(d), n, k, n_valid]() mutable {
    if (!logits.requires_grad() || n_valid == 0) return;
    auto gs = logits.accum_grad();
    const double g = out.grad()[0] / static_cast<double>(n_valid);
    const auto sv2 = logits.values();
    for (std::size_t i = 0; i < n; ++i) {
      if (d[i] < 0) continue;
      const double* row = sv2.data() + i * k;
      double mx = row[0];
      for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
      for (std::size_t j = 0; j < k; ++j) {
        const double p = std::exp(row[j] - mx) / sum;
        gs[i * k + j] +=
            g * (p - (static_cast<int>(j) == d[i] ? 1.0 : 0.0));
      }
    }
  });
  return out;
}

Tensor Graph::grad_reverse(const Tensor& x, double lambda) {
  if (lambda < 0.0) {
    throw ConfigError("grad_reverse: lambda must be >= 0, got " +
                      std::to_string(lambda));
  }
  Tensor out = make(x.shape(), x.requires_grad());
  const auto xv = x.values();
  auto ov = out.values_mut();
  std::copy(xv.begin(), xv.end(), ov.begin());
  record(out, [x, out, lambda]() mutable {
    if (!x.requires_grad()) return;
    auto gx = x.accum_grad();
    const auto go = out.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += -lambda * go[i];
  });
  return out;
}

void Graph::backward(const Tensor& root) {
  if (root.size() != 1) {
    throw ShapeError("backward: root must be a scalar, got " +
                     shape_str(root.shape()));
  }
  if (!root.requires_grad()) {
    throw StateError("backward: root does not require gradients");
  }
  Tensor r = root;
  auto g = r.accum_grad();
  g[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->out.requires_grad() || !it->out.has_grad()) continue;
    it->pull();
  }
}

void sgd_step(std::span<Tensor> params, double lr, double weight_decay) {
  for (auto& p : params) {
    if (!p.requires_grad()) continue;
    if (!p.has_grad()) {
      throw StateError("sgd_step: parameter has no gradient; run backward()");
    }
  }
  for (auto& p : params) {
    if (!p.requires_grad()) continue;
    auto v = p.values_mut();
    const auto g = p.grad();
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] -= lr * (g[i] + weight_decay * v[i]);
    p.clear_grad();
  }
}

void clear_grads(std::span<Tensor> params) {
  for (auto& p : params)
    if (p.defined() && p.has_grad()) p.clear_grad();
}

}  // namespace magshift::ad
