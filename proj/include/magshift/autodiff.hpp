#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace magshift::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

// Dense double-precision tensor with an optional gradient buffer. Copies are
// shallow: two Tensor handles may share one storage, which is how parameters
// stay live across training steps while graphs come and go.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return s_ != nullptr; }
  const Shape& shape() const { return s_->shape; }
  std::size_t size() const { return s_->value.size(); }
  std::size_t dim(std::size_t i) const { return s_->shape[i]; }

  std::span<const double> values() const { return s_->value; }
  std::span<double> values_mut() { return s_->value; }

  bool requires_grad() const { return s_ && s_->requires_grad; }
  bool has_grad() const { return s_ && !s_->grad.empty(); }
  std::span<const double> grad() const { return s_->grad; }
  void clear_grad() {
    s_->grad.clear();
    s_->grad.shrink_to_fit();
  }

  // Value of a single-element tensor.
  double item() const;

  // Deep copy with detached storage (used for parameter snapshots).
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  friend class Graph;
  friend void sgd_step(std::span<Tensor> params, double lr,
                       double weight_decay);

  struct Storage {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until backward touches this tensor
    bool requires_grad = false;
  };

  // Allocates (zero-filled) the gradient buffer if absent.
  std::span<double> accum_grad() {
    if (s_->grad.empty()) s_->grad.assign(s_->value.size(), 0.0);
    return s_->grad;
  }

  std::shared_ptr<Storage> s_;
};

// Reverse-mode tape. Operations append records in execution order, which is a
// topological order of the DAG; backward() replays them once, in reverse.
// A Graph and the tensors recorded on it are confined to one thread.
class Graph {
 public:
  // out = x @ w + b (row-wise bias), x: [n,a], w: [a,b], b: [b].
  Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

  Tensor relu(const Tensor& x);
  Tensor sigmoid(const Tensor& x);
  Tensor softplus(const Tensor& x);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& x, double c);
  Tensor mean(const Tensor& x);

  // Mean over samples of -[w*y*log(sigma(s)) + (1-y)*log(1-sigma(s))] with
  // w = pos_weight on the positive class, in softplus form so any finite
  // logit is safe. logits: [n] or [n,1].
  Tensor weighted_bce(const Tensor& logits, std::span<const double> targets,
                      double pos_weight);

  // Mean over samples of -log softmax(logits)[label]. logits: [n,k].
  // A label of -1 excludes that row from the mean (used for samples that
  // carry no domain tag); if every row is excluded the loss is 0.
  Tensor multiclass_ce(const Tensor& logits, std::span<const int> labels);

  // Identity in the forward pass; scales the incoming gradient by -lambda on
  // the way back.
  Tensor grad_reverse(const Tensor& x, double lambda);

  // Accumulates gradients of `root` (a scalar) into every tensor on the tape
  // that requires them.
  void backward(const Tensor& root);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor out;
    std::function<void()> pull;  // chain rule into the node's inputs
  };

  Tensor make(Shape shape, bool requires_grad);
  void record(const Tensor& out, std::function<void()> pull);

  std::vector<Node> nodes_;
};

// p <- p - lr * (grad + weight_decay * p) for every parameter, then clears
// the gradients. A parameter with no populated gradient is a usage bug.
void sgd_step(std::span<Tensor> params, double lr, double weight_decay);

void clear_grads(std::span<Tensor> params);

}  // namespace magshift::ad
