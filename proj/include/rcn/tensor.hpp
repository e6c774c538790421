#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace rcn {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int shape_size(const Shape& s);

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // same length as value iff requires_grad
  bool requires_grad = false;
};

using NodePtr = std::shared_ptr<TensorNode>;

// Dense row-major tensor of f64 with reverse-mode gradients. A Tensor is a
// cheap shared handle: copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape);
  static Tensor ones(const Shape& shape);
  static Tensor full(const Shape& shape, double v);
  static Tensor scalar(double v);
  static Tensor from_data(const Shape& shape, std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int size() const { return static_cast<int>(node_->value.size()); }

  double* data() { return node_->value.data(); }
  const double* data() const { return node_->value.data(); }
  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }

  double operator[](int i) const { return node_->value[static_cast<std::size_t>(i)]; }
  double& operator[](int i) { return node_->value[static_cast<std::size_t>(i)]; }
  double at(std::initializer_list<int> idx) const;
  double& at(std::initializer_list<int> idx);

  // value of a one-element tensor
  double item() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool v);
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  // value-copy without gradient tracking
  Tensor detach() const;

  NodePtr node() const { return node_; }

 private:
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}
  NodePtr node_;

  friend Tensor make_tensor(const Shape&, bool);
};

// allocates an uninitialised-value tensor; grad buffer zeroed iff requires_grad
Tensor make_tensor(const Shape& shape, bool requires_grad);

// Records executed operations in order; replaying the closures in reverse
// propagates gradients. One tape per thread; cleared between training steps.
class Tape {
 public:
  static Tape& active();

  bool recording() const { return enabled_; }
  void set_enabled(bool e) { enabled_ = e; }
  void record(std::function<void()> backward);

  // Seeds d(root)/d(root) = seed and replays the tape in reverse. The tape is
  // consumed: entries are cleared afterwards so a following forward pass
  // starts fresh. Gradients accumulate into every requires_grad tensor
  // reachable from the recorded graph.
  void backward(const Tensor& root, double seed = 1.0);

  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<std::function<void()>> entries_;
  bool enabled_ = true;
};

// RAII guard suspending tape recording (evaluation / finite differences).
struct NoGradScope {
  NoGradScope() : prev_(Tape::active().recording()) { Tape::active().set_enabled(false); }
  ~NoGradScope() { Tape::active().set_enabled(prev_); }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool prev_;
};

// ---------------------------------------------------------------------------
// Elementary operations. Broadcasting: shapes must match exactly, or the
// smaller operand's shape must be a trailing suffix of the larger one's (the
// smaller is then repeated over the leading batch axes). One-element tensors
// broadcast against anything.
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor neg(const Tensor& a);

// [m,k]x[k,n] -> [m,n]; [m,k]x[k] -> [m]; [k]x[k,n] -> [n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);  // 2-D
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
// half-open [start, end) along axis
Tensor slice(const Tensor& a, int axis, int start, int end);

Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, int axis);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, int axis);
// max reductions; ties give gradient to the first attaining element
Tensor max(const Tensor& a);
Tensor max(const Tensor& a, int axis);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

// softmax along `axis`, max-subtracted; rejects non-finite input
Tensor softmax(const Tensor& a, int axis);
// log(1 + exp(x)) with the overflow-safe branch x + log1p(exp(-x)) for x > 0
Tensor softplus(const Tensor& a);
// Euclidean projection of a vector onto the probability simplex
// (sort-and-threshold). Backward uses the support-restricted Jacobian.
Tensor sparsemax(const Tensor& a);
// normalise over the last axis (eps = 1e-5 inside the root), then affine
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& shift);

}  // namespace rcn
