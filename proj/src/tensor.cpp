#include "rcn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace rcn {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

int shape_size(const Shape& s) {
  int n = 1;
  for (int e : s) n *= e;
  return n;
}

namespace {

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void check_shape(const Shape& s, const std::string& op) {
  for (int e : s) {
    if (e <= 0) throw std::invalid_argument(op + ": non-positive extent in " + shape_str(s));
  }
}

// a broadcasts over b (or vice versa) iff one shape is a trailing suffix of
// the other, or one operand has a single element.
enum class Bcast { kNone, kBIsSuffix, kAIsSuffix };

bool is_suffix(const Shape& suf, const Shape& full) {
  if (suf.size() > full.size()) return false;
  return std::equal(suf.rbegin(), suf.rend(), full.rbegin());
}

Bcast resolve_bcast(const std::string& op, const Shape& a, const Shape& b) {
  if (a == b) return Bcast::kBIsSuffix;  // degenerate: modulo does nothing
  if (shape_size(b) == 1 || is_suffix(b, a)) return Bcast::kBIsSuffix;
  if (shape_size(a) == 1 || is_suffix(a, b)) return Bcast::kAIsSuffix;
  shape_error(op, a, b);
}

bool want_grad(std::initializer_list<Tensor> inputs) {
  if (!Tape::active().recording()) return false;
  for (const Tensor& t : inputs) {
    if (t.requires_grad()) return true;
  }
  return false;
}

// splits a shape around `axis` into (outer, len, inner) for line iteration
struct AxisSplit {
  int outer = 1, len = 1, inner = 1;
};

AxisSplit axis_split(const Shape& s, int axis, const std::string& op) {
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw std::invalid_argument(op + ": axis " + std::to_string(axis) + " out of range for " +
                                shape_str(s));
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (int i = axis + 1; i < static_cast<int>(s.size()); ++i) r.inner *= s[i];
  return r;
}

using BinFn = double (*)(double, double);

Tensor binary_op(const std::string& name, const Tensor& a, const Tensor& b, BinFn fwd,
                 // local gradients as functions of (a, b) element values
                 double (*da)(double, double), double (*db)(double, double)) {
  Bcast mode = resolve_bcast(name, a.shape(), b.shape());
  const Tensor& big = (mode == Bcast::kBIsSuffix) ? a : b;
  const Tensor& small = (mode == Bcast::kBIsSuffix) ? b : a;
  const int n = big.size(), m = small.size();

  Tensor out = make_tensor(big.shape(), want_grad({a, b}));
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  if (mode == Bcast::kBIsSuffix) {
    for (int i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i % m]);
  } else {
    for (int i = 0; i < n; ++i) po[i] = fwd(pa[i % m], pb[i]);
  }

  if (out.requires_grad()) {
    NodePtr na = a.node(), nb = b.node(), no = out.node();
    Tape::active().record([na, nb, no, mode, n, m, da, db]() {
      const double* va = na->value.data();
      const double* vb = nb->value.data();
      const double* og = no->grad.data();
      for (int i = 0; i < n; ++i) {
        const int ia = (mode == Bcast::kBIsSuffix) ? i : i % m;
        const int ib = (mode == Bcast::kBIsSuffix) ? i % m : i;
        const double x = va[ia], y = vb[ib], g = og[i];
        if (na->requires_grad) na->grad[ia] += g * da(x, y);
        if (nb->requires_grad) nb->grad[ib] += g * db(x, y);
      }
    });
  }
  return out;
}

Tensor unary_op(const Tensor& a, double (*fwd)(double), double (*dfdx)(double, double)) {
  // dfdx receives (x, f(x)) so activations can reuse the forward value
  Tensor out = make_tensor(a.shape(), want_grad({a}));
  const int n = a.size();
  const double* pa = a.data();
  double* po = out.data();
  for (int i = 0; i < n; ++i) po[i] = fwd(pa[i]);

  if (out.requires_grad()) {
    NodePtr na = a.node(), no = out.node();
    Tape::active().record([na, no, n, dfdx]() {
      if (!na->requires_grad) return;
      for (int i = 0; i < n; ++i) na->grad[i] += no->grad[i] * dfdx(na->value[i], no->value[i]);
    });
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor make_tensor(const Shape& shape, bool requires_grad) {
  check_shape(shape, "tensor");
  auto node = std::make_shared<TensorNode>();
  node->shape = shape;
  node->value.resize(static_cast<std::size_t>(shape_size(shape)));
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->value.size(), 0.0);
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(const Shape& shape) { return full(shape, 0.0); }
Tensor Tensor::ones(const Shape& shape) { return full(shape, 1.0); }

Tensor Tensor::full(const Shape& shape, double v) {
  Tensor t = make_tensor(shape, false);
  std::fill(t.values().begin(), t.values().end(), v);
  return t;
}

Tensor Tensor::scalar(double v) { return full({1}, v); }

Tensor Tensor::from_data(const Shape& shape, std::vector<double> data) {
  check_shape(shape, "tensor");
  if (static_cast<int>(data.size()) != shape_size(shape))
    throw std::invalid_argument("from_data: " + std::to_string(data.size()) +
                                " values for shape " + shape_str(shape));
  Tensor t = make_tensor(shape, false);
  t.values() = std::move(data);
  return t;
}

namespace {
int flat_index(const Shape& shape, std::initializer_list<int> idx) {
  if (idx.size() != shape.size())
    throw std::invalid_argument("at: rank mismatch for " + shape_str(shape));
  int flat = 0;
  int d = 0;
  for (int i : idx) {
    if (i < 0 || i >= shape[d])
      throw std::out_of_range("at: index out of range for " + shape_str(shape));
    flat = flat * shape[d] + i;
    ++d;
  }
  return flat;
}
}  // namespace

double Tensor::at(std::initializer_list<int> idx) const {
  return node_->value[static_cast<std::size_t>(flat_index(node_->shape, idx))];
}

double& Tensor::at(std::initializer_list<int> idx) {
  return node_->value[static_cast<std::size_t>(flat_index(node_->shape, idx))];
}

double Tensor::item() const {
  if (!node_ || node_->value.size() != 1)
    throw std::invalid_argument("item: tensor is not a scalar");
  return node_->value[0];
}

Tensor& Tensor::set_requires_grad(bool v) {
  node_->requires_grad = v;
  if (v) {
    node_->grad.assign(node_->value.size(), 0.0);
  } else {
    node_->grad.clear();
  }
  return *this;
}

std::vector<double>& Tensor::grad() {
  if (!requires_grad()) throw std::logic_error("grad: tensor does not require gradients");
  return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!requires_grad()) throw std::logic_error("grad: tensor does not require gradients");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (requires_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  Tensor t = make_tensor(node_->shape, false);
  t.values() = node_->value;
  return t;
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Tape& Tape::active() {
  thread_local Tape tape;
  return tape;
}

void Tape::record(std::function<void()> backward) {
  entries_.push_back(std::move(backward));
}

void Tape::backward(const Tensor& root, double seed) {
  if (root.size() != 1) throw std::invalid_argument("backward: root must be a scalar");
  if (!root.requires_grad())
    throw std::logic_error("backward: root does not require gradients");
  root.node()->grad[0] += seed;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  entries_.clear();
}

// ---------------------------------------------------------------------------
// arithmetic
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = make_tensor(a.shape(), want_grad({a}));
  const int n = a.size();
  for (int i = 0; i < n; ++i) out[i] = a[i] * c;
  if (out.requires_grad()) {
    NodePtr na = a.node(), no = out.node();
    Tape::active().record([na, no, n, c]() {
      for (int i = 0; i < n; ++i) na->grad[i] += no->grad[i] * c;
    });
  }
  return out;
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  const bool a_vec = a.ndim() == 1;
  const bool b_vec = b.ndim() == 1;
  if ((a.ndim() != 2 && !a_vec) || (b.ndim() != 2 && !b_vec))
    shape_error("matmul", a.shape(), b.shape());

  const int m = a_vec ? 1 : a.shape()[0];
  const int k = a_vec ? a.shape()[0] : a.shape()[1];
  const int k2 = b_vec ? b.shape()[0] : b.shape()[0];
  const int n = b_vec ? 1 : b.shape()[1];
  if (k != k2) shape_error("matmul", a.shape(), b.shape());

  Shape out_shape;
  if (a_vec && b_vec) shape_error("matmul", a.shape(), b.shape());
  if (a_vec) out_shape = {n};
  else if (b_vec) out_shape = {m};
  else out_shape = {m, n};

  Tensor out = make_tensor(out_shape, want_grad({a, b}));
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += pa[i * k + t] * pb[t * n + j];
      po[i * n + j] = acc;
    }
  }

  if (out.requires_grad()) {
    NodePtr na = a.node(), nb = b.node(), no = out.node();
    Tape::active().record([na, nb, no, m, n, k]() {
      const double* va = na->value.data();
      const double* vb = nb->value.data();
      const double* og = no->grad.data();
      if (na->requires_grad) {
        double* ga = na->grad.data();
        for (int i = 0; i < m; ++i)
          for (int t = 0; t < k; ++t) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += og[i * n + j] * vb[t * n + j];
            ga[i * k + t] += acc;
          }
      }
      if (nb->requires_grad) {
        double* gb = nb->grad.data();
        for (int t = 0; t < k; ++t)
          for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i) acc += va[i * k + t] * og[i * n + j];
            gb[t * n + j] += acc;
          }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2)
    throw std::invalid_argument("transpose: expected 2-D tensor, got " + shape_str(a.shape()));
  const int m = a.shape()[0], n = a.shape()[1];
  Tensor out = make_tensor({n, m}, want_grad({a}));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  if (out.requires_grad()) {
    NodePtr na = a.node(), no = out.node();
    Tape::active().record([na, no, m, n]() {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) na->grad[i * n + j] += no->grad[j * m + i];
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  check_shape(shape, "reshape");
  if (shape_size(shape) != a.size()) shape_error("reshape", a.shape(), shape);
  Tensor out = make_tensor(shape, want_grad({a}));
  out.values() = a.values();
  if (out.requires_grad()) {
    NodePtr na = a.node(), no = out.node();
    const int n = a.size();
    Tape::active().record([na, no, n]() {
      for (int i = 0; i < n; ++i) na->grad[i] += no->grad[i];
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Shape out_shape = parts[0].shape();
  AxisSplit base = axis_split(out_shape, axis, "concat");
  int total_len = 0;
  bool needs = Tape::active().recording();
  bool any_grad = false;
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) shape_error("concat", out_shape, s);
    for (std::size_t d = 0; d < s.size(); ++d)
      if (static_cast<int>(d) != axis && s[d] != out_shape[d]) shape_error("concat", out_shape, s);
    total_len += s[axis];
    any_grad = any_grad || p.requires_grad();
  }
  out_shape[axis] = total_len;
  Tensor out = make_tensor(out_shape, needs && any_grad);

  double* po = out.data();
  int offset = 0;
  for (const Tensor& p : parts) {
    const int len = p.shape()[axis];
    const double* pp = p.data();
    for (int o = 0; o < base.outer; ++o)
      for (int l = 0; l < len; ++l)
        for (int in = 0; in < base.inner; ++in)
          po[(o * total_len + offset + l) * base.inner + in] = pp[(o * len + l) * base.inner + in];
    offset += len;
  }

  if (out.requires_grad()) {
    std::vector<NodePtr> nodes;
    std::vector<int> lens;
    for (const Tensor& p : parts) {
      nodes.push_back(p.node());
      lens.push_back(p.shape()[axis]);
    }
    NodePtr no = out.node();
    const AxisSplit bs = base;
    Tape::active().record([nodes, lens, no, bs, total_len]() {
      int off = 0;
      for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
        const int len = lens[pi];
        if (nodes[pi]->requires_grad) {
          double* g = nodes[pi]->grad.data();
          const double* og = no->grad.data();
          for (int o = 0; o < bs.outer; ++o)
            for (int l = 0; l < len; ++l)
              for (int in = 0; in < bs.inner; ++in)
                g[(o * len + l) * bs.inner + in] +=
                    og[(o * total_len + off + l) * bs.inner + in];
        }
        off += len;
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& a, int axis, int start, int end) {
  AxisSplit sp = axis_split(a.shape(), axis, "slice");
  if (start < 0 || end > sp.len || start >= end)
    throw std::invalid_argument("slice: range [" + std::to_string(start) + "," +
                                std::to_string(end) + ") invalid for " + shape_str(a.shape()));
  Shape out_shape = a.shape();
  const int len = end - start;
  out_shape[axis] = len;
  Tensor out = make_tensor(out_shape, want_grad({a}));
  const double* pa = a.data();
  double* po = out.data();
  for (int o = 0; o < sp.outer; ++o)
    for (int l = 0; l < len; ++l)
      for (int in = 0; in < sp.inner; ++in)
        po[(o * len + l) * sp.inner + in] = pa[(o * sp.len + start + l) * sp.inner + in];

  if (out.requires_grad()) {
    NodePtr na = a.node(), no = out.node();
    Tape::active().record([na, no, sp, start, len]() {
      for (int o = 0; o < sp.outer; ++o)
        for (int l = 0; l < len; ++l)
          for (int in = 0; in < sp.inner; ++in)
            na->grad[(o * sp.len + start + l) * sp.inner + in] +=
                no->grad[(o * len + l) * sp.inner + in];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

namespace {

Tensor reduce_full(const Tensor& a, bool is_mean) {
  const int n = a.size();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += a[i];
  const double w = is_mean ? 1.0 / n : 1.0;
  Tensor out = make_tensor({1}, want_grad({a}));
  out[0] = acc * w;
  if (out.requires_grad()) {
    NodePtr na = a.node(), no = out.node();
    Tape::active().record([na, no, n, w]() {
      const double g = no->grad[0] * w;
      for (int i = 0; i < n; ++i) na->grad[i] += g;
    });
  }
  return out;
}

Tensor reduce_axis(const Tensor& a, int axis, bool is_mean, const std::string& op) {
  AxisSplit sp = axis_split(a.shape(), axis, op);
  Shape out_shape;
  for (int d = 0; d < static_cast<int>(a.shape().size()); ++d)
    if (d != axis) out_shape.push_back(a.shape()[d]);
  if (out_shape.empty()) out_shape = {1};
  const double w = is_mean ? 1.0 / sp.len : 1.0;

  Tensor out = make_tensor(out_shape, want_grad({a}));
  const double* pa = a.data();
  double* po = out.data();
  for (int o = 0; o < sp.outer; ++o)
    for (int in = 0; in < sp.inner; ++in) {
      double acc = 0.0;
      for (int l = 0; l < sp.len; ++l) acc += pa[(o * sp.len + l) * sp.inner + in];
      po[o * sp.inner + in] = acc * w;
    }

  if (out.requires_grad()) {
    NodePtr na = a.node(), no = out.node();
    Tape::active().record([na, no, sp, w]() {
      for (int o = 0; o < sp.outer; ++o)
        for (int in = 0; in < sp.inner; ++in) {
          const double g = no->grad[o * sp.inner + in] * w;
          for (int l = 0; l < sp.len; ++l) na->grad[(o * sp.len + l) * sp.inner + in] += g;
        }
    });
  }
  return out;
}

}  // namespace

Tensor sum(const Tensor& a) { return reduce_full(a, false); }
Tensor sum(const Tensor& a, int axis) { return reduce_axis(a, axis, false, "sum"); }
Tensor mean(const Tensor& a) { return reduce_full(a, true); }
Tensor mean(const Tensor& a, int axis) { return reduce_axis(a, axis, true, "mean"); }

Tensor max(const Tensor& a) {
  const int n = a.size();
  int arg = 0;
  for (int i = 1; i < n; ++i)
    if (a[i] > a[arg]) arg = i;
  Tensor out = make_tensor({1}, want_grad({a}));
  out[0] = a[arg];
  if (out.requires_grad()) {
    NodePtr na = a.node(), no = out.node();
    Tape::active().record([na, no, arg]() { na->grad[arg] += no->grad[0]; });
  }
  return out;
}

Tensor max(const Tensor& a, int axis) {
  AxisSplit sp = axis_split(a.shape(), axis, "max");
  Shape out_shape;
  for (int d = 0; d < static_cast<int>(a.shape().size()); ++d)
    if (d != axis) out_shape.push_back(a.shape()[d]);
  if (out_shape.empty()) out_shape = {1};

  Tensor out = make_tensor(out_shape, want_grad({a}));
  std::vector<int> argmax(static_cast<std::size_t>(sp.outer * sp.inner));
  const double* pa = a.data();
  for (int o = 0; o < sp.outer; ++o)
    for (int in = 0; in < sp.inner; ++in) {
      int arg = 0;
      double best = pa[(o * sp.len) * sp.inner + in];
      for (int l = 1; l < sp.len; ++l) {
        const double v = pa[(o * sp.len + l) * sp.inner + in];
        if (v > best) {
          best = v;
          arg = l;
        }
      }
      out[o * sp.inner + in] = best;
      argmax[static_cast<std::size_t>(o * sp.inner + in)] = arg;
    }

  if (out.requires_grad()) {
    NodePtr na = a.node(), no = out.node();
    Tape::active().record([na, no, sp, argmax]() {
      for (int o = 0; o < sp.outer; ++o)
        for (int in = 0; in < sp.inner; ++in) {
          const int l = argmax[static_cast<std::size_t>(o * sp.inner + in)];
          na->grad[(o * sp.len + l) * sp.inner + in] += no->grad[o * sp.inner + in];
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (int i = 0; i < a.size(); ++i)
    if (a[i] <= 0.0) throw std::domain_error("log: non-positive input");
  return unary_op(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor softplus(const Tensor& a) {
  return unary_op(
      a,
      [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor softmax(const Tensor& a, int axis) {
  AxisSplit sp = axis_split(a.shape(), axis, "softmax");
  for (int i = 0; i < a.size(); ++i)
    if (std::isnan(a[i])) throw std::domain_error("softmax: NaN input");

  Tensor out = make_tensor(a.shape(), want_grad({a}));
  const double* pa = a.data();
  double* po = out.data();
  for (int o = 0; o < sp.outer; ++o)
    for (int in = 0; in < sp.inner; ++in) {
      double m = -1e308;
      for (int l = 0; l < sp.len; ++l) m = std::max(m, pa[(o * sp.len + l) * sp.inner + in]);
      double z = 0.0;
      for (int l = 0; l < sp.len; ++l) {
        const int idx = (o * sp.len + l) * sp.inner + in;
        po[idx] = std::exp(pa[idx] - m);
        z += po[idx];
      }
      for (int l = 0; l < sp.len; ++l) po[(o * sp.len + l) * sp.inner + in] /= z;
    }

  if (out.requires_grad()) {
    NodePtr na = a.node(), no = out.node();
    Tape::active().record([na, no, sp]() {
      const double* y = no->value.data();
      const double* og = no->grad.data();
      for (int o = 0; o < sp.outer; ++o)
        for (int in = 0; in < sp.inner; ++in) {
          double dot = 0.0;
          for (int l = 0; l < sp.len; ++l) {
            const int idx = (o * sp.len + l) * sp.inner + in;
            dot += og[idx] * y[idx];
          }
          for (int l = 0; l < sp.len; ++l) {
            const int idx = (o * sp.len + l) * sp.inner + in;
            na->grad[idx] += y[idx] * (og[idx] - dot);
          }
        }
    });
  }
  return out;
}

Tensor sparsemax(const Tensor& a) {
  if (a.ndim() != 1 || a.size() < 1)
    throw std::invalid_argument("sparsemax: expected a non-empty vector, got " +
                                shape_str(a.shape()));
  const int n = a.size();
  std::vector<double> z(a.values());
  std::sort(z.begin(), z.end(), std::greater<double>());
  // k(z) = max{k : 1 + k z_(k) > sum_{j<=k} z_(j)}; tau = (prefix sum - 1) / k
  double cumsum = 0.0, tau = 0.0;
  for (int k = 1; k <= n; ++k) {
    cumsum += z[static_cast<std::size_t>(k - 1)];
    if (1.0 + k * z[static_cast<std::size_t>(k - 1)] > cumsum) tau = (cumsum - 1.0) / k;
  }

  Tensor out = make_tensor(a.shape(), want_grad({a}));
  for (int i = 0; i < n; ++i) out[i] = std::max(a[i] - tau, 0.0);

  if (out.requires_grad()) {
    NodePtr na = a.node(), no = out.node();
    Tape::active().record([na, no, n]() {
      // support-restricted Jacobian: uniform subtraction over the support set
      int cnt = 0;
      double gsum = 0.0;
      for (int i = 0; i < n; ++i)
        if (no->value[i] > 0.0) {
          ++cnt;
          gsum += no->grad[i];
        }
      const double avg = gsum / cnt;
      for (int i = 0; i < n; ++i)
        if (no->value[i] > 0.0) na->grad[i] += no->grad[i] - avg;
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& shift) {
  if (a.ndim() < 1) throw std::invalid_argument("layer_norm: rank-0 input");
  const int d = a.shape().back();
  if (gain.size() != d || shift.size() != d)
    throw std::invalid_argument("layer_norm: gain/shift must have " + std::to_string(d) +
                                " elements");
  constexpr double kEps = 1e-5;
  const int lines = a.size() / d;

  Tensor out = make_tensor(a.shape(), want_grad({a, gain, shift}));
  std::vector<double> inv_sigma(static_cast<std::size_t>(lines));
  std::vector<double> norm(static_cast<std::size_t>(a.size()));
  const double* pa = a.data();
  for (int r = 0; r < lines; ++r) {
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += pa[r * d + j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = pa[r * d + j] - mu;
      var += c * c;
    }
    var /= d;
    const double is = 1.0 / std::sqrt(var + kEps);
    inv_sigma[static_cast<std::size_t>(r)] = is;
    for (int j = 0; j < d; ++j) {
      const double z = (pa[r * d + j] - mu) * is;
      norm[static_cast<std::size_t>(r * d + j)] = z;
      out[r * d + j] = gain[j] * z + shift[j];
    }
  }

  if (out.requires_grad()) {
    NodePtr na = a.node(), ng = gain.node(), ns = shift.node(), no = out.node();
    Tape::active().record([na, ng, ns, no, lines, d, inv_sigma, norm]() {
      const double* og = no->grad.data();
      for (int r = 0; r < lines; ++r) {
        const double is = inv_sigma[static_cast<std::size_t>(r)];
        double mean_dz = 0.0, mean_dzz = 0.0;
        for (int j = 0; j < d; ++j) {
          const double z = norm[static_cast<std::size_t>(r * d + j)];
          const double dz = og[r * d + j] * ng->value[static_cast<std::size_t>(j)];
          mean_dz += dz;
          mean_dzz += dz * z;
          if (ng->requires_grad) ng->grad[static_cast<std::size_t>(j)] += og[r * d + j] * z;
          if (ns->requires_grad) ns->grad[static_cast<std::size_t>(j)] += og[r * d + j];
        }
        mean_dz /= d;
        mean_dzz /= d;
        if (na->requires_grad) {
          for (int j = 0; j < d; ++j) {
            const double z = norm[static_cast<std::size_t>(r * d + j)];
            const double dz = og[r * d + j] * ng->value[static_cast<std::size_t>(j)];
            na->grad[r * d + j] += is * (dz - mean_dz - z * mean_dzz);
          }
        }
      }
    });
  }
  return out;
}

}  // namespace rcn
