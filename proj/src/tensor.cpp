#include "emoctx/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace emoctx {

namespace {

thread_local bool g_grad_enabled = true;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

using NodePtr = std::shared_ptr<detail::Node>;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Builds the output node for an op. The backward closure is attached only
// when gradient recording is on and at least one input needs a gradient.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<NodePtr> parents,
                   std::function<void(detail::Node&)> backward_fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->leaf = false;
    node->parents = std::move(parents);
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

// True if `parent` takes part in differentiation; allocates its gradient on first use.
inline bool wants_grad(const NodePtr& parent) {
  if (!parent->requires_grad) return false;
  parent->ensure_grad();
  return true;
}

const NodePtr& node_of(const Tensor& t, const char* op) {
  if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor");
  return t.node();
}

}  // namespace

std::size_t shape_product(const Shape& shape) {
  std::size_t p = 1;
  for (auto d : shape) p *= d;
  return p;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

Node::~Node() {
  // Unlink iteratively so that long recurrent chains do not recurse.
  std::vector<NodePtr> pending = std::move(parents);
  while (!pending.empty()) {
    NodePtr n = std::move(pending.back());
    pending.pop_back();
    if (n && n.use_count() == 1) {
      for (auto& p : n->parents) pending.push_back(std::move(p));
      n->parents.clear();
    }
  }
}

void Node::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

Tensor make_op(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
               std::function<void(Node&)> backward_fn) {
  std::vector<NodePtr> parents;
  parents.reserve(inputs.size());
  for (const auto& t : inputs) parents.push_back(node_of(t, "make_op"));
  return make_result(std::move(shape), std::move(values), std::move(parents),
                     std::move(backward_fn));
}

}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_mode_enabled() { return g_grad_enabled; }

// ---- Tensor -----------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape) {
    require(d >= 1, "tensor: zero dimension in shape " + shape_string(shape));
  }
  const std::size_t expected = shape_product(shape);
  if (values.size() != expected) {
    std::ostringstream os;
    os << "tensor: length " << values.size() << " != product " << expected << " of shape "
       << shape_string(shape);
    throw std::invalid_argument(os.str());
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->values = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_of(*this, "shape")->shape; }
std::size_t Tensor::size() const { return node_of(*this, "size")->values.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw std::out_of_range("tensor: axis out of range");
  return s[axis];
}

std::span<const double> Tensor::values() const { return node_of(*this, "values")->values; }
std::span<double> Tensor::mutable_values() { return node_of(*this, "values")->values; }

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item: tensor has " + std::to_string(size()) + " elements");
  return values()[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  const auto& s = shape();
  require(s.size() == 2, "at: expected a matrix, got " + shape_string(s));
  return values()[r * s[1] + c];
}

bool Tensor::requires_grad() const { return node_of(*this, "requires_grad")->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  auto& n = node_of(*this, "set_requires_grad");
  require(n->leaf, "set_requires_grad: only leaves can change gradient tracking");
  n->requires_grad = on;
}

bool Tensor::is_leaf() const { return node_of(*this, "is_leaf")->leaf; }
bool Tensor::has_grad() const { return !node_of(*this, "grad")->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_of(*this, "grad")->grad; }

std::span<double> Tensor::mutable_grad() {
  auto& n = node_of(*this, "grad");
  n->ensure_grad();
  return n->grad;
}

void Tensor::zero_grad() {
  auto& n = node_of(*this, "zero_grad");
  n->grad.assign(n->values.size(), 0.0);
}

std::vector<double> Tensor::grad_or_zero() const {
  const auto& n = node_of(*this, "grad");
  if (n->grad.empty()) return std::vector<double>(n->values.size(), 0.0);
  return n->grad;
}

Tensor Tensor::detach_copy(bool requires_grad) const {
  return Tensor(shape(), std::vector<double>(values().begin(), values().end()), requires_grad);
}

// ---- elementwise ------------------------------------------------------------

namespace {

Tensor binary(Elementwise kind, const Tensor& a, const Tensor& b) {
  const auto& na = node_of(a, "elementwise");
  const auto& nb = node_of(b, "elementwise");
  const bool broadcast = nb->values.size() == 1 && na->values.size() != 1;
  if (!broadcast && na->shape != nb->shape && !(na->values.size() == 1 && nb->values.size() == 1)) {
    throw std::invalid_argument("elementwise: incompatible shapes " + shape_string(na->shape) +
                                " and " + shape_string(nb->shape));
  }
  const std::size_t n = na->values.size();
  std::vector<double> out(n);
  const auto& av = na->values;
  const auto& bv = nb->values;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = bv[broadcast ? 0 : i];
    switch (kind) {
      case Elementwise::kAdd: out[i] = av[i] + y; break;
      case Elementwise::kSub: out[i] = av[i] - y; break;
      case Elementwise::kMul: out[i] = av[i] * y; break;
      default: throw std::logic_error("binary: not a binary kind");
    }
  }
  return make_result(na->shape, std::move(out), {na, nb}, [kind, broadcast](detail::Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    const auto& g = self.grad;
    if (wants_grad(pa)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        pa->grad[i] += kind == Elementwise::kMul ? g[i] * pb->values[broadcast ? 0 : i] : g[i];
      }
    }
    if (wants_grad(pb)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        double d = g[i];
        if (kind == Elementwise::kSub) d = -d;
        if (kind == Elementwise::kMul) d *= pa->values[i];
        pb->grad[broadcast ? 0 : i] += d;
      }
    }
  });
}

Tensor unary(Elementwise kind, const Tensor& a, double factor) {
  const auto& na = node_of(a, "elementwise");
  const auto& av = na->values;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double x = av[i];
    switch (kind) {
      case Elementwise::kSigmoid: out[i] = 1.0 / (1.0 + std::exp(-x)); break;
      case Elementwise::kTanh: out[i] = std::tanh(x); break;
      case Elementwise::kExp: out[i] = std::exp(x); break;
      case Elementwise::kLog:
        if (!(x > 0.0)) {
          throw std::domain_error("log: non-positive value " + std::to_string(x) + " at index " +
                                  std::to_string(i));
        }
        out[i] = std::log(x);
        break;
      case Elementwise::kScale: out[i] = factor * x; break;
      default: throw std::logic_error("unary: not a unary kind");
    }
  }
  return make_result(na->shape, std::move(out), {na}, [kind, factor](detail::Node& self) {
    auto& p = self.parents[0];
    if (!wants_grad(p)) return;
    const auto& g = self.grad;
    const auto& y = self.values;
    const auto& x = p->values;
    for (std::size_t i = 0; i < g.size(); ++i) {
      double d = 0.0;
      switch (kind) {
        case Elementwise::kSigmoid: d = y[i] * (1.0 - y[i]); break;
        case Elementwise::kTanh: d = 1.0 - y[i] * y[i]; break;
        case Elementwise::kExp: d = y[i]; break;
        case Elementwise::kLog: d = 1.0 / x[i]; break;
        case Elementwise::kScale: d = factor; break;
        default: break;
      }
      p->grad[i] += g[i] * d;
    }
  });
}

}  // namespace

Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor& b, double factor) {
  switch (kind) {
    case Elementwise::kAdd:
    case Elementwise::kSub:
    case Elementwise::kMul:
      return binary(kind, a, b);
    default:
      return unary(kind, a, factor);
  }
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(Elementwise::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(Elementwise::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(Elementwise::kMul, a, b); }
Tensor sigmoid(const Tensor& a) { return unary(Elementwise::kSigmoid, a, 1.0); }
Tensor tanh(const Tensor& a) { return unary(Elementwise::kTanh, a, 1.0); }
Tensor exp(const Tensor& a) { return unary(Elementwise::kExp, a, 1.0); }
Tensor log(const Tensor& a) { return unary(Elementwise::kLog, a, 1.0); }
Tensor scale(const Tensor& a, double factor) { return unary(Elementwise::kScale, a, factor); }

Tensor relu(const Tensor& a) {
  const auto& na = node_of(a, "relu");
  std::vector<double> out(na->values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, na->values[i]);
  return make_result(na->shape, std::move(out), {na}, [](detail::Node& self) {
    auto& p = self.parents[0];
    if (!wants_grad(p)) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (p->values[i] > 0.0) p->grad[i] += self.grad[i];
    }
  });
}

// ---- structural -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& na = node_of(a, "matmul");
  const auto& nb = node_of(b, "matmul");
  const bool vec = nb->shape.size() == 1;
  if (na->shape.size() != 2 || (nb->shape.size() != 2 && !vec) || na->shape[1] != nb->shape[0]) {
    throw std::invalid_argument("matmul: dimension mismatch " + shape_string(na->shape) + " x " +
                                shape_string(nb->shape));
  }
  const std::size_t m = na->shape[0], k = na->shape[1], n = vec ? 1 : nb->shape[1];
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() =
      ConstMap(na->values.data(), m, k) * ConstMap(nb->values.data(), k, n);
  Shape shape = vec ? Shape{m} : Shape{m, n};
  return make_result(std::move(shape), std::move(out), {na, nb}, [m, k, n](detail::Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    ConstMap g(self.grad.data(), m, n);
    if (wants_grad(pa)) {
      MutMap(pa->grad.data(), m, k).noalias() += g * ConstMap(pb->values.data(), k, n).transpose();
    }
    if (wants_grad(pb)) {
      MutMap(pb->grad.data(), k, n).noalias() += ConstMap(pa->values.data(), m, k).transpose() * g;
    }
  });
}

Tensor transpose(const Tensor& a) {
  const auto& na = node_of(a, "transpose");
  require(na->shape.size() == 2, "transpose: expected a matrix, got " + shape_string(na->shape));
  const std::size_t r = na->shape[0], c = na->shape[1];
  std::vector<double> out(r * c);
  MutMap(out.data(), c, r) = ConstMap(na->values.data(), r, c).transpose();
  return make_result({c, r}, std::move(out), {na}, [r, c](detail::Node& self) {
    auto& p = self.parents[0];
    if (!wants_grad(p)) return;
    MutMap(p->grad.data(), r, c) += ConstMap(self.grad.data(), c, r).transpose();
  });
}

Tensor add_row_bias(const Tensor& matrix, const Tensor& bias) {
  const auto& nm = node_of(matrix, "add_row_bias");
  const auto& nb = node_of(bias, "add_row_bias");
  if (nm->shape.size() != 2 || nb->values.size() != nm->shape[1]) {
    throw std::invalid_argument("add_row_bias: shapes " + shape_string(nm->shape) + " and " +
                                shape_string(nb->shape) + " disagree");
  }
  const std::size_t r = nm->shape[0], c = nm->shape[1];
  std::vector<double> out = nm->values;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += nb->values[j];
  return make_result(nm->shape, std::move(out), {nm, nb}, [r, c](detail::Node& self) {
    auto& pm = self.parents[0];
    auto& pb = self.parents[1];
    if (wants_grad(pm)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) pm->grad[i] += self.grad[i];
    }
    if (wants_grad(pb)) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) pb->grad[j] += self.grad[i * c + j];
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), "concat: no parts");
  const Shape& first = node_of(parts[0], "concat")->shape;
  if (axis >= first.size()) {
    throw std::invalid_argument("concat: axis " + std::to_string(axis) + " out of range for rank " +
                                std::to_string(first.size()));
  }
  std::vector<NodePtr> nodes;
  std::vector<std::size_t> extents;
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& t : parts) {
    const auto& n = node_of(t, "concat");
    bool ok = n->shape.size() == first.size();
    for (std::size_t d = 0; ok && d < first.size(); ++d) ok = d == axis || n->shape[d] == first[d];
    if (!ok) {
      throw std::invalid_argument("concat: shape " + shape_string(n->shape) + " disagrees with " +
                                  shape_string(first) + " off axis " + std::to_string(axis));
    }
    nodes.push_back(n);
    extents.push_back(n->shape[axis]);
    out_shape[axis] += n->shape[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t out_row = out_shape[axis] * inner;

  std::vector<double> out(outer * out_row);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < nodes.size(); ++p) {
    const std::size_t chunk = extents[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(nodes[p]->values.begin() + o * chunk, chunk, out.begin() + o * out_row + offset);
    }
    offset += chunk;
  }
  return make_result(std::move(out_shape), std::move(out), nodes,
                     [extents, outer, inner, out_row](detail::Node& self) {
                       std::size_t off = 0;
                       for (std::size_t p = 0; p < self.parents.size(); ++p) {
                         const std::size_t chunk = extents[p] * inner;
                         auto& parent = self.parents[p];
                         if (wants_grad(parent)) {
                           for (std::size_t o = 0; o < outer; ++o)
                             for (std::size_t i = 0; i < chunk; ++i)
                               parent->grad[o * chunk + i] += self.grad[o * out_row + off + i];
                         }
                         off += chunk;
                       }
                     });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto& na = node_of(a, "slice");
  if (axis >= na->shape.size() || begin >= end || end > na->shape[axis]) {
    throw std::invalid_argument("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                                ") on axis " + std::to_string(axis) + " invalid for " +
                                shape_string(na->shape));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= na->shape[d];
  for (std::size_t d = axis + 1; d < na->shape.size(); ++d) inner *= na->shape[d];
  const std::size_t in_row = na->shape[axis] * inner;
  const std::size_t chunk = (end - begin) * inner;
  const std::size_t off = begin * inner;
  Shape shape = na->shape;
  shape[axis] = end - begin;
  std::vector<double> out(outer * chunk);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(na->values.begin() + o * in_row + off, chunk, out.begin() + o * chunk);
  }
  return make_result(std::move(shape), std::move(out), {na},
                     [outer, in_row, chunk, off](detail::Node& self) {
                       auto& p = self.parents[0];
                       if (!wants_grad(p)) return;
                       for (std::size_t o = 0; o < outer; ++o)
                         for (std::size_t i = 0; i < chunk; ++i)
                           p->grad[o * in_row + off + i] += self.grad[o * chunk + i];
                     });
}

Tensor row(const Tensor& matrix, std::size_t index) {
  const auto& nm = node_of(matrix, "row");
  require(nm->shape.size() == 2, "row: expected a matrix, got " + shape_string(nm->shape));
  require(index < nm->shape[0], "row: index " + std::to_string(index) + " out of range for " +
                                    shape_string(nm->shape));
  const std::size_t c = nm->shape[1];
  std::vector<double> out(nm->values.begin() + index * c, nm->values.begin() + (index + 1) * c);
  return make_result({c}, std::move(out), {nm}, [index, c](detail::Node& self) {
    auto& p = self.parents[0];
    if (!wants_grad(p)) return;
    for (std::size_t j = 0; j < c; ++j) p->grad[index * c + j] += self.grad[j];
  });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  require(!rows.empty(), "stack_rows: no rows");
  const std::size_t d = node_of(rows[0], "stack_rows")->values.size();
  std::vector<NodePtr> nodes;
  std::vector<double> out;
  out.reserve(rows.size() * d);
  for (const auto& r : rows) {
    const auto& n = node_of(r, "stack_rows");
    if (n->shape.size() != 1 || n->values.size() != d) {
      throw std::invalid_argument("stack_rows: row shape " + shape_string(n->shape) +
                                  " differs from [" + std::to_string(d) + "]");
    }
    nodes.push_back(n);
    out.insert(out.end(), n->values.begin(), n->values.end());
  }
  return make_result({rows.size(), d}, std::move(out), std::move(nodes), [d](detail::Node& self) {
    for (std::size_t r = 0; r < self.parents.size(); ++r) {
      auto& p = self.parents[r];
      if (!wants_grad(p)) continue;
      for (std::size_t j = 0; j < d; ++j) p->grad[j] += self.grad[r * d + j];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  const auto& na = node_of(a, "reshape");
  if (shape_product(shape) != na->values.size()) {
    throw std::invalid_argument("reshape: " + shape_string(na->shape) + " cannot become " +
                                shape_string(shape));
  }
  return make_result(std::move(shape), na->values, {na}, [](detail::Node& self) {
    auto& p = self.parents[0];
    if (!wants_grad(p)) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  const auto& na = node_of(a, "sum");
  double s = 0.0;
  for (double v : na->values) s += v;
  return make_result({1}, {s}, {na}, [](detail::Node& self) {
    auto& p = self.parents[0];
    if (!wants_grad(p)) return;
    for (auto& g : p->grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(node_of(a, "mean")->values.size()));
}

Tensor max_over_time(const Tensor& seq, std::size_t valid_length) {
  const auto& ns = node_of(seq, "max_over_time");
  require(ns->shape.size() == 2, "max_over_time: expected [n x d], got " + shape_string(ns->shape));
  const std::size_t n = ns->shape[0], d = ns->shape[1];
  if (valid_length == 0 || valid_length > n) {
    throw std::invalid_argument("max_over_time: valid_length " + std::to_string(valid_length) +
                                " outside [1, " + std::to_string(n) + "]");
  }
  std::vector<double> out(d);
  std::vector<std::size_t> argmax(d, 0);
  for (std::size_t j = 0; j < d; ++j) {
    double best = ns->values[j];
    for (std::size_t t = 1; t < valid_length; ++t) {
      const double v = ns->values[t * d + j];
      if (v > best) {
        best = v;
        argmax[j] = t;
      }
    }
    out[j] = best;
  }
  return make_result({d}, std::move(out), {ns}, [argmax = std::move(argmax), d](detail::Node& self) {
    auto& p = self.parents[0];
    if (!wants_grad(p)) return;
    for (std::size_t j = 0; j < d; ++j) p->grad[argmax[j] * d + j] += self.grad[j];
  });
}

Tensor softmax_rows(const Tensor& logits) {
  const auto& nl = node_of(logits, "softmax_rows");
  require(nl->shape.size() == 1 || nl->shape.size() == 2,
          "softmax_rows: expected rank 1 or 2, got " + shape_string(nl->shape));
  const std::size_t cols = nl->shape.back();
  const std::size_t rows = nl->values.size() / cols;
  std::vector<double> out(nl->values.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = nl->values.data() + r * cols;
    double mx = x[0];
    for (std::size_t c = 0; c < cols; ++c) {
      if (!std::isfinite(x[c])) {
        throw std::domain_error("softmax_rows: non-finite logit at row " + std::to_string(r) +
                                ", column " + std::to_string(c));
      }
      mx = std::max(mx, x[c]);
    }
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (out[r * cols + c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= z;
  }
  return make_result(nl->shape, std::move(out), {nl}, [rows, cols](detail::Node& self) {
    auto& p = self.parents[0];
    if (!wants_grad(p)) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.values.data() + r * cols;
      const double* g = self.grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[c] * y[c];
      for (std::size_t c = 0; c < cols; ++c) p->grad[r * cols + c] += y[c] * (g[c] - dot);
    }
  });
}

// ---- autodiff driver --------------------------------------------------------

void backward(const Tensor& scalar_loss) {
  const auto& root = node_of(scalar_loss, "backward");
  if (root->values.size() != 1) {
    throw std::invalid_argument("backward: loss must have a single element, got shape " +
                                shape_string(root->shape));
  }
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* n : order) {
    if (!n->leaf) n->grad.assign(n->values.size(), 0.0);
  }
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (!n->leaf && n->backward) n->backward(*n);
  }
}

GradReport grad_report(const std::vector<NamedTensor>& params) {
  GradReport report;
  double total = 0.0;
  for (const auto& p : params) {
    double sq = 0.0;
    for (double g : p.tensor.grad()) {
      sq += g * g;
      report.max_abs_grad = std::max(report.max_abs_grad, std::abs(g));
    }
    report.per_parameter_norms[p.name] = std::sqrt(sq);
    total += sq;
  }
  report.global_l2_norm = std::sqrt(total);
  return report;
}

double finite_diff_check(const std::function<Tensor()>& loss_fn, const std::vector<Tensor>& params,
                         double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be positive");
  double baseline = 0.0;
  {
    NoGradGuard guard;
    baseline = loss_fn().item();
    if (loss_fn().item() != baseline) {
      throw std::runtime_error("finite_diff_check: loss function is not deterministic");
    }
  }

  std::vector<Tensor> ps = params;
  for (auto& p : ps) p.zero_grad();
  backward(loss_fn());
  std::vector<std::vector<double>> analytic;
  for (const auto& p : ps) analytic.push_back(p.grad_or_zero());

  NoGradGuard guard;
  double worst = 0.0;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    auto vals = ps[k].mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + eps;
      const double up = loss_fn().item();
      vals[i] = saved - eps;
      const double down = loss_fn().item();
      vals[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace emoctx
