#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace emoctx {

using Shape = std::vector<std::size_t>;

std::size_t shape_product(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct Node;
}

// Dense row-major tensor of doubles with an optional reverse-mode tape entry.
//
// Tensor is a cheap handle: copies share the same storage and gradient. Any
// op applied to a tensor that requires gradients records a backward closure
// on the produced tensor, so a forward pass builds the graph as it runs.
class Tensor {
 public:
  Tensor() = default;

  // Leaf constructor. Throws std::invalid_argument when the value count does
  // not match the shape, or when a dimension is zero.
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }

  std::span<const double> values() const;
  // Direct mutable access for optimizers and finite-difference probes.
  // Writing through it does not touch any recorded graph.
  std::span<double> mutable_values();

  double item() const;
  double operator[](std::size_t flat) const { return values()[flat]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;

  bool has_grad() const;
  // Empty span when no gradient has been allocated.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  // Allocates (if needed) and fills the gradient with zeros.
  void zero_grad();
  // Returns the gradient, or zeros of the right size when none is present.
  std::vector<double> grad_or_zero() const;

  // Deep copy of values into a fresh leaf.
  Tensor detach_copy(bool requires_grad = false) const;

  // Internal: used by op implementations.
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  ~Node();
  void ensure_grad();
};

// Records an op defined outside the tensor core. `backward_fn` receives the
// output node; it must add into `parents[i]->grad` only for parents with
// requires_grad set (call ensure_grad() first).
Tensor make_op(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
               std::function<void(Node&)> backward_fn);

}  // namespace detail

// While alive on the current thread, ops do not record graph entries.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

// ---- elementwise ----------------------------------------------------------

enum class Elementwise { kAdd, kSub, kMul, kSigmoid, kTanh, kExp, kLog, kScale };

// Binary kinds take `b` with the same shape as `a` or a single element
// (broadcast). kScale uses `factor`. Unary kinds ignore `b`.
Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor& b = {},
                   double factor = 1.0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);

// ---- structural -----------------------------------------------------------

// [m×k]·[k×n] -> [m×n]; a rank-1 right operand [k] yields [m].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// Adds a [cols] bias to every row of a [rows×cols] matrix.
Tensor add_row_bias(const Tensor& matrix, const Tensor& bias);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
// Row `index` of a [rows×cols] matrix as a [cols] vector.
Tensor row(const Tensor& matrix, std::size_t index);
// Stacks equally sized rank-1 tensors into [count×d].
Tensor stack_rows(const std::vector<Tensor>& rows);
Tensor reshape(const Tensor& a, Shape shape);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Column-wise maximum over the first `valid_length` rows of [n×d]. The
// gradient goes to the first row attaining each column's maximum.
Tensor max_over_time(const Tensor& seq, std::size_t valid_length);

// Row-wise softmax of [b×c] with max subtraction; a rank-1 input is treated
// as a single row.
Tensor softmax_rows(const Tensor& logits);

// ---- autodiff driver ------------------------------------------------------

// Back-propagates from a single-element tensor. Leaf gradients accumulate
// across calls; interior gradients are recomputed on each call.
void backward(const Tensor& scalar_loss);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct GradReport {
  double max_abs_grad = 0.0;
  double global_l2_norm = 0.0;
  std::map<std::string, double> per_parameter_norms;
};

GradReport grad_report(const std::vector<NamedTensor>& params);

// Largest |analytic - central difference| / max(1, |analytic|, |numeric|)
// over every coordinate of `params`. `loss_fn` must be deterministic.
double finite_diff_check(const std::function<Tensor()>& loss_fn,
                         const std::vector<Tensor>& params, double eps = 1e-5);

}  // namespace emoctx
