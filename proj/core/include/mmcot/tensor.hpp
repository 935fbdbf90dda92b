#pragma once

// Dense float64 tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a shared node. Leaves created with
// requires_grad = true are trainable parameters; every op whose inputs
// track gradients records its parents and a local backward rule. Calling
// backward() on a scalar builds a ComputationTape (reverse topological
// order over the reachable graph) and replays it once.
//
// There is no global state: independent graphs may be built and
// differentiated concurrently on different threads.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mmcot {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  // An empty 0-element tensor of shape {0}.
  Tensor();

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // Row-major matrix from nested rows; all rows must share a width.
  static Tensor matrix(const std::vector<std::vector<double>>& rows, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor uniform(Shape shape, double lo, double hi, std::mt19937_64& rng,
                        bool requires_grad = false);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // Matrix accessors; rows() of a rank-1 tensor is 1.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  // Writable storage. Only meaningful on leaves (parameters, inputs).
  std::span<double> mutable_data();
  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::size_t row, std::size_t col) const;
  double item() const;

  bool requires_grad() const;
  bool is_leaf() const;
  void set_requires_grad(bool flag);

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();
  void clear_grad();

  // Same values, no history, no gradient tracking.
  Tensor detach() const;
  // Deep copy of values into a fresh leaf with the same requires_grad flag.
  Tensor clone() const;

  // Process-unique node identity.
  std::uint64_t id() const;
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  // Internal: used by op implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty when absent
  bool requires_grad = false;
  bool leaf = true;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;
};

}  // namespace detail

// Ordered record of the differentiable nodes reachable from a root,
// in reverse topological order (root first, every node before its parents).
class ComputationTape {
 public:
  static ComputationTape record(const Tensor& root);

  std::size_t size() const { return order_.size(); }
  std::vector<std::uint64_t> node_ids() const;
  // Seeds d(root)/d(root) = 1 and propagates; leaf grads accumulate.
  void replay_backward() const;

 private:
  std::vector<std::shared_ptr<detail::Node>> order_;
};

// ---- primitive ops ---------------------------------------------------------

enum class Elementwise { add, sub, mul };

Tensor elementwise(Elementwise op, const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// 1 - x, elementwise.
Tensor one_minus(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
// x[m×n] + b[n] added to every row.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);

Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

Tensor concat_last(const Tensor& a, const Tensor& b);
// Rank-1 result of width n.
Tensor mean_rows(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Rank-1 input scaled to unit Euclidean norm; zero input is a ContractError.
Tensor l2_normalize(const Tensor& v);
// Stack equal-width rank-1 tensors into a matrix.
Tensor stack_rows(std::span<const Tensor> rows);
// out[i] = table[ids[i]].
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
// Mean of x[t, index[t]] over the t where index[t] != skip.
Tensor pick_mean(const Tensor& x, std::span<const std::size_t> index, std::size_t skip);

// ---- differentiation & optimisation ---------------------------------------

// loss must hold exactly one element.
void backward(const Tensor& loss);

// p <- p - lr * grad for every parameter, then zero the grads. With
// max_norm > 0 the step is scaled so the global gradient norm is at most max_norm.
void sgd_step(std::span<Tensor> params, double lr, double max_norm = 0.0);

double grad_norm(std::span<const Tensor> params);

}  // namespace mmcot
