#include "mmcot/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "mmcot/error.hpp"

namespace mmcot {

namespace {

std::uint64_t next_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

void require_finite(std::span<const double> values, const char* where) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NonFiniteError(std::string(where) + ": non-finite value");
    }
  }
}

std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor: shape " + shape_to_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  require_finite(data, "tensor");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->id = next_id();
  return node;
}

// Result of an op. Gradient tracking is enabled iff any input tracks.
Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(detail::Node&)> rule) {
  require_finite(data, op);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->id = next_id();
  node->leaf = false;
  for (const Tensor* in : inputs) {
    if (in->requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    for (const Tensor* in : inputs) node->parents.push_back(in->node());
    node->backward = std::move(rule);
  }
  return Tensor(std::move(node));
}

void accumulate(detail::Node& parent, std::size_t i, double g) {
  if (parent.requires_grad) parent.grad[i] += g;
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << "x";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor() : node_(make_node(Shape{0}, {}, false)) {}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> values(shape_numel(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from(Shape{}, {value}, requires_grad); }

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows, bool requires_grad) {
  const std::size_t m = rows.size();
  const std::size_t n = m == 0 ? 0 : rows.front().size();
  std::vector<double> values;
  values.reserve(m * n);
  for (const auto& row : rows) {
    if (row.size() != n) throw DimensionError("matrix: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return from(Shape{m, n}, std::move(values), requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return from(Shape{n}, std::move(values), requires_grad);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, std::mt19937_64& rng, bool requires_grad) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = dist(rng);
  return from(std::move(shape), std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->data.size(); }

std::size_t Tensor::rows() const {
  if (rank() == 2) return shape()[0];
  if (rank() <= 1) return 1;
  throw DimensionError("rows: unsupported rank " + std::to_string(rank()));
}

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape()[1];
  if (rank() == 1) return shape()[0];
  if (rank() == 0) return 1;
  throw DimensionError("cols: unsupported rank " + std::to_string(rank()));
}

std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::at(std::size_t row, std::size_t col) const { return node_->data.at(row * cols() + col); }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item: tensor holds " + std::to_string(numel()) + " values");
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::is_leaf() const { return node_->leaf; }

void Tensor::set_requires_grad(bool flag) {
  if (!node_->leaf) throw ContractError("set_requires_grad: only leaves can change tracking");
  node_->requires_grad = flag;
  if (!flag) node_->grad.clear();
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() {
  if (node_->requires_grad) node_->grad.assign(numel(), 0.0);
}

void Tensor::clear_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(make_node(node_->shape, node_->data, false)); }

Tensor Tensor::clone() const { return Tensor(make_node(node_->shape, node_->data, node_->requires_grad)); }

std::uint64_t Tensor::id() const { return node_->id; }

// ---- tape ------------------------------------------------------------------

ComputationTape ComputationTape::record(const Tensor& root) {
  ComputationTape tape;
  if (!root.requires_grad()) return tape;

  // Iterative post-order DFS; reversing the post-order yields a reverse
  // topological order with every node visited once.
  std::vector<std::shared_ptr<detail::Node>> post;
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto parent = node->parents[next++];
      if (parent->requires_grad && seen.insert(parent.get()).second) {
        stack.emplace_back(std::move(parent), 0);
      }
    } else {
      post.push_back(node);
      stack.pop_back();
    }
  }
  tape.order_.assign(post.rbegin(), post.rend());
  return tape;
}

std::vector<std::uint64_t> ComputationTape::node_ids() const {
  std::vector<std::uint64_t> ids;
  ids.reserve(order_.size());
  for (const auto& node : order_) ids.push_back(node->id);
  return ids;
}

void ComputationTape::replay_backward() const {
  if (order_.empty()) return;
  for (const auto& node : order_) {
    if (node->leaf) {
      if (node->grad.size() != node->data.size()) node->grad.assign(node->data.size(), 0.0);
    } else {
      node->grad.assign(node->data.size(), 0.0);
    }
  }
  const auto& root = order_.front();
  if (root->leaf) {
    root->grad[0] += 1.0;
    return;
  }
  root->grad[0] = 1.0;
  for (const auto& node : order_) {
    if (!node->leaf && node->backward) node->backward(*node);
  }
  for (const auto& node : order_) {
    if (!node->leaf) {
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_to_string(loss.shape()));
  }
  ComputationTape::record(loss).replay_backward();
}

double grad_norm(std::span<const Tensor> params) {
  double sq = 0.0;
  for (const Tensor& p : params) {
    for (double g : p.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

void sgd_step(std::span<Tensor> params, double lr, double max_norm) {
  for (const Tensor& p : params) {
    if (!p.requires_grad() || !p.is_leaf()) throw ContractError("sgd_step: not a trainable leaf");
    if (p.grad().size() != p.numel()) throw ContractError("sgd_step: parameter has no gradient");
  }
  if (max_norm > 0.0) {
    const double norm = grad_norm(params);
    if (!std::isfinite(norm)) throw NonFiniteError("sgd_step: non-finite gradient norm");
    if (norm > max_norm) lr *= max_norm / norm;
  }
  for (Tensor& p : params) {
    auto values = p.mutable_data();
    auto grad = p.grad();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * grad[i];
    require_finite(values, "sgd_step");
    p.zero_grad();
  }
}

// ---- ops -------------------------------------------------------------------

Tensor elementwise(Elementwise op, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "elementwise");
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (op) {
      case Elementwise::add: out[i] = x[i] + y[i]; break;
      case Elementwise::sub: out[i] = x[i] - y[i]; break;
      case Elementwise::mul: out[i] = x[i] * y[i]; break;
    }
  }
  auto pa = a.node();
  auto pb = b.node();
  return make_result("elementwise", a.shape(), std::move(out), {&a, &b}, [op, pa, pb](detail::Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double g = self.grad[i];
      switch (op) {
        case Elementwise::add:
          accumulate(*pa, i, g);
          accumulate(*pb, i, g);
          break;
        case Elementwise::sub:
          accumulate(*pa, i, g);
          accumulate(*pb, i, -g);
          break;
        case Elementwise::mul:
          accumulate(*pa, i, g * pb->data[i]);
          accumulate(*pb, i, g * pa->data[i]);
          break;
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::mul, a, b); }

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v *= factor;
  auto px = x.node();
  return make_result("scale", x.shape(), std::move(out), {&x}, [px, factor](detail::Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) accumulate(*px, i, self.grad[i] * factor);
  });
}

Tensor one_minus(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 - x[i];
  auto px = x.node();
  return make_result("one_minus", x.shape(), std::move(out), {&x}, [px](detail::Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) accumulate(*px, i, -self.grad[i]);
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += xv * y[p * n + j];
    }
  }
  auto pa = a.node();
  auto pb = b.node();
  return make_result("matmul", Shape{m, n}, std::move(out), {&a, &b}, [pa, pb, m, k, n](detail::Node& self) {
    const auto& g = self.grad;
    if (pa->requires_grad) {
      // dA = G · Bᵀ
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * pb->data[p * n + j];
          pa->grad[i * k + p] += acc;
        }
    }
    if (pb->requires_grad) {
      // dB = Aᵀ · G
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = pa->data[i * k + p];
          for (std::size_t j = 0; j < n; ++j) pb->grad[p * n + j] += av * g[i * n + j];
        }
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_matrix(x, "transpose");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  auto px = x.node();
  return make_result("transpose", Shape{n, m}, std::move(out), {&x}, [px, m, n](detail::Node& self) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) accumulate(*px, i * n + j, self.grad[j * m + i]);
  });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.numel() != n) {
    throw DimensionError("add_row_bias: bias width " + std::to_string(bias.numel()) + " vs " +
                         std::to_string(n));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias[j];
  auto px = x.node();
  auto pb = bias.node();
  return make_result("add_row_bias", x.shape(), std::move(out), {&x, &bias}, [px, pb, m, n](detail::Node& self) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        accumulate(*px, i * n + j, self.grad[i * n + j]);
        accumulate(*pb, j, self.grad[i * n + j]);
      }
  });
}

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (n == 0) throw DimensionError("softmax_rows: empty row");
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data().data() + i * n;
    const double peak = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += out[i * n + j] = std::exp(row[j] - peak);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  auto px = x.node();
  return make_result("softmax_rows", x.shape(), std::move(out), {&x}, [px, m, n](detail::Node& self) {
    // dx = y ⊙ (g − Σ g·y)
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * self.data[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        accumulate(*px, i * n + j, self.data[i * n + j] * (self.grad[i * n + j] - dot));
    }
  });
}

Tensor log_softmax_rows(const Tensor& x) {
  require_matrix(x, "log_softmax_rows");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (n == 0) throw DimensionError("log_softmax_rows: empty row");
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data().data() + i * n;
    const double peak = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(row[j] - peak);
    const double log_norm = peak + std::log(total);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - log_norm;
  }
  auto px = x.node();
  return make_result("log_softmax_rows", x.shape(), std::move(out), {&x}, [px, m, n](detail::Node& self) {
    // dx = g − softmax · Σ g
    for (std::size_t i = 0; i < m; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) total += self.grad[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        accumulate(*px, i * n + j, self.grad[i * n + j] - std::exp(self.data[i * n + j]) * total);
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x[i];
    // Branches keep exp() from overflowing for large |v|.
    if (v >= 0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  auto px = x.node();
  return make_result("sigmoid", x.shape(), std::move(out), {&x}, [px](detail::Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.data[i];
      accumulate(*px, i, self.grad[i] * y * (1.0 - y));
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0 ? x[i] : 0.0;
  auto px = x.node();
  return make_result("relu", x.shape(), std::move(out), {&x}, [px](detail::Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (px->data[i] > 0) accumulate(*px, i, self.grad[i]);
  });
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  require_matrix(a, "concat_last");
  require_matrix(b, "concat_last");
  const std::size_t m = a.shape()[0], p = a.shape()[1], q = b.shape()[1];
  if (b.shape()[0] != m) {
    throw DimensionError("concat_last: leading dimensions differ " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
  const std::size_t w = p + q;
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(a.data().begin() + i * p, p, out.begin() + i * w);
    std::copy_n(b.data().begin() + i * q, q, out.begin() + i * w + p);
  }
  auto pa = a.node();
  auto pb = b.node();
  return make_result("concat_last", Shape{m, w}, std::move(out), {&a, &b}, [pa, pb, m, p, q, w](detail::Node& self) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < p; ++j) accumulate(*pa, i * p + j, self.grad[i * w + j]);
      for (std::size_t j = 0; j < q; ++j) accumulate(*pb, i * q + j, self.grad[i * w + p + j]);
    }
  });
}

Tensor mean_rows(const Tensor& x) {
  require_matrix(x, "mean_rows");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (m == 0) throw DimensionError("mean_rows: no rows");
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += x[i * n + j];
  for (double& v : out) v /= static_cast<double>(m);
  auto px = x.node();
  return make_result("mean_rows", Shape{n}, std::move(out), {&x}, [px, m, n](detail::Node& self) {
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) accumulate(*px, i * n + j, self.grad[j] * inv);
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  auto px = x.node();
  return make_result("sum", Shape{}, {total}, {&x}, [px](detail::Node& self) {
    for (std::size_t i = 0; i < px->data.size(); ++i) accumulate(*px, i, self.grad[0]);
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor l2_normalize(const Tensor& v) {
  if (v.rank() != 1) throw DimensionError("l2_normalize: expected rank-1, got " + shape_to_string(v.shape()));
  double sq = 0.0;
  for (double e : v.data()) sq += e * e;
  if (sq == 0.0) throw ContractError("l2_normalize: zero vector");
  const double norm = std::sqrt(sq);
  std::vector<double> out(v.data().begin(), v.data().end());
  for (double& e : out) e /= norm;
  auto pv = v.node();
  return make_result("l2_normalize", v.shape(), std::move(out), {&v}, [pv, norm](detail::Node& self) {
    // dx = (g − y (y·g)) / ‖x‖
    double dot = 0.0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) dot += self.data[i] * self.grad[i];
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      accumulate(*pv, i, (self.grad[i] - self.data[i] * dot) / norm);
  });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  const std::size_t n = rows.front().numel();
  std::vector<double> out;
  out.reserve(rows.size() * n);
  bool tracks = false;
  std::vector<std::shared_ptr<detail::Node>> parents;
  for (const Tensor& r : rows) {
    if (r.rank() != 1 || r.numel() != n) throw DimensionError("stack_rows: rows must be rank-1 of equal width");
    out.insert(out.end(), r.data().begin(), r.data().end());
    tracks = tracks || r.requires_grad();
    parents.push_back(r.node());
  }
  const std::size_t m = rows.size();
  // make_result takes a fixed input list; build the node by hand for a variadic op.
  require_finite(out, "stack_rows");
  auto node = std::make_shared<detail::Node>();
  node->shape = Shape{m, n};
  node->data = std::move(out);
  node->id = next_id();
  node->leaf = false;
  node->requires_grad = tracks;
  if (tracks) {
    node->parents = parents;
    node->backward = [parents, n](detail::Node& self) {
      for (std::size_t i = 0; i < parents.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) accumulate(*parents[i], j, self.grad[i * n + j]);
    };
  }
  return Tensor(std::move(node));
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_matrix(table, "gather_rows");
  const std::size_t vocab = table.shape()[0], n = table.shape()[1];
  std::vector<std::size_t> index(ids.begin(), ids.end());
  std::vector<double> out(index.size() * n);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= vocab) {
      throw DimensionError("gather_rows: row " + std::to_string(index[i]) + " out of range " +
                           std::to_string(vocab));
    }
    std::copy_n(table.data().begin() + index[i] * n, n, out.begin() + i * n);
  }
  auto pt = table.node();
  Shape shape{index.size(), n};
  return make_result("gather_rows", std::move(shape), std::move(out), {&table},
                     [pt, index = std::move(index), n](detail::Node& self) {
                       for (std::size_t i = 0; i < index.size(); ++i)
                         for (std::size_t j = 0; j < n; ++j) accumulate(*pt, index[i] * n + j, self.grad[i * n + j]);
                     });
}

Tensor pick_mean(const Tensor& x, std::span<const std::size_t> index, std::size_t skip) {
  require_matrix(x, "pick_mean");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (index.size() != m) throw DimensionError("pick_mean: one index per row required");
  std::vector<std::size_t> picked;  // flat offsets
  for (std::size_t t = 0; t < m; ++t) {
    if (index[t] == skip) continue;
    if (index[t] >= n) {
      throw DimensionError("pick_mean: index " + std::to_string(index[t]) + " out of range " + std::to_string(n));
    }
    picked.push_back(t * n + index[t]);
  }
  if (picked.empty()) throw ContractError("pick_mean: every row skipped");
  double total = 0.0;
  for (std::size_t off : picked) total += x[off];
  const double inv = 1.0 / static_cast<double>(picked.size());
  auto px = x.node();
  return make_result("pick_mean", Shape{}, {total * inv}, {&x}, [px, picked = std::move(picked), inv](detail::Node& self) {
    for (std::size_t off : picked) accumulate(*px, off, self.grad[0] * inv);
  });
}

}  // namespace mmcot
