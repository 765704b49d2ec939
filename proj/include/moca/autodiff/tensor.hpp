#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "moca/errors.hpp"

namespace moca::ad {

namespace detail {

// One value in the computation graph. Non-leaf nodes keep their parents
// alive and know how to push their gradient back into them.
struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

inline thread_local int no_grad_depth = 0;

}  // namespace detail

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

// While alive, operations on this thread do not record parents.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

using Shape = std::array<std::size_t, 2>;

inline std::string shape_str(std::size_t r, std::size_t c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

// Row-major matrix of doubles with reverse-mode gradient tracking. Vectors are
// 1xn rows and scalars are 1x1. Copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> data,
                     bool requires_grad = false) {
    if (data.size() != rows * cols) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(rows, cols));
    }
    for (double v : data) {
      if (!std::isfinite(v)) throw ValidationError("non-finite value in leaf tensor");
    }
    auto n = std::make_shared<detail::Node>();
    n->rows = rows;
    n->cols = cols;
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false) {
    return from(rows, cols, std::vector<double>(rows * cols, 0.0), requires_grad);
  }

  static Tensor filled(std::size_t rows, std::size_t cols, double v, bool requires_grad = false) {
    return from(rows, cols, std::vector<double>(rows * cols, v), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) { return from(1, 1, {v}, requires_grad); }

  static Tensor row(std::vector<double> v, bool requires_grad = false) {
    const std::size_t n = v.size();
    return from(1, n, std::move(v), requires_grad);
  }

  static Tensor identity(std::size_t n) {
    std::vector<double> d(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 1.0;
    return from(n, n, std::move(d));
  }

  bool defined() const { return static_cast<bool>(node_); }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  Shape shape() const { return {node_->rows, node_->cols}; }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }

  std::span<const double> data() const { return node_->value; }
  const std::vector<double>& values() const& { return node_->value; }
  // Copy for temporaries, so `for (double v : f(x).values())` is safe.
  std::vector<double> values() const&& { return node_->value; }

  // Leaf values may be edited in place (optimizer updates, finite differences).
  std::span<double> mutable_data() {
    if (!node_->leaf) throw ContractError("only leaf tensors may be modified in place");
    return node_->value;
  }

  double at(std::size_t r, std::size_t c) const { return node_->value[r * node_->cols + c]; }

  double item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(rows(), cols()));
    return node_->value[0];
  }

  // Gradient accumulated by backward(); zeros if nothing was accumulated.
  const std::vector<double>& grad() const { return node_->ensure_grad(); }
  std::vector<double>& mutable_grad() { return node_->ensure_grad(); }

  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  void set_requires_grad(bool on) {
    if (!node_->leaf) throw ContractError("requires_grad can only be toggled on leaves");
    node_->requires_grad = on;
  }

  // Fresh leaf holding a copy of the values.
  Tensor detach() const { return from(rows(), cols(), node_->value, false); }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

// Creates a result node. Parents and the backward closure are recorded only
// when gradients are enabled and some input requires them.
inline Tensor make_result(std::size_t rows, std::size_t cols, std::vector<double> value,
                          std::span<const Tensor> inputs, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(value);
  n->leaf = false;
  bool needs = false;
  if (grad_enabled()) {
    for (const Tensor& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    n->requires_grad = true;
    for (const Tensor& t : inputs) n->parents.push_back(t.node());
    n->backward_fn = std::move(backward);
  }
  return Tensor(std::move(n));
}

inline Tensor make_result(std::size_t rows, std::size_t cols, std::vector<double> value,
                          std::initializer_list<Tensor> inputs, std::function<void(Node&)> backward) {
  return make_result(rows, cols, std::move(value), std::span<const Tensor>(inputs.begin(), inputs.size()),
                     std::move(backward));
}

}  // namespace detail

// Topologically ordered record of the graph reachable from a root. Every
// node's parents precede it.
class Tape {
 public:
  explicit Tape(const Tensor& root) {
    std::unordered_set<const detail::Node*> marked;
    std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    marked.insert(root.node().get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        const auto& p = n->parents[next++];
        if (marked.insert(p.get()).second) stack.emplace_back(p, 0);
      } else {
        order_.push_back(std::move(n));
        stack.pop_back();
      }
    }
  }

  std::size_t size() const { return order_.size(); }
  const std::vector<std::shared_ptr<detail::Node>>& order() const { return order_; }

 private:
  std::vector<std::shared_ptr<detail::Node>> order_;
};

// Propagates d(loss)/d(leaf) into every reachable leaf's grad (accumulating).
// The graph is released afterwards; running backward through it again is a
// ContractError.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward requires a scalar loss");
  }
  if (loss.node()->consumed) {
    throw ContractError("backward already ran on this graph; rebuild the forward pass");
  }
  if (!loss.requires_grad()) {
    throw ContractError("loss does not depend on any tensor that requires grad");
  }
  Tape tape(loss);
  const auto& order = tape.order();
  for (const auto& n : order) {
    if (n->consumed) {
      throw ContractError("graph shares nodes with one that was already back-propagated");
    }
    if (!n->leaf) n->grad.assign(n->value.size(), 0.0);
  }
  loss.node()->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node& n = **it;
    if (n.backward_fn) n.backward_fn(n);
  }
  for (const auto& n : order) {
    if (n->leaf) continue;
    n->consumed = true;
    n->backward_fn = nullptr;
    n->parents.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

}  // namespace moca::ad
