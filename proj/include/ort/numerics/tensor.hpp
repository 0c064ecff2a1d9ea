#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ort/errors.hpp"

namespace ort {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

/// Storage precision. Training runs in 32-bit; every gradient check runs the
/// same templates instantiated at 64-bit.
enum class Precision { standard32, check64 };

template <class T>
constexpr Precision precision_of() {
  return sizeof(T) >= 8 ? Precision::check64 : Precision::standard32;
}

namespace detail {

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates this node's grad into its parents' grads.
  std::function<void(Node&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

inline thread_local int no_grad_depth = 0;

}  // namespace detail

/// While alive, ops on this thread do not record backward closures.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

/// Handle to a dense row-major array plus its autodiff node. Copies share the
/// node; use clone() for a deep copy.
template <class T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node<T>>()) {
    if (shape_size(shape) != data.size()) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    }
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor filled(Shape shape, T v) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<T>(n, v));
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return Tensor({1}, {v}, requires_grad);
  }

  static Tensor from_node(NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  [[nodiscard]] bool defined() const { return static_cast<bool>(node_); }
  [[nodiscard]] const Shape& shape() const { return node_->shape; }
  [[nodiscard]] std::size_t rank() const { return node_->shape.size(); }
  [[nodiscard]] std::size_t size() const { return node_->value.size(); }
  [[nodiscard]] std::size_t rows() const { return node_->shape.front(); }
  [[nodiscard]] std::size_t cols() const { return node_->shape.back(); }

  [[nodiscard]] std::span<const T> data() const { return node_->value; }
  /// Direct write access. Intended for optimizers, initializers and finite
  /// differences; never mutate a tensor that is part of a live graph you
  /// still intend to backpropagate through.
  [[nodiscard]] std::span<T> mutable_data() { return node_->value; }

  [[nodiscard]] T operator[](std::size_t i) const { return node_->value[i]; }
  [[nodiscard]] T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  [[nodiscard]] T item() const {
    if (size() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }

  [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  [[nodiscard]] bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient; an all-zero view is returned when nothing has flowed in yet.
  [[nodiscard]] std::span<const T> grad() const {
    return std::span<const T>(node_->ensure_grad());
  }
  [[nodiscard]] std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  [[nodiscard]] Tensor clone(bool requires_grad) const {
    return Tensor(node_->shape, node_->value, requires_grad);
  }
  /// Same values, cut from the graph.
  [[nodiscard]] Tensor detach() const { return clone(false); }

  [[nodiscard]] const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Reverse topological order of the graph that produced a root. Built once
/// per backward pass; each node appears exactly once.
template <class T>
class Tape {
 public:
  explicit Tape(const Tensor<T>& root) {
    using NodeP = detail::Node<T>*;
    std::unordered_set<NodeP> seen;
    // Iterative post-order DFS: a node is emitted after all of its parents.
    std::vector<std::pair<NodeP, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        NodeP parent = node->parents[next++].get();
        if (seen.insert(parent).second) stack.emplace_back(parent, 0);
      } else {
        order_.push_back(node);
        stack.pop_back();
      }
    }
  }

  /// Nodes with every input before the op that consumes it.
  [[nodiscard]] const std::vector<detail::Node<T>*>& forward_order() const { return order_; }

  void run_backward() {
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      auto* node = *it;
      if (node->backward && !node->grad.empty()) node->backward(*node);
    }
  }

 private:
  std::vector<detail::Node<T>*> order_;
};

/// Seeds d(root)/d(root) = 1 and accumulates gradients into every leaf that
/// requires them. Gradients add onto whatever is already stored.
template <class T>
void backward(const Tensor<T>& root) {
  if (root.size() != 1) {
    throw UsageError("backward() needs a scalar root, got shape " + shape_str(root.shape()));
  }
  root.node()->ensure_grad()[0] += T(1);
  Tape<T> tape(root);
  tape.run_backward();
}

template <class T>
bool all_finite(std::span<const T> xs) {
  for (T x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace ort
