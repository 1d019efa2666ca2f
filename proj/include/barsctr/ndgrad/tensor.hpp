#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "barsctr/error.hpp"

namespace barsctr::ndgrad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// Per-thread cap on live tensor storage. Zero means unlimited. Exceeding the
// cap throws std::bad_alloc, which the trainer treats like device OOM.
class MemoryBudget {
 public:
  static std::size_t& limit() {
    thread_local std::size_t value = 0;
    return value;
  }
  static std::size_t& live() {
    thread_local std::size_t value = 0;
    return value;
  }
  static void charge(std::size_t bytes) {
    if (limit() != 0 && live() + bytes > limit()) throw std::bad_alloc();
    live() += bytes;
  }
  static void release(std::size_t bytes) { live() -= std::min(bytes, live()); }
};

class ScopedMemoryBudget {
 public:
  explicit ScopedMemoryBudget(std::size_t bytes) : previous_(MemoryBudget::limit()) {
    MemoryBudget::limit() = bytes;
  }
  ~ScopedMemoryBudget() { MemoryBudget::limit() = previous_; }
  ScopedMemoryBudget(const ScopedMemoryBudget&) = delete;
  ScopedMemoryBudget& operator=(const ScopedMemoryBudget&) = delete;

 private:
  std::size_t previous_;
};

namespace detail {

struct Node {
  Node(Shape s, std::vector<double> v) : shape(std::move(s)), value(std::move(v)) {
    charged = value.size() * sizeof(double);
    MemoryBudget::charge(charged);
  }
  ~Node() { MemoryBudget::release(charged); }
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  bool consumed = false;
  std::string op;  // empty for leaves
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  std::size_t charged = 0;

  bool is_leaf() const { return op.empty(); }
  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Handle to a dense row-major array of doubles. Copies share storage; use
// clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false) {
    for (std::size_t d : shape) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (values.size() != shape_numel(shape)) {
      throw DimensionError("tensor of shape " + shape_str(shape) + " needs " +
                           std::to_string(shape_numel(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
    Tensor t;
    t.node_ = std::make_shared<detail::Node>(std::move(shape), std::move(values));
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) { return full(std::move(shape), 0.0, requires_grad); }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return from_values(std::move(shape), std::vector<double>(n, v), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) { return from_values({}, {v}, requires_grad); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node().shape; }
  std::size_t rank() const { return node().shape.size(); }
  std::size_t dim(std::size_t axis) const { return node().shape.at(axis); }
  std::size_t numel() const { return node().value.size(); }

  std::span<const double> values() const { return node().value; }
  std::span<double> mutable_values() { return node().value; }
  double item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node().value[0];
  }

  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool on) { node().requires_grad = on; }
  bool has_grad() const { return !node().grad.empty(); }
  std::span<const double> grad() const { return node().grad; }
  std::span<double> mutable_grad() { return node().ensure_grad(); }
  void zero_grad() {
    if (has_grad()) std::fill(node().grad.begin(), node().grad.end(), 0.0);
  }
  void clear_grad() { node().grad.clear(); }

  const std::string& op() const { return node().op; }
  bool is_leaf() const { return node().is_leaf(); }

  Tensor clone() const { return from_values(shape(), node().value, false); }
  // Same storage, cut off from the graph.
  Tensor detach() const { return clone(); }

  detail::Node& node() const {
    if (!node_) throw StateError("use of an undefined tensor");
    return *node_;
  }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// While alive, operations record no graph (inference).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(enabled()) { enabled() = false; }
  ~NoGradGuard() { enabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool& enabled() {
    thread_local bool on = true;
    return on;
  }

 private:
  bool previous_;
};

// Records an operation result. When any input requires grad, the output keeps
// its inputs and the backward closure; otherwise it is a plain constant.
// `backward` reads out.grad and accumulates into out.inputs[i]->grad for the
// inputs that require grad.
inline Tensor custom_op(std::string name, Shape shape, std::vector<double> values,
                        const std::vector<Tensor>& inputs, std::function<void(detail::Node&)> backward) {
  Tensor out = Tensor::from_values(std::move(shape), std::move(values));
  bool any = false;
  if (NoGradGuard::enabled())
    for (const Tensor& in : inputs) any = any || in.requires_grad();
  detail::Node& node = out.node();
  node.op = std::move(name);
  if (any) {
    node.requires_grad = true;
    node.inputs.reserve(inputs.size());
    for (const Tensor& in : inputs) node.inputs.push_back(in.node_ptr());
    node.backward = std::move(backward);
  }
  return out;
}

// Reverse sweep from a scalar loss. Leaf gradients accumulate additively;
// the graph behind `loss` is released afterwards.
inline void backward(const Tensor& loss) {
  detail::Node& root = loss.node();
  if (root.value.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_str(root.shape));
  }
  if (root.consumed) throw StateError("backward called twice on the same tape");
  if (!root.requires_grad) throw ContractError("loss does not depend on any tensor that requires grad");

  // Iterative post-order DFS.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(&root, 0);
  seen.insert(&root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) {
        if (child->consumed) throw StateError("graph node '" + child->op + "' already consumed by a backward pass");
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  for (detail::Node* node : order) {
    if (node->is_leaf()) continue;
    node->backward = nullptr;
    node->inputs.clear();
    node->grad.clear();
    node->grad.shrink_to_fit();
    node->consumed = true;
  }
}

}  // namespace barsctr::ndgrad
