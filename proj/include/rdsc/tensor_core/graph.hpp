#pragma once

#include <cassert>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rdsc/tensor_core/tensor.hpp"

namespace rdsc {

template <typename T>
class Graph;

/// Handle to a value recorded in a Graph.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return graph->value(id); }
  const Shape& shape() const { return value().shape; }
  bool needs_grad() const { return graph->needs_grad(id); }
};

/// Tape of recorded operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every node's inputs precede
/// it and a single reverse sweep visits each operation exactly once.
/// Leaves created with input() alias an external Tensor; their gradients
/// are accumulated into that tensor's `grad` buffer. A Graph is confined to
/// one thread.
template <typename T>
class Graph {
 public:
  using value_type = T;
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf aliasing `t`. Gradients flow into t.grad when t.requires_grad.
  Var<T> input(Tensor<T>& t) {
    Node n;
    n.leaf = &t;
    n.sink = &t;
    n.needs_grad = t.requires_grad;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  /// Read-only leaf aliasing `t` (shared parameters); never receives gradients.
  Var<T> input(const Tensor<T>& t) {
    Node n;
    n.leaf = &t;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  /// Leaf owning a copy of `t`; never receives gradients.
  Var<T> constant(Tensor<T> t) {
    Node n;
    n.value = std::move(t);
    n.value.requires_grad = false;
    n.value.grad.reset();
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  /// Append an operation output. `backward` is dropped when no input needs
  /// a gradient.
  Var<T> record(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward, const char* op) {
    if (!value.all_finite()) throw NumericError(std::string("non-finite value produced by ") + op);
    Node n;
    n.value = std::move(value);
    n.op = op;
    for (std::size_t i : inputs) {
      assert(i < nodes_.size());
      n.needs_grad = n.needs_grad || nodes_[i].needs_grad;
    }
    n.inputs = std::move(inputs);
    if (n.needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.leaf ? *n.leaf : n.value;
  }
  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }
  std::size_t input_id(std::size_t id, std::size_t k) const { return nodes_[id].inputs.at(k); }
  const Tensor<T>& input_value(std::size_t id, std::size_t k) const { return value(input_id(id, k)); }
  bool input_needs_grad(std::size_t id, std::size_t k) const { return needs_grad(input_id(id, k)); }

  /// Adjoint buffer of node `id`, allocated (zeroed) on first use.
  std::vector<T>& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != value(id).numel()) n.grad.assign(value(id).numel(), T(0));
    return n.grad;
  }
  /// Adjoint buffer of the k-th input of node `id`.
  std::vector<T>& input_grad(std::size_t id, std::size_t k) { return grad(input_id(id, k)); }

  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar loss. Intermediate adjoints are reset on
  /// every call; leaf gradients accumulate across calls.
  void backward(Var<T> loss) {
    if (loss.graph != this) throw ArgumentError("loss belongs to a different graph");
    if (value(loss.id).numel() != 1) throw ShapeError("backward() needs a scalar loss, got " + shape_str(value(loss.id).shape));
    for (Node& n : nodes_) n.grad.clear();
    grad(loss.id)[0] = T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty()) continue;
      for (const T& g : n.grad)
        if (!std::isfinite(g)) throw NumericError(std::string("non-finite gradient at ") + (n.op ? n.op : "leaf"));
      if (n.sink) {
        if (!n.sink->grad || n.sink->grad->size() != n.sink->numel()) n.sink->grad.emplace(n.sink->numel(), T(0));
        auto& dst = *n.sink->grad;
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
      } else if (n.backward) {
        n.backward(*this, i);
      }
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<T> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    const Tensor<T>* leaf = nullptr;
    Tensor<T>* sink = nullptr;
    bool needs_grad = false;
    const char* op = nullptr;
  };
  std::vector<Node> nodes_;
};

}  // namespace rdsc
