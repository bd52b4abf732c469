#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "collagan/errors.hpp"

namespace collagan {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Graph;

// Storage behind a tensor handle. Several handles may share one impl;
// graph nodes keep impls alive for the lifetime of the graph.
template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::optional<std::vector<T>> grad;
  bool requires_grad = false;

  // Set when the tensor was produced by a recorded op.
  const Graph<T>* producer = nullptr;
  std::size_t node_index = 0;

  // Gradient scratch used while a backward pass is running.
  std::vector<T> pending;
};

// Reference-semantics handle to a dense row-major array. Copies of a handle
// alias the same storage; use clone() for a deep copy.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor();
  explicit BasicTensor(Shape shape, T fill = T(0));
  BasicTensor(Shape shape, std::vector<T> values);

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }
  static BasicTensor ones(Shape shape) { return BasicTensor(std::move(shape), T(1)); }
  static BasicTensor full(Shape shape, T value) { return BasicTensor(std::move(shape), value); }
  static BasicTensor scalar(T value) { return BasicTensor(Shape{}, std::vector<T>{value}); }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T item() const;
  T& operator[](std::size_t i) { return impl_->data[i]; }
  const T& operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  BasicTensor& set_requires_grad(bool on);

  bool has_grad() const { return impl_->grad.has_value(); }
  std::span<const T> grad() const;
  void clear_grad() { impl_->grad.reset(); }

  // True when produced by a recorded op (not a leaf).
  bool has_producer() const { return impl_->producer != nullptr; }

  // Fresh leaf with copied values, outside any graph.
  BasicTensor detach() const;
  BasicTensor clone() const { return detach(); }
  // Same values, new shape; differentiable.
  BasicTensor reshape(Shape shape) const;

  bool aliases(const BasicTensor& other) const { return impl_ == other.impl_; }
  TensorImpl<T>* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl<T>>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Accumulation targets handed to a node's backward rule, one per input;
// nullptr where the input does not require a gradient.
template <typename T>
using GradTargets = std::span<std::vector<T>* const>;

template <typename T>
using BackwardFn = std::function<void(std::span<const T> grad_out, GradTargets<T> grad_in)>;

template <typename T>
struct Node {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  std::shared_ptr<TensorImpl<T>> output;
  BackwardFn<T> backward;
};

// Define-by-run tape. Ops executed while a graph is active (see GraphScope)
// and touching a requires_grad tensor append a node. Nodes are stored in
// execution order, which is a topological order.
template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  ~Graph();

  std::size_t size() const { return nodes_.size(); }
  const Node<T>& node(std::size_t i) const { return nodes_[i]; }

  std::size_t record(Node<T> node);

  // Populates grad() of every requires_grad leaf reachable from `loss`,
  // overwriting any previous gradient.
  void backward(const BasicTensor<T>& loss);

 private:
  std::vector<Node<T>> nodes_;
};

template <typename T>
Graph<T>* active_graph();

// Makes `graph` the recording target for the current thread until the scope
// ends. Scopes nest; the innermost wins.
template <typename T>
class GraphScope {
 public:
  explicit GraphScope(Graph<T>& graph);
  GraphScope(const GraphScope&) = delete;
  GraphScope& operator=(const GraphScope&) = delete;
  ~GraphScope();

 private:
  Graph<T>* previous_;
};

// Suspends recording for the current thread.
template <typename T>
class NoGradScope {
 public:
  NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;
  ~NoGradScope();

 private:
  Graph<T>* previous_;
};

template <typename T>
void backward(Graph<T>& graph, const BasicTensor<T>& loss) {
  graph.backward(loss);
}

// Builds an op result. Records a node when a graph is active and at least one
// input requires a gradient; otherwise returns a plain leaf.
template <typename T>
BasicTensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                           std::initializer_list<BasicTensor<T>> inputs, BackwardFn<T> backward);

template <typename T>
BasicTensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                           const std::vector<BasicTensor<T>>& inputs, BackwardFn<T> backward);

template <typename T>
bool all_finite(std::span<const T> values);

template <typename T>
BasicTensor<T> cast_tensor(const BasicTensor<float>& src);

}  // namespace collagan
