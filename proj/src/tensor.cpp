#include "collagan/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace collagan {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor() : BasicTensor(Shape{0}) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : impl_(std::make_shared<TensorImpl<T>>()) {
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values)
    : impl_(std::make_shared<TensorImpl<T>>()) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape()));
  }
  return impl_->shape[axis];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  return impl_->data[0];
}

template <typename T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool on) {
  if (impl_->producer != nullptr) {
    throw Error("set_requires_grad: only leaf tensors can change requires_grad");
  }
  impl_->requires_grad = on;
  return *this;
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
  if (!impl_->grad) throw Error("grad: tensor has no gradient; run backward first");
  return *impl_->grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor<T>(impl_->shape, impl_->data);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshape(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(this->shape()) + " as " + shape_str(shape));
  }
  std::vector<T> values = impl_->data;
  return make_result<T>("reshape", std::move(shape), std::move(values), {*this},
                        [](std::span<const T> g, GradTargets<T> gin) {
                          auto& dst = *gin[0];
                          for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                        });
}

namespace {

template <typename T>
Graph<T>*& graph_slot() {
  thread_local Graph<T>* current = nullptr;
  return current;
}

}  // namespace

template <typename T>
Graph<T>* active_graph() {
  return graph_slot<T>();
}

template <typename T>
GraphScope<T>::GraphScope(Graph<T>& graph) : previous_(graph_slot<T>()) {
  graph_slot<T>() = &graph;
}

template <typename T>
GraphScope<T>::~GraphScope() {
  graph_slot<T>() = previous_;
}

template <typename T>
NoGradScope<T>::NoGradScope() : previous_(graph_slot<T>()) {
  graph_slot<T>() = nullptr;
}

template <typename T>
NoGradScope<T>::~NoGradScope() {
  graph_slot<T>() = previous_;
}

template <typename T>
Graph<T>::~Graph() {
  // Outputs may outlive the graph through user handles; make them leaves.
  for (auto& node : nodes_) {
    if (node.output && node.output->producer == this) {
      node.output->producer = nullptr;
      node.output->requires_grad = false;
    }
  }
}

template <typename T>
std::size_t Graph<T>::record(Node<T> node) {
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

template <typename T>
void Graph<T>::backward(const BasicTensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  auto* root = loss.impl();
  if (root->producer == nullptr) {
    if (root->requires_grad) {
      root->grad = std::vector<T>{T(1)};
      return;
    }
    throw Error("backward: loss is detached from the graph");
  }
  if (root->producer != this) throw Error("backward: loss was recorded on a different graph");

  std::vector<TensorImpl<T>*> leaves;
  std::vector<TensorImpl<T>*> foreign;
  std::unordered_set<TensorImpl<T>*> seen;
  root->pending.assign(1, T(1));

  std::vector<std::vector<T>*> targets;
  for (std::size_t i = root->node_index + 1; i-- > 0;) {
    auto& node = nodes_[i];
    auto* out = node.output.get();
    if (out->pending.empty()) continue;

    targets.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      auto* in = node.inputs[k].get();
      if (!in->requires_grad) continue;
      if (in->pending.size() != in->data.size()) in->pending.assign(in->data.size(), T(0));
      targets[k] = &in->pending;
      if (in->producer != this && seen.insert(in).second) {
        (in->producer == nullptr ? leaves : foreign).push_back(in);
      }
    }
    node.backward(std::span<const T>(out->pending), GradTargets<T>(targets));
    out->pending.clear();
    out->pending.shrink_to_fit();
  }

  for (auto* leaf : leaves) {
    leaf->grad = std::move(leaf->pending);
    leaf->pending.clear();
  }
  // Intermediates of other graphs act as constants here.
  for (auto* other : foreign) {
    other->pending.clear();
    other->pending.shrink_to_fit();
  }
}

template <typename T>
BasicTensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                           const std::vector<BasicTensor<T>>& inputs, BackwardFn<T> backward) {
  BasicTensor<T> out(std::move(shape), std::move(values));
  Graph<T>* graph = active_graph<T>();
  if (graph == nullptr) return out;
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (!needs) return out;

  Node<T> node;
  node.op = op;
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) node.inputs.push_back(in.impl_ptr());
  node.output = out.impl_ptr();
  node.backward = std::move(backward);
  auto* impl = out.impl();
  impl->requires_grad = true;
  impl->producer = graph;
  impl->node_index = graph->record(std::move(node));
  return out;
}

template <typename T>
BasicTensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                           std::initializer_list<BasicTensor<T>> inputs, BackwardFn<T> backward) {
  return make_result<T>(op, std::move(shape), std::move(values), std::vector<BasicTensor<T>>(inputs),
                        std::move(backward));
}

template <typename T>
bool all_finite(std::span<const T> values) {
  for (T v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
BasicTensor<T> cast_tensor(const BasicTensor<float>& src) {
  std::vector<T> values(src.data().begin(), src.data().end());
  return BasicTensor<T>(src.shape(), std::move(values));
}

#define COLLAGAN_INSTANTIATE(T)                                                                  \
  template struct TensorImpl<T>;                                                                 \
  template class BasicTensor<T>;                                                                 \
  template class Graph<T>;                                                                       \
  template class GraphScope<T>;                                                                  \
  template class NoGradScope<T>;                                                                 \
  template Graph<T>* active_graph<T>();                                                          \
  template BasicTensor<T> make_result<T>(const char*, Shape, std::vector<T>,                     \
                                         const std::vector<BasicTensor<T>>&, BackwardFn<T>);      \
  template BasicTensor<T> make_result<T>(const char*, Shape, std::vector<T>,                     \
                                         std::initializer_list<BasicTensor<T>>, BackwardFn<T>);   \
  template bool all_finite<T>(std::span<const T>);                                               \
  template BasicTensor<T> cast_tensor<T>(const BasicTensor<float>&);

COLLAGAN_INSTANTIATE(float)
COLLAGAN_INSTANTIATE(double)

#undef COLLAGAN_INSTANTIATE

}  // namespace collagan
