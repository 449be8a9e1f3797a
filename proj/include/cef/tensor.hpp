#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cef/errors.hpp"

namespace cef {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <class S>
struct TensorStorage {
  Shape shape;
  std::vector<S> data;
  std::vector<S> grad;  // empty unless requires_grad
  bool requires_grad = false;
};

/// Dense row-major tensor with an optional gradient buffer.
///
/// Copies share storage (handle semantics), which is what lets a parameter
/// tensor appear in many graphs and have its gradient written back in place.
/// Use `clone()` for a deep copy.
template <class S>
class Tensor {
 public:
  using value_type = S;

  Tensor() = default;

  // Zero-filled. There is deliberately no (shape, bool) overload: a braced
  // single value like {1} would bind to it instead of to the data vector.
  explicit Tensor(Shape shape) : Tensor(shape, std::vector<S>(shape_numel(shape), S{0})) {}

  Tensor(Shape shape, std::vector<S> data, bool requires_grad = false)
      : impl_(std::make_shared<TensorStorage<S>>()) {
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    set_requires_grad(requires_grad);
  }

  static Tensor scalar(S value, bool requires_grad = false) {
    return Tensor(Shape{}, std::vector<S>{value}, requires_grad);
  }

  bool defined() const noexcept { return static_cast<bool>(impl_); }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<S> data() { return impl_->data; }
  std::span<const S> data() const { return impl_->data; }
  std::span<S> grad() { return impl_->grad; }
  std::span<const S> grad() const { return impl_->grad; }

  S& operator[](std::size_t i) { return impl_->data[i]; }
  const S& operator[](std::size_t i) const { return impl_->data[i]; }
  S& at(std::size_t r, std::size_t c) { return impl_->data[r * impl_->shape[1] + c]; }
  const S& at(std::size_t r, std::size_t c) const {
    return impl_->data[r * impl_->shape[1] + c];
  }

  S item() const {
    if (numel() != 1) {
      throw ContractError("item() on tensor of shape " + shape_str(shape()));
    }
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }

  void set_requires_grad(bool on) {
    impl_->requires_grad = on;
    if (on) {
      impl_->grad.assign(impl_->data.size(), S{0});
    } else {
      impl_->grad.clear();
    }
  }

  void zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), S{0}); }

  Tensor clone() const {
    Tensor out(impl_->shape, impl_->data, impl_->requires_grad);
    return out;
  }

  /// Deep copy converted to another scalar type; the gradient buffer is fresh.
  template <class T>
  Tensor<T> cast() const {
    std::vector<T> converted(impl_->data.begin(), impl_->data.end());
    return Tensor<T>(impl_->shape, std::move(converted), impl_->requires_grad);
  }

  const TensorStorage<S>* id() const noexcept { return impl_.get(); }
  const std::shared_ptr<TensorStorage<S>>& storage() const noexcept { return impl_; }

 private:
  std::shared_ptr<TensorStorage<S>> impl_;
};

/// Reverse-mode tape. Operations append nodes in execution order, so the
/// node list is topologically sorted by construction.
template <class S>
class Graph {
 public:
  using StoragePtr = std::shared_ptr<TensorStorage<S>>;

  struct Node {
    std::string op;
    std::vector<StoragePtr> inputs;
    StoragePtr output;
    std::function<void()> backward;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// With recording off, operations compute values only (inference).
  void set_recording(bool on) { recording_ = on; }
  bool recording() const { return recording_; }

  bool should_record(std::initializer_list<const Tensor<S>*> inputs) const {
    if (!recording_) return false;
    for (const auto* t : inputs) {
      if (t->requires_grad()) return true;
    }
    return false;
  }

  void record(std::string op, std::vector<StoragePtr> inputs, StoragePtr output,
              std::function<void()> backward) {
    nodes_.push_back(Node{std::move(op), std::move(inputs), std::move(output),
                          std::move(backward)});
  }

  /// Folds the outcome of a non-differentiable branch (e.g. a ReLU gate) into
  /// a running signature. Two evaluations with equal signatures took the same
  /// piecewise-smooth branch everywhere.
  void note_branches(std::span<const S> preactivations) {
    for (S v : preactivations) {
      branch_signature_ ^= static_cast<std::uint64_t>(v > S{0});
      branch_signature_ *= 1099511628211ull;
    }
  }
  std::uint64_t branch_signature() const { return branch_signature_; }

  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
  bool recording_ = true;
  std::uint64_t branch_signature_ = 1469598103934665603ull;
};

/// Populates gradients of every requires_grad tensor reachable from the tape.
///
/// All gradient buffers touched by the graph are zeroed first, then each node's
/// rule runs exactly once in reverse order, accumulating (summing) into inputs.
template <class S>
void backward(Graph<S>& graph, Tensor<S>& loss) {
  if (!loss.defined() || loss.numel() != 1 || loss.rank() != 0) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  const auto& nodes = graph.nodes();
  if (nodes.empty() || nodes.back().output.get() != loss.id()) {
    throw ContractError("backward: loss is not the terminal node of the graph");
  }
  for (const auto& node : nodes) {
    for (const auto& in : node.inputs) {
      std::fill(in->grad.begin(), in->grad.end(), S{0});
    }
    std::fill(node.output->grad.begin(), node.output->grad.end(), S{0});
  }
  loss.grad()[0] = S{1};
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    it->backward();
  }
}

}  // namespace cef
