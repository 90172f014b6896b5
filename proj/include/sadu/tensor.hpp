// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with a reverse-mode tape.
//
// Operations record themselves on the thread's active Tape (see TapeScope)
// when at least one input requires a gradient. Without an active tape the
// same functions run as plain inference kernels and record nothing.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sadu {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename S>
struct TensorNode {
  Shape shape;
  std::vector<S> data;
  std::vector<S> grad;  // empty until a backward pass reaches the node
  bool requires_grad = false;
};

template <typename S>
class Tensor {
 public:
  using Scalar = S;
  using Node = TensorNode<S>;

  Tensor() = default;
  /// Zero-filled tensor.
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<S> data, bool requires_grad = false);

  static Tensor scalar(S value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const S> data() const { return node_->data; }
  /// Writable view for leaves (initialisation, optimiser updates, probes).
  std::span<S> mutable_data() { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const S> grad() const { return node_->grad; }
  void clear_grad() { std::vector<S>().swap(node_->grad); }

  /// Value of a one-element tensor.
  S item() const;
  S operator[](std::size_t flat) const { return node_->data[flat]; }

  /// Deep copy detached from any tape.
  Tensor clone() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  template <typename>
  friend class Tape;
  template <typename T>
  friend Tensor<T> make_result(Shape shape, std::vector<T> data);

  std::shared_ptr<Node> node_;
};

/// Ordered record of differentiable operations.
template <typename S>
class Tape {
 public:
  using NodePtr = std::shared_ptr<TensorNode<S>>;

  struct Record {
    std::vector<NodePtr> inputs;
    NodePtr output;
    std::function<void()> backward;  // reads output->grad, adds into inputs' grad
  };

  /// Appends an operation; inputs must already be known to the tape or be leaves.
  void record(std::vector<NodePtr> inputs, NodePtr output, std::function<void()> backward);

  /// Reverse sweep from a scalar loss. Gradients of every node reachable from
  /// the loss are zeroed first, so repeated calls do not accumulate.
  void backward(const Tensor<S>& loss);

  std::size_t size() const noexcept { return records_.size(); }
  const std::vector<Record>& records() const noexcept { return records_; }
  void clear() { records_.clear(); }

  static Tape* active() noexcept { return active_; }

 private:
  template <typename>
  friend class TapeScope;
  template <typename>
  friend class NoGradScope;

  std::vector<Record> records_;
  static inline thread_local Tape* active_ = nullptr;
};

/// Makes a tape the active one on this thread for the scope's lifetime.
template <typename S>
class TapeScope {
 public:
  explicit TapeScope(Tape<S>& tape) : previous_(Tape<S>::active_) { Tape<S>::active_ = &tape; }
  ~TapeScope() { Tape<S>::active_ = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<S>* previous_;
};

/// Suspends recording on this thread for the scope's lifetime.
template <typename S>
class NoGradScope {
 public:
  NoGradScope() : previous_(Tape<S>::active_) { Tape<S>::active_ = nullptr; }
  ~NoGradScope() { Tape<S>::active_ = previous_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<S>* previous_;
};

/// Wraps freshly computed data as an op output (no gradient yet).
template <typename S>
Tensor<S> make_result(Shape shape, std::vector<S> data) {
  auto node = std::make_shared<TensorNode<S>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return Tensor<S>(std::move(node));
}

// ---------------------------------------------------------------------------
// Operations. All shape errors raise DimensionError.

/// [m x k] * [k x n] -> [m x n]
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b);

/// 2-D transpose.
template <typename S>
Tensor<S> transpose(const Tensor<S>& a);

/// Row-wise softmax of a 2-D tensor with max subtraction.
template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& scores);

// Elementwise binary ops accept equal shapes or a one-element operand.
template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b);
template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);
/// Multiply by a constant.
template <typename S>
Tensor<S> scale(const Tensor<S>& a, S factor);

/// max(x, 0); derivative taken as 1 at x == 0.
template <typename S>
Tensor<S> relu(const Tensor<S>& x);
/// x for x >= 0, exp(x) - 1 otherwise.
template <typename S>
Tensor<S> elu(const Tensor<S>& x);

/// Sum of absolute values, as a scalar tensor.
template <typename S>
Tensor<S> l1(const Tensor<S>& x);
template <typename S>
Tensor<S> sum(const Tensor<S>& x);

/// Same data, new shape (element count must match).
template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape);

}  // namespace sadu
