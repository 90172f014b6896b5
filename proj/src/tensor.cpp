// SPDX-License-Identifier: Apache-2.0
#include "sadu/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "sadu/error.hpp"
#include "sadu/kernels.hpp"
#include "tensor_internal.hpp"

namespace sadu {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename S>
Tensor<S>::Tensor(Shape shape, bool requires_grad)
    : Tensor(shape, std::vector<S>(shape_numel(shape), S(0)), requires_grad) {}

template <typename S>
Tensor<S>::Tensor(Shape shape, std::vector<S> data, bool requires_grad) {
  for (std::size_t extent : shape) {
    if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not hold " +
                         std::to_string(data.size()) + " elements");
  }
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename S>
Tensor<S> Tensor<S>::scalar(S value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<S>{value}, requires_grad);
}

template <typename S>
S Tensor<S>::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename S>
Tensor<S> Tensor<S>::clone() const {
  return Tensor(node_->shape, node_->data, node_->requires_grad);
}

template <typename S>
void Tape<S>::record(std::vector<NodePtr> inputs, NodePtr output, std::function<void()> backward) {
  records_.push_back(Record{std::move(inputs), std::move(output), std::move(backward)});
}

template <typename S>
void Tape<S>::backward(const Tensor<S>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  // Mark everything the loss depends on, walking records newest-first.
  std::unordered_set<const TensorNode<S>*> reachable{loss.node().get()};
  std::vector<const Record*> active;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (!reachable.contains(it->output.get())) continue;
    active.push_back(&*it);
    for (const auto& in : it->inputs) {
      if (in->requires_grad) reachable.insert(in.get());
    }
  }
  for (const Record* rec : active) {
    rec->output->grad.assign(rec->output->data.size(), S(0));
    for (const auto& in : rec->inputs) {
      if (in->requires_grad) in->grad.assign(in->data.size(), S(0));
    }
  }
  loss.node()->grad.assign(1, S(1));
  for (const Record* rec : active) rec->backward();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

namespace {

template <typename S>
void require_rank(const Tensor<S>& t, std::size_t rank, const char* op) {
  if (!t.defined() || t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
  }
}

enum class Broadcast { kSame, kLeftScalar, kRightScalar };

template <typename S>
Broadcast broadcast_kind(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.numel() == 1) return Broadcast::kRightScalar;
  if (a.numel() == 1) return Broadcast::kLeftScalar;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()));
}

// Gradient of a broadcast operand: scalars collect the sum.
template <typename S>
void add_broadcast_grad(TensorNode<S>& node, const std::vector<S>& contribution) {
  if (node.data.size() == contribution.size()) {
    for (std::size_t i = 0; i < contribution.size(); ++i) node.grad[i] += contribution[i];
  } else {
    S total = 0;
    for (S v : contribution) total += v;
    node.grad[0] += total;
  }
}

template <typename S, typename Fwd, typename BwdA, typename BwdB>
Tensor<S> binary_op(const Tensor<S>& a, const Tensor<S>& b, const char* name, Fwd fwd, BwdA da,
                    BwdB db) {
  const Broadcast kind = broadcast_kind(a, b, name);
  const Shape& shape = kind == Broadcast::kLeftScalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(shape);
  const auto av = a.data();
  const auto bv = b.data();
  auto a_at = [&, kind](std::size_t i) { return kind == Broadcast::kLeftScalar ? av[0] : av[i]; };
  auto b_at = [&, kind](std::size_t i) { return kind == Broadcast::kRightScalar ? bv[0] : bv[i]; };
  std::vector<S> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(a_at(i), b_at(i));
  Tensor<S> result = make_result(shape, std::move(out));
  internal::maybe_record<S>({a, b}, result, [an = a.node(), bn = b.node(), on = result.node(),
                                             kind, da, db]() {
    const std::size_t count = on->data.size();
    auto ai = [&](std::size_t i) { return kind == Broadcast::kLeftScalar ? an->data[0] : an->data[i]; };
    auto bi = [&](std::size_t i) { return kind == Broadcast::kRightScalar ? bn->data[0] : bn->data[i]; };
    if (an->requires_grad) {
      std::vector<S> g(count);
      for (std::size_t i = 0; i < count; ++i) g[i] = on->grad[i] * da(ai(i), bi(i));
      add_broadcast_grad(*an, g);
    }
    if (bn->requires_grad) {
      std::vector<S> g(count);
      for (std::size_t i = 0; i < count; ++i) g[i] = on->grad[i] * db(ai(i), bi(i));
      add_broadcast_grad(*bn, g);
    }
  });
  return result;
}

template <typename S, typename Fwd, typename Deriv>
Tensor<S> unary_op(const Tensor<S>& x, Fwd fwd, Deriv deriv) {
  const auto xv = x.data();
  std::vector<S> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  Tensor<S> result = make_result(x.shape(), std::move(out));
  internal::maybe_record<S>({x}, result, [xn = x.node(), on = result.node(), deriv]() {
    for (std::size_t i = 0; i < xn->data.size(); ++i) {
      xn->grad[i] += on->grad[i] * deriv(xn->data[i], on->data[i]);
    }
  });
  return result;
}

}  // namespace

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  std::vector<S> out(m * n);
  kernels::matmul_nn<S>(m, k, n, a.data(), b.data(), out, false);
  Tensor<S> result = make_result(Shape{m, n}, std::move(out));
  internal::maybe_record<S>({a, b}, result, [an = a.node(), bn = b.node(), on = result.node(), m, k, n]() {
    if (an->requires_grad) {
      kernels::matmul_nt<S>(m, n, k, on->grad, bn->data, an->grad, true);  // dC * B^T
    }
    if (bn->requires_grad) {
      kernels::matmul_tn<S>(k, m, n, an->data, on->grad, bn->grad, true);  // A^T * dC
    }
  });
  return result;
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
  require_rank(a, 2, "transpose");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  const auto av = a.data();
  std::vector<S> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = av[i * cols + j];
  }
  Tensor<S> result = make_result(Shape{cols, rows}, std::move(out));
  internal::maybe_record<S>({a}, result, [an = a.node(), on = result.node(), rows, cols]() {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) an->grad[i * cols + j] += on->grad[j * rows + i];
    }
  });
  return result;
}

template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& scores) {
  require_rank(scores, 2, "softmax_rows");
  const std::size_t rows = scores.dim(0), cols = scores.dim(1);
  const auto sv = scores.data();
  std::vector<S> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const S* row = sv.data() + i * cols;
    S* dst = out.data() + i * cols;
    const S peak = *std::max_element(row, row + cols);
    S total = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      dst[j] = std::exp(row[j] - peak);
      total += dst[j];
    }
    for (std::size_t j = 0; j < cols; ++j) dst[j] /= total;
  }
  Tensor<S> result = make_result(scores.shape(), std::move(out));
  internal::maybe_record<S>({scores}, result, [sn = scores.node(), on = result.node(), rows, cols]() {
    // ds_ij = p_ij * (g_ij - sum_k g_ik p_ik)
    for (std::size_t i = 0; i < rows; ++i) {
      const S* p = on->data.data() + i * cols;
      const S* g = on->grad.data() + i * cols;
      S dot = 0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[j] * p[j];
      for (std::size_t j = 0; j < cols; ++j) sn->grad[i * cols + j] += p[j] * (g[j] - dot);
    }
  });
  return result;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      a, b, "add", [](S x, S y) { return x + y; }, [](S, S) { return S(1); },
      [](S, S) { return S(1); });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      a, b, "sub", [](S x, S y) { return x - y; }, [](S, S) { return S(1); },
      [](S, S) { return S(-1); });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      a, b, "mul", [](S x, S y) { return x * y; }, [](S, S y) { return y; },
      [](S x, S) { return x; });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S factor) {
  return unary_op(a, [factor](S x) { return x * factor; }, [factor](S, S) { return factor; });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  return unary_op(
      x, [](S v) { return v > S(0) ? v : S(0); }, [](S v, S) { return v >= S(0) ? S(1) : S(0); });
}

template <typename S>
Tensor<S> elu(const Tensor<S>& x) {
  // For v < 0 the derivative exp(v) equals y + 1.
  return unary_op(
      x, [](S v) { return v >= S(0) ? v : std::expm1(v); },
      [](S v, S y) { return v >= S(0) ? S(1) : y + S(1); });
}

template <typename S>
Tensor<S> l1(const Tensor<S>& x) {
  S total = 0;
  for (S v : x.data()) total += std::abs(v);
  Tensor<S> result = make_result(Shape{1}, std::vector<S>{total});
  internal::maybe_record<S>({x}, result, [xn = x.node(), on = result.node()]() {
    const S g = on->grad[0];
    for (std::size_t i = 0; i < xn->data.size(); ++i) {
      const S v = xn->data[i];
      xn->grad[i] += v > S(0) ? g : (v < S(0) ? -g : S(0));
    }
  });
  return result;
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  S total = 0;
  for (S v : x.data()) total += v;
  Tensor<S> result = make_result(Shape{1}, std::vector<S>{total});
  internal::maybe_record<S>({x}, result, [xn = x.node(), on = result.node()]() {
    for (S& g : xn->grad) g += on->grad[0];
  });
  return result;
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  }
  Tensor<S> result = make_result(std::move(shape), std::vector<S>(x.data().begin(), x.data().end()));
  internal::maybe_record<S>({x}, result, [xn = x.node(), on = result.node()]() {
    for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += on->grad[i];
  });
  return result;
}

#define SADU_INSTANTIATE_OPS(S)                                   \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);  \
  template Tensor<S> transpose(const Tensor<S>&);                 \
  template Tensor<S> softmax_rows(const Tensor<S>&);              \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);     \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);     \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);     \
  template Tensor<S> scale(const Tensor<S>&, S);                  \
  template Tensor<S> relu(const Tensor<S>&);                      \
  template Tensor<S> elu(const Tensor<S>&);                       \
  template Tensor<S> l1(const Tensor<S>&);                        \
  template Tensor<S> sum(const Tensor<S>&);                       \
  template Tensor<S> reshape(const Tensor<S>&, Shape);

SADU_INSTANTIATE_OPS(float)
SADU_INSTANTIATE_OPS(double)

}  // namespace sadu
