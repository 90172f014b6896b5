// SPDX-License-Identifier: Apache-2.0
#include "sadu/nn.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "sadu/error.hpp"
#include "sadu/kernels.hpp"
#include "tensor_internal.hpp"

namespace sadu {

namespace {

template <typename S>
void require_feature_map(const Tensor<S>& x, const char* op) {
  if (!x.defined() || x.rank() != 3) {
    throw DimensionError(std::string(op) + ": expected [C x H x W] input, got " +
                         (x.defined() ? shape_str(x.shape()) : std::string("undefined")));
  }
}

// Scratch target for a parameter that does not need its gradient.
template <typename S>
std::span<S> grad_or_scratch(TensorNode<S>& node, std::vector<S>& scratch) {
  if (node.requires_grad) return node.grad;
  scratch.assign(node.data.size(), S(0));
  return scratch;
}

}  // namespace

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Conv2dParams<S>& p) {
  require_feature_map(x, "conv2d");
  if (p.weight.rank() != 4 || p.bias.rank() != 1 || p.bias.dim(0) != p.weight.dim(0)) {
    throw DimensionError("conv2d: malformed parameters weight " + shape_str(p.weight.shape()) +
                         " bias " + shape_str(p.bias.shape()));
  }
  if (p.weight.dim(1) != x.dim(0)) {
    throw DimensionError("conv2d: weight " + shape_str(p.weight.shape()) + " expects " +
                         std::to_string(p.weight.dim(1)) + " input channels, input is " +
                         shape_str(x.shape()));
  }
  if (p.stride[0] != 1 || p.stride[1] != 1) {
    throw ContractError("conv2d: only unit stride is supported");
  }
  ConvGeometry g;
  g.in_ch = x.dim(0);
  g.out_ch = p.weight.dim(0);
  g.height = x.dim(1);
  g.width = x.dim(2);
  g.kernel_h = p.weight.dim(2);
  g.kernel_w = p.weight.dim(3);
  if (p.padding == Padding::kSame) {
    g.pad_top = (g.kernel_h - 1) / 2;
    g.pad_bottom = g.kernel_h - 1 - g.pad_top;
    g.pad_left = (g.kernel_w - 1) / 2;
    g.pad_right = g.kernel_w - 1 - g.pad_left;
  } else if (g.kernel_h > g.height || g.kernel_w > g.width) {
    throw DimensionError("conv2d: kernel " + shape_str(p.weight.shape()) +
                         " larger than unpadded input " + shape_str(x.shape()));
  }

  std::vector<S> out(g.out_ch * g.out_h() * g.out_w());
  kernels::conv2d_forward<S>(g, x.data(), p.weight.data(), p.bias.data(), out);
  Tensor<S> result = make_result(Shape{g.out_ch, g.out_h(), g.out_w()}, std::move(out));

  internal::maybe_record<S>(
      {x, p.weight, p.bias}, result,
      [g, xn = x.node(), wn = p.weight.node(), bn = p.bias.node(), on = result.node()]() {
        if (xn->requires_grad) {
          kernels::conv2d_backward_input<S>(g, wn->data, on->grad, xn->grad);
        }
        if (wn->requires_grad || bn->requires_grad) {
          std::vector<S> w_scratch, b_scratch;
          kernels::conv2d_backward_params<S>(g, xn->data, on->grad, grad_or_scratch(*wn, w_scratch),
                                             grad_or_scratch(*bn, b_scratch));
        }
      });
  return result;
}

template <typename S>
Tensor<S> conv2d_transpose(const Tensor<S>& x, const ConvT2dParams<S>& p) {
  require_feature_map(x, "conv2d_transpose");
  if (p.weight.rank() != 4 || p.weight.dim(2) != 2 || p.weight.dim(3) != 2 ||
      p.bias.rank() != 1 || p.bias.dim(0) != p.weight.dim(1)) {
    throw DimensionError("conv2d_transpose: malformed parameters weight " +
                         shape_str(p.weight.shape()) + " bias " + shape_str(p.bias.shape()));
  }
  if (p.weight.dim(0) != x.dim(0)) {
    throw DimensionError("conv2d_transpose: weight " + shape_str(p.weight.shape()) +
                         " does not match input " + shape_str(x.shape()));
  }
  UpGeometry g{x.dim(0), p.weight.dim(1), x.dim(1), x.dim(2)};
  std::vector<S> out(g.out_ch * 4 * g.height * g.width);
  kernels::upconv2x2_forward<S>(g, x.data(), p.weight.data(), p.bias.data(), out);
  Tensor<S> result = make_result(Shape{g.out_ch, 2 * g.height, 2 * g.width}, std::move(out));

  internal::maybe_record<S>(
      {x, p.weight, p.bias}, result,
      [g, xn = x.node(), wn = p.weight.node(), bn = p.bias.node(), on = result.node()]() {
        if (xn->requires_grad) {
          kernels::upconv2x2_backward_input<S>(g, wn->data, on->grad, xn->grad);
        }
        if (wn->requires_grad || bn->requires_grad) {
          std::vector<S> w_scratch, b_scratch;
          kernels::upconv2x2_backward_params<S>(g, xn->data, on->grad,
                                                grad_or_scratch(*wn, w_scratch),
                                                grad_or_scratch(*bn, b_scratch));
        }
      });
  return result;
}

template <typename S>
Tensor<S> maxpool2x2(const Tensor<S>& x) {
  require_feature_map(x, "maxpool2x2");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ContractError("maxpool2x2: spatial extents must be even, got " + shape_str(x.shape()));
  }
  const std::size_t n = c * (h / 2) * (w / 2);
  std::vector<S> out(n);
  auto argmax = std::make_shared<std::vector<std::size_t>>(n);
  kernels::maxpool2x2_forward<S>(c, h, w, x.data(), out, *argmax);
  Tensor<S> result = make_result(Shape{c, h / 2, w / 2}, std::move(out));
  internal::maybe_record<S>({x}, result, [c, h, w, argmax, xn = x.node(), on = result.node()]() {
    kernels::maxpool2x2_backward<S>(c, h, w, *argmax, on->grad, xn->grad);
  });
  return result;
}

template <typename S>
Tensor<S> linear(const Tensor<S>& x, const LinearParams<S>& p) {
  if (!x.defined() || x.rank() != 2 || p.weight.rank() != 2 || p.bias.rank() != 1 ||
      p.weight.dim(1) != x.dim(0) || p.bias.dim(0) != p.weight.dim(0)) {
    throw DimensionError("linear: weight " + shape_str(p.weight.shape()) + ", bias " +
                         shape_str(p.bias.shape()) + " cannot map input " +
                         (x.defined() ? shape_str(x.shape()) : std::string("undefined")));
  }
  const std::size_t out_dim = p.weight.dim(0), in_dim = x.dim(0), cols = x.dim(1);
  std::vector<S> out(out_dim * cols);
  kernels::matmul_nn<S>(out_dim, in_dim, cols, p.weight.data(), x.data(), out, false);
  const auto b = p.bias.data();
  for (std::size_t r = 0; r < out_dim; ++r) {
    for (std::size_t t = 0; t < cols; ++t) out[r * cols + t] += b[r];
  }
  Tensor<S> result = make_result(Shape{out_dim, cols}, std::move(out));
  internal::maybe_record<S>(
      {x, p.weight, p.bias}, result,
      [out_dim, in_dim, cols, xn = x.node(), wn = p.weight.node(), bn = p.bias.node(),
       on = result.node()]() {
        if (xn->requires_grad) {
          kernels::matmul_tn<S>(in_dim, out_dim, cols, wn->data, on->grad, xn->grad, true);
        }
        if (wn->requires_grad) {
          kernels::matmul_nt<S>(out_dim, cols, in_dim, on->grad, xn->data, wn->grad, true);
        }
        if (bn->requires_grad) {
          for (std::size_t r = 0; r < out_dim; ++r) {
            S total = 0;
            for (std::size_t t = 0; t < cols; ++t) total += on->grad[r * cols + t];
            bn->grad[r] += total;
          }
        }
      });
  return result;
}

template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  if (!b.defined()) return a;
  if (!a.defined()) return b;
  require_feature_map(a, "concat_channels");
  require_feature_map(b, "concat_channels");
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
    throw DimensionError("concat_channels: spatial mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  std::vector<S> out;
  out.reserve(a.numel() + b.numel());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  Tensor<S> result = make_result(Shape{a.dim(0) + b.dim(0), a.dim(1), a.dim(2)}, std::move(out));
  internal::maybe_record<S>({a, b}, result, [an = a.node(), bn = b.node(), on = result.node()]() {
    const std::size_t split = an->data.size();
    if (an->requires_grad) {
      for (std::size_t i = 0; i < split; ++i) an->grad[i] += on->grad[i];
    }
    if (bn->requires_grad) {
      for (std::size_t i = 0; i < bn->data.size(); ++i) bn->grad[i] += on->grad[split + i];
    }
  });
  return result;
}

template <typename S>
Tensor<S> slice_channels(const Tensor<S>& x, std::size_t begin, std::size_t end) {
  require_feature_map(x, "slice_channels");
  if (begin >= end || end > x.dim(0)) {
    throw DimensionError("slice_channels: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") outside " + shape_str(x.shape()));
  }
  const std::size_t plane = x.dim(1) * x.dim(2);
  std::vector<S> out(x.data().begin() + begin * plane, x.data().begin() + end * plane);
  Tensor<S> result = make_result(Shape{end - begin, x.dim(1), x.dim(2)}, std::move(out));
  internal::maybe_record<S>({x}, result, [offset = begin * plane, xn = x.node(), on = result.node()]() {
    for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[offset + i] += on->grad[i];
  });
  return result;
}

template <typename S>
Tensor<S> crop_spatial(const Tensor<S>& x, std::size_t height, std::size_t width) {
  require_feature_map(x, "crop_spatial");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (height == 0 || width == 0 || height > h || width > w) {
    throw DimensionError("crop_spatial: cannot crop " + shape_str(x.shape()) + " to " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  std::vector<S> out(c * height * width);
  const auto xv = x.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < height; ++y) {
      std::copy_n(xv.begin() + (ch * h + y) * w, width, out.begin() + (ch * height + y) * width);
    }
  }
  Tensor<S> result = make_result(Shape{c, height, width}, std::move(out));
  internal::maybe_record<S>({x}, result, [c, h, w, height, width, xn = x.node(), on = result.node()]() {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t t = 0; t < width; ++t) {
          xn->grad[(ch * h + y) * w + t] += on->grad[(ch * height + y) * width + t];
        }
      }
    }
  });
  return result;
}

template <typename S>
Tensor<S> pad_spatial(const Tensor<S>& x, std::size_t height, std::size_t width) {
  require_feature_map(x, "pad_spatial");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (height < h || width < w) {
    throw DimensionError("pad_spatial: cannot pad " + shape_str(x.shape()) + " down to " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  std::vector<S> out(c * height * width, S(0));
  const auto xv = x.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      std::copy_n(xv.begin() + (ch * h + y) * w, w, out.begin() + (ch * height + y) * width);
    }
  }
  Tensor<S> result = make_result(Shape{c, height, width}, std::move(out));
  internal::maybe_record<S>({x}, result, [c, h, w, height, width, xn = x.node(), on = result.node()]() {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t t = 0; t < w; ++t) {
          xn->grad[(ch * h + y) * w + t] += on->grad[(ch * height + y) * width + t];
        }
      }
    }
  });
  return result;
}

#define SADU_INSTANTIATE_NN(S)                                                           \
  template Tensor<S> conv2d(const Tensor<S>&, const Conv2dParams<S>&);                   \
  template Tensor<S> conv2d_transpose(const Tensor<S>&, const ConvT2dParams<S>&);        \
  template Tensor<S> maxpool2x2(const Tensor<S>&);                                       \
  template Tensor<S> linear(const Tensor<S>&, const LinearParams<S>&);                   \
  template Tensor<S> concat_channels(const Tensor<S>&, const Tensor<S>&);                \
  template Tensor<S> slice_channels(const Tensor<S>&, std::size_t, std::size_t);         \
  template Tensor<S> crop_spatial(const Tensor<S>&, std::size_t, std::size_t);           \
  template Tensor<S> pad_spatial(const Tensor<S>&, std::size_t, std::size_t);

SADU_INSTANTIATE_NN(float)
SADU_INSTANTIATE_NN(double)

}  // namespace sadu
