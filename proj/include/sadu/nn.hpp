// SPDX-License-Identifier: Apache-2.0
//
// Differentiable layers over [channels x height x width] feature maps.
// Convolutions use the cross-correlation convention (no kernel flip).

#pragma once

#include <array>
#include <cstddef>

#include "sadu/tensor.hpp"

namespace sadu {

enum class Padding {
  kSame,  // zero pad (k - 1) in total; the odd extra row/column goes bottom/right
  kNone,
};

template <typename S>
struct Conv2dParams {
  Tensor<S> weight;  // [out_ch x in_ch x kh x kw]
  Tensor<S> bias;    // [out_ch]
  Padding padding = Padding::kSame;
  std::array<std::size_t, 2> stride{1, 1};  // only unit stride is supported
};

/// Upsampling layer: 2x2 kernel, stride 2.
template <typename S>
struct ConvT2dParams {
  Tensor<S> weight;  // [in_ch x out_ch x 2 x 2]
  Tensor<S> bias;    // [out_ch]
};

template <typename S>
struct LinearParams {
  Tensor<S> weight;  // [out_dim x in_dim]
  Tensor<S> bias;    // [out_dim]
};

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Conv2dParams<S>& p);

/// [C x H x W] -> [C' x 2H x 2W]; each input pixel stamps a 2x2 block.
template <typename S>
Tensor<S> conv2d_transpose(const Tensor<S>& x, const ConvT2dParams<S>& p);

/// Requires even H and W. Gradient goes to the first maximum in
/// row-major window order.
template <typename S>
Tensor<S> maxpool2x2(const Tensor<S>& x);

/// Column-wise affine map: weight * x + bias for x of shape [in_dim x T].
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const LinearParams<S>& p);

/// Stacks b's channels after a's. An undefined `b` returns `a` unchanged.
template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b);

/// Channels [begin, end) of a feature map.
template <typename S>
Tensor<S> slice_channels(const Tensor<S>& x, std::size_t begin, std::size_t end);

/// Keeps the top-left [height x width] of every channel.
template <typename S>
Tensor<S> crop_spatial(const Tensor<S>& x, std::size_t height, std::size_t width);

/// Zero-extends every channel at the bottom/right to [height x width].
template <typename S>
Tensor<S> pad_spatial(const Tensor<S>& x, std::size_t height, std::size_t width);

}  // namespace sadu
