// SPDX-License-Identifier: Apache-2.0
//
// Raw compute kernels behind the tensor and layer ops.
//
// Every kernel parallelises over an output axis (rows or channels) with OpenMP
// and keeps a fixed summation order per output element, so results are
// bitwise identical for any thread count. Backward kernels accumulate (+=)
// into their destination buffers; forward kernels overwrite.
//
// reference_kernels.hpp declares the same entry points as plain serial loops;
// tests and the benchmark compare the two.

#pragma once

#include <cstddef>
#include <span>

namespace sadu {

/// Stride-1 2-D cross-correlation over a [C x H x W] input.
struct ConvGeometry {
  std::size_t in_ch = 0, out_ch = 0;
  std::size_t height = 0, width = 0;
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t pad_top = 0, pad_bottom = 0, pad_left = 0, pad_right = 0;

  std::size_t out_h() const { return height + pad_top + pad_bottom - kernel_h + 1; }
  std::size_t out_w() const { return width + pad_left + pad_right - kernel_w + 1; }
};

/// 2x2, stride-2 transposed convolution; weight laid out [in x out x 2 x 2].
struct UpGeometry {
  std::size_t in_ch = 0, out_ch = 0;
  std::size_t height = 0, width = 0;
};

namespace kernels {

int max_threads();
void set_threads(int n);

template <typename S>
void conv2d_forward(const ConvGeometry& g, std::span<const S> in, std::span<const S> weight,
                    std::span<const S> bias, std::span<S> out);
template <typename S>
void conv2d_backward_input(const ConvGeometry& g, std::span<const S> weight,
                           std::span<const S> dout, std::span<S> din);
template <typename S>
void conv2d_backward_params(const ConvGeometry& g, std::span<const S> in,
                            std::span<const S> dout, std::span<S> dweight, std::span<S> dbias);

template <typename S>
void upconv2x2_forward(const UpGeometry& g, std::span<const S> in, std::span<const S> weight,
                       std::span<const S> bias, std::span<S> out);
template <typename S>
void upconv2x2_backward_input(const UpGeometry& g, std::span<const S> weight,
                              std::span<const S> dout, std::span<S> din);
template <typename S>
void upconv2x2_backward_params(const UpGeometry& g, std::span<const S> in,
                               std::span<const S> dout, std::span<S> dweight, std::span<S> dbias);

/// argmax receives the flat input index of each window maximum (first on ties).
template <typename S>
void maxpool2x2_forward(std::size_t channels, std::size_t height, std::size_t width,
                        std::span<const S> in, std::span<S> out, std::span<std::size_t> argmax);
template <typename S>
void maxpool2x2_backward(std::size_t channels, std::size_t height, std::size_t width,
                         std::span<const std::size_t> argmax, std::span<const S> dout,
                         std::span<S> din);

/// c[m x n] (=|+=) a[m x k] * b[k x n]
template <typename S>
void matmul_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const S> a,
               std::span<const S> b, std::span<S> c, bool accumulate);
/// c[m x n] (=|+=) a[k x m]^T * b[k x n]
template <typename S>
void matmul_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const S> a,
               std::span<const S> b, std::span<S> c, bool accumulate);
/// c[m x n] (=|+=) a[m x k] * b[n x k]^T
template <typename S>
void matmul_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const S> a,
               std::span<const S> b, std::span<S> c, bool accumulate);

}  // namespace kernels
}  // namespace sadu
