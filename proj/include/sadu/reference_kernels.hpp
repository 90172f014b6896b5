// SPDX-License-Identifier: Apache-2.0
//
// Serial reference kernels. Naive loops that mirror kernels.hpp one-to-one;
// linked only into tests and the benchmark.

#pragma once

#include <cstddef>
#include <span>

#include "sadu/kernels.hpp"

namespace sadu::reference {

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

template <typename S>
void maxpool2x2_forward(std::size_t channels, std::size_t height, std::size_t width,
                        std::span<const S> in, std::span<S> out, std::span<std::size_t> argmax);
template <typename S>
void maxpool2x2_backward(std::size_t channels, std::size_t height, std::size_t width,
                         std::span<const std::size_t> argmax, std::span<const S> dout,
                         std::span<S> din);

template <typename S>
void matmul_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const S> a,
               std::span<const S> b, std::span<S> c, bool accumulate);
template <typename S>
void matmul_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const S> a,
               std::span<const S> b, std::span<S> c, bool accumulate);
template <typename S>
void matmul_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const S> a,
               std::span<const S> b, std::span<S> c, bool accumulate);

}  // namespace sadu::reference
