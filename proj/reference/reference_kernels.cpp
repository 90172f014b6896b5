// SPDX-License-Identifier: Apache-2.0
#include "sadu/reference_kernels.hpp"

#include <limits>

namespace sadu::reference {

template <typename S>
void conv2d_forward(const ConvGeometry& g, std::span<const S> in, std::span<const S> weight,
                    std::span<const S> bias, std::span<S> out) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t co = 0; co < g.out_ch; ++co) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        S acc = bias[co];
        for (std::size_t ci = 0; ci < g.in_ch; ++ci) {
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              const long iy = static_cast<long>(oy + ky) - static_cast<long>(g.pad_top);
              const long ix = static_cast<long>(ox + kx) - static_cast<long>(g.pad_left);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.height) ||
                  ix >= static_cast<long>(g.width)) {
                continue;
              }
              acc += weight[((co * g.in_ch + ci) * g.kernel_h + ky) * g.kernel_w + kx] *
                     in[(ci * g.height + iy) * g.width + ix];
            }
          }
        }
        out[(co * oh + oy) * ow + ox] = acc;
      }
    }
  }
}

template <typename S>
void conv2d_backward_input(const ConvGeometry& g, std::span<const S> weight,
                           std::span<const S> dout, std::span<S> din) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t co = 0; co < g.out_ch; ++co) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const S d = dout[(co * oh + oy) * ow + ox];
        for (std::size_t ci = 0; ci < g.in_ch; ++ci) {
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              const long iy = static_cast<long>(oy + ky) - static_cast<long>(g.pad_top);
              const long ix = static_cast<long>(ox + kx) - static_cast<long>(g.pad_left);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.height) ||
                  ix >= static_cast<long>(g.width)) {
                continue;
              }
              din[(ci * g.height + iy) * g.width + ix] +=
                  d * weight[((co * g.in_ch + ci) * g.kernel_h + ky) * g.kernel_w + kx];
            }
          }
        }
      }
    }
  }
}

template <typename S>
void conv2d_backward_params(const ConvGeometry& g, std::span<const S> in,
                            std::span<const S> dout, std::span<S> dweight, std::span<S> dbias) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t co = 0; co < g.out_ch; ++co) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const S d = dout[(co * oh + oy) * ow + ox];
        dbias[co] += d;
        for (std::size_t ci = 0; ci < g.in_ch; ++ci) {
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              const long iy = static_cast<long>(oy + ky) - static_cast<long>(g.pad_top);
              const long ix = static_cast<long>(ox + kx) - static_cast<long>(g.pad_left);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.height) ||
                  ix >= static_cast<long>(g.width)) {
                continue;
              }
              dweight[((co * g.in_ch + ci) * g.kernel_h + ky) * g.kernel_w + kx] +=
                  d * in[(ci * g.height + iy) * g.width + ix];
            }
          }
        }
      }
    }
  }
}

template <typename S>
void upconv2x2_forward(const UpGeometry& g, std::span<const S> in, std::span<const S> weight,
                       std::span<const S> bias, std::span<S> out) {
  const std::size_t oh = 2 * g.height, ow = 2 * g.width;
  for (std::size_t co = 0; co < g.out_ch; ++co) {
    for (std::size_t i = 0; i < oh * ow; ++i) out[co * oh * ow + i] = bias[co];
  }
  for (std::size_t ci = 0; ci < g.in_ch; ++ci) {
    for (std::size_t y = 0; y < g.height; ++y) {
      for (std::size_t x = 0; x < g.width; ++x) {
        const S v = in[(ci * g.height + y) * g.width + x];
        for (std::size_t co = 0; co < g.out_ch; ++co) {
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              out[(co * oh + 2 * y + dy) * ow + 2 * x + dx] +=
                  v * weight[((ci * g.out_ch + co) * 2 + dy) * 2 + dx];
            }
          }
        }
      }
    }
  }
}

template <typename S>
void upconv2x2_backward_input(const UpGeometry& g, std::span<const S> weight,
                              std::span<const S> dout, std::span<S> din) {
  const std::size_t oh = 2 * g.height, ow = 2 * g.width;
  for (std::size_t ci = 0; ci < g.in_ch; ++ci) {
    for (std::size_t y = 0; y < g.height; ++y) {
      for (std::size_t x = 0; x < g.width; ++x) {
        S acc = 0;
        for (std::size_t co = 0; co < g.out_ch; ++co) {
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              acc += dout[(co * oh + 2 * y + dy) * ow + 2 * x + dx] *
                     weight[((ci * g.out_ch + co) * 2 + dy) * 2 + dx];
            }
          }
        }
        din[(ci * g.height + y) * g.width + x] += acc;
      }
    }
  }
}

template <typename S>
void upconv2x2_backward_params(const UpGeometry& g, std::span<const S> in,
                               std::span<const S> dout, std::span<S> dweight, std::span<S> dbias) {
  const std::size_t oh = 2 * g.height, ow = 2 * g.width;
  for (std::size_t co = 0; co < g.out_ch; ++co) {
    for (std::size_t i = 0; i < oh * ow; ++i) dbias[co] += dout[co * oh * ow + i];
  }
  for (std::size_t ci = 0; ci < g.in_ch; ++ci) {
    for (std::size_t co = 0; co < g.out_ch; ++co) {
      for (std::size_t dy = 0; dy < 2; ++dy) {
        for (std::size_t dx = 0; dx < 2; ++dx) {
          S acc = 0;
          for (std::size_t y = 0; y < g.height; ++y) {
            for (std::size_t x = 0; x < g.width; ++x) {
              acc += in[(ci * g.height + y) * g.width + x] *
                     dout[(co * oh + 2 * y + dy) * ow + 2 * x + dx];
            }
          }
          dweight[((ci * g.out_ch + co) * 2 + dy) * 2 + dx] += acc;
        }
      }
    }
  }
}

template <typename S>
void maxpool2x2_forward(std::size_t channels, std::size_t height, std::size_t width,
                        std::span<const S> in, std::span<S> out, std::span<std::size_t> argmax) {
  const std::size_t oh = height / 2, ow = width / 2;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        S best = -std::numeric_limits<S>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (c * height + 2 * y + dy) * width + 2 * x + dx;
            if (in[idx] > best) {
              best = in[idx];
              best_idx = idx;
            }
          }
        }
        out[(c * oh + y) * ow + x] = best;
        argmax[(c * oh + y) * ow + x] = best_idx;
      }
    }
  }
}

template <typename S>
void maxpool2x2_backward(std::size_t channels, std::size_t height, std::size_t width,
                         std::span<const std::size_t> argmax, std::span<const S> dout,
                         std::span<S> din) {
  const std::size_t n = channels * (height / 2) * (width / 2);
  for (std::size_t i = 0; i < n; ++i) din[argmax[i]] += dout[i];
}

template <typename S>
void matmul_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const S> a,
               std::span<const S> b, std::span<S> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      S acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

template <typename S>
void matmul_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const S> a,
               std::span<const S> b, std::span<S> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      S acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

template <typename S>
void matmul_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const S> a,
               std::span<const S> b, std::span<S> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      S acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

#define SADU_INSTANTIATE_REFERENCE(S)                                                            \
  template void conv2d_forward<S>(const ConvGeometry&, std::span<const S>, std::span<const S>,  \
                                  std::span<const S>, std::span<S>);                             \
  template void conv2d_backward_input<S>(const ConvGeometry&, std::span<const S>,               \
                                         std::span<const S>, std::span<S>);                      \
  template void conv2d_backward_params<S>(const ConvGeometry&, std::span<const S>,              \
                                          std::span<const S>, std::span<S>, std::span<S>);       \
  template void upconv2x2_forward<S>(const UpGeometry&, std::span<const S>, std::span<const S>, \
                                     std::span<const S>, std::span<S>);                          \
  template void upconv2x2_backward_input<S>(const UpGeometry&, std::span<const S>,              \
                                            std::span<const S>, std::span<S>);                   \
  template void upconv2x2_backward_params<S>(const UpGeometry&, std::span<const S>,             \
                                             std::span<const S>, std::span<S>, std::span<S>);    \
  template void maxpool2x2_forward<S>(std::size_t, std::size_t, std::size_t, std::span<const S>, \
                                      std::span<S>, std::span<std::size_t>);                     \
  template void maxpool2x2_backward<S>(std::size_t, std::size_t, std::size_t,                    \
                                       std::span<const std::size_t>, std::span<const S>,         \
                                       std::span<S>);                                            \
  template void matmul_nn<S>(std::size_t, std::size_t, std::size_t, std::span<const S>,          \
                             std::span<const S>, std::span<S>, bool);                            \
  template void matmul_tn<S>(std::size_t, std::size_t, std::size_t, std::span<const S>,          \
                             std::span<const S>, std::span<S>, bool);                            \
  template void matmul_nt<S>(std::size_t, std::size_t, std::size_t, std::span<const S>,          \
                             std::span<const S>, std::span<S>, bool);

SADU_INSTANTIATE_REFERENCE(float)
SADU_INSTANTIATE_REFERENCE(double)

}  // namespace sadu::reference
