// SPDX-License-Identifier: Apache-2.0
#include "sadu/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

namespace sadu::kernels {

namespace {

using Index = std::ptrdiff_t;

// Output columns [lo, hi) whose source column ox + shift lies inside [0, width).
inline void column_range(Index out_w, Index width, Index shift, Index& lo, Index& hi) {
  lo = std::max<Index>(0, -shift);
  hi = std::min<Index>(out_w, width - shift);
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

void set_threads(int n) { omp_set_num_threads(std::max(1, n)); }

template <typename S>
void conv2d_forward(const ConvGeometry& g, std::span<const S> in, std::span<const S> weight,
                    std::span<const S> bias, std::span<S> out) {
  const Index oh = static_cast<Index>(g.out_h()), ow = static_cast<Index>(g.out_w());
  const Index height = static_cast<Index>(g.height), width = static_cast<Index>(g.width);
  const Index out_ch = static_cast<Index>(g.out_ch), in_ch = static_cast<Index>(g.in_ch);
  const Index kh = static_cast<Index>(g.kernel_h), kw = static_cast<Index>(g.kernel_w);
  const Index pt = static_cast<Index>(g.pad_top), pl = static_cast<Index>(g.pad_left);

#pragma omp parallel
  {
    std::vector<S> acc(static_cast<std::size_t>(ow));
#pragma omp for collapse(2) schedule(static)
    for (Index co = 0; co < out_ch; ++co) {
      for (Index oy = 0; oy < oh; ++oy) {
        std::fill(acc.begin(), acc.end(), bias[co]);
        for (Index ci = 0; ci < in_ch; ++ci) {
          for (Index ky = 0; ky < kh; ++ky) {
            const Index iy = oy + ky - pt;
            if (iy < 0 || iy >= height) continue;
            const S* in_row = in.data() + (ci * height + iy) * width;
            const S* w = weight.data() + ((co * in_ch + ci) * kh + ky) * kw;
            for (Index kx = 0; kx < kw; ++kx) {
              const Index shift = kx - pl;
              Index lo, hi;
              column_range(ow, width, shift, lo, hi);
              const S wv = w[kx];
              S* a = acc.data();
              const S* src = in_row + shift;
              for (Index ox = lo; ox < hi; ++ox) a[ox] += wv * src[ox];
            }
          }
        }
        std::copy(acc.begin(), acc.end(), out.data() + (co * oh + oy) * ow);
      }
    }
  }
}

template <typename S>
void conv2d_backward_input(const ConvGeometry& g, std::span<const S> weight,
                           std::span<const S> dout, std::span<S> din) {
  const Index oh = static_cast<Index>(g.out_h()), ow = static_cast<Index>(g.out_w());
  const Index height = static_cast<Index>(g.height), width = static_cast<Index>(g.width);
  const Index out_ch = static_cast<Index>(g.out_ch), in_ch = static_cast<Index>(g.in_ch);
  const Index kh = static_cast<Index>(g.kernel_h), kw = static_cast<Index>(g.kernel_w);
  const Index pt = static_cast<Index>(g.pad_top), pl = static_cast<Index>(g.pad_left);

#pragma omp parallel
  {
    std::vector<S> acc(static_cast<std::size_t>(width));
#pragma omp for collapse(2) schedule(static)
    for (Index ci = 0; ci < in_ch; ++ci) {
      for (Index iy = 0; iy < height; ++iy) {
        std::fill(acc.begin(), acc.end(), S(0));
        for (Index co = 0; co < out_ch; ++co) {
          for (Index ky = 0; ky < kh; ++ky) {
            const Index oy = iy + pt - ky;
            if (oy < 0 || oy >= oh) continue;
            const S* d_row = dout.data() + (co * oh + oy) * ow;
            const S* w = weight.data() + ((co * in_ch + ci) * kh + ky) * kw;
            for (Index kx = 0; kx < kw; ++kx) {
              // ix = ox + kx - pl  <=>  ox = ix + (pl - kx)
              const Index shift = pl - kx;
              Index lo, hi;
              column_range(width, ow, shift, lo, hi);
              const S wv = w[kx];
              S* a = acc.data();
              const S* src = d_row + shift;
              for (Index ix = lo; ix < hi; ++ix) a[ix] += wv * src[ix];
            }
          }
        }
        S* dst = din.data() + (ci * height + iy) * width;
        for (Index ix = 0; ix < width; ++ix) dst[ix] += acc[ix];
      }
    }
  }
}

template <typename S>
void conv2d_backward_params(const ConvGeometry& g, std::span<const S> in,
                            std::span<const S> dout, std::span<S> dweight, std::span<S> dbias) {
  const Index oh = static_cast<Index>(g.out_h()), ow = static_cast<Index>(g.out_w());
  const Index height = static_cast<Index>(g.height), width = static_cast<Index>(g.width);
  const Index out_ch = static_cast<Index>(g.out_ch), in_ch = static_cast<Index>(g.in_ch);
  const Index kh = static_cast<Index>(g.kernel_h), kw = static_cast<Index>(g.kernel_w);
  const Index pt = static_cast<Index>(g.pad_top), pl = static_cast<Index>(g.pad_left);

#pragma omp parallel
  {
    std::vector<S> row_acc(static_cast<std::size_t>(ow));
#pragma omp for schedule(static)
    for (Index co = 0; co < out_ch; ++co) {
      std::fill(row_acc.begin(), row_acc.end(), S(0));
      for (Index oy = 0; oy < oh; ++oy) {
        const S* d_row = dout.data() + (co * oh + oy) * ow;
        for (Index ox = 0; ox < ow; ++ox) row_acc[ox] += d_row[ox];
      }
      S total = 0;
      for (Index ox = 0; ox < ow; ++ox) total += row_acc[ox];
      dbias[co] += total;
    }

    // Per-tap partial sums over columns; the final column reduction keeps a
    // fixed order so the result does not depend on the thread count.
    std::vector<S> acc(static_cast<std::size_t>(kh * kw * ow));
#pragma omp for collapse(2) schedule(static)
    for (Index co = 0; co < out_ch; ++co) {
      for (Index ci = 0; ci < in_ch; ++ci) {
        std::fill(acc.begin(), acc.end(), S(0));
        for (Index oy = 0; oy < oh; ++oy) {
          const S* d_row = dout.data() + (co * oh + oy) * ow;
          for (Index ky = 0; ky < kh; ++ky) {
            const Index iy = oy + ky - pt;
            if (iy < 0 || iy >= height) continue;
            const S* in_row = in.data() + (ci * height + iy) * width;
            for (Index kx = 0; kx < kw; ++kx) {
              const Index shift = kx - pl;
              Index lo, hi;
              column_range(ow, width, shift, lo, hi);
              S* a = acc.data() + (ky * kw + kx) * ow;
              const S* src = in_row + shift;
              for (Index ox = lo; ox < hi; ++ox) a[ox] += d_row[ox] * src[ox];
            }
          }
        }
        S* dw = dweight.data() + (co * in_ch + ci) * kh * kw;
        for (Index k = 0; k < kh * kw; ++k) {
          S total = 0;
          const S* a = acc.data() + k * ow;
          for (Index ox = 0; ox < ow; ++ox) total += a[ox];
          dw[k] += total;
        }
      }
    }
  }
}

template <typename S>
void upconv2x2_forward(const UpGeometry& g, std::span<const S> in, std::span<const S> weight,
                       std::span<const S> bias, std::span<S> out) {
  const Index height = static_cast<Index>(g.height), width = static_cast<Index>(g.width);
  const Index in_ch = static_cast<Index>(g.in_ch), out_ch = static_cast<Index>(g.out_ch);
  const Index ow = 2 * width, oh = 2 * height;

#pragma omp parallel for collapse(2) schedule(static)
  for (Index co = 0; co < out_ch; ++co) {
    for (Index oy = 0; oy < oh; ++oy) {
      const Index y = oy / 2, dy = oy % 2;
      S* o_row = out.data() + (co * oh + oy) * ow;
      std::fill(o_row, o_row + ow, bias[co]);
      for (Index ci = 0; ci < in_ch; ++ci) {
        const S* i_row = in.data() + (ci * height + y) * width;
        const S w0 = weight[((ci * out_ch + co) * 2 + dy) * 2 + 0];
        const S w1 = weight[((ci * out_ch + co) * 2 + dy) * 2 + 1];
        for (Index x = 0; x < width; ++x) {
          o_row[2 * x] += i_row[x] * w0;
          o_row[2 * x + 1] += i_row[x] * w1;
        }
      }
    }
  }
}

template <typename S>
void upconv2x2_backward_input(const UpGeometry& g, std::span<const S> weight,
                              std::span<const S> dout, std::span<S> din) {
  const Index height = static_cast<Index>(g.height), width = static_cast<Index>(g.width);
  const Index in_ch = static_cast<Index>(g.in_ch), out_ch = static_cast<Index>(g.out_ch);
  const Index ow = 2 * width, oh = 2 * height;

#pragma omp parallel
  {
    std::vector<S> acc(static_cast<std::size_t>(width));
#pragma omp for collapse(2) schedule(static)
    for (Index ci = 0; ci < in_ch; ++ci) {
      for (Index y = 0; y < height; ++y) {
        std::fill(acc.begin(), acc.end(), S(0));
        for (Index co = 0; co < out_ch; ++co) {
          for (Index dy = 0; dy < 2; ++dy) {
            const S* d_row = dout.data() + (co * oh + 2 * y + dy) * ow;
            const S w0 = weight[((ci * out_ch + co) * 2 + dy) * 2 + 0];
            const S w1 = weight[((ci * out_ch + co) * 2 + dy) * 2 + 1];
            for (Index x = 0; x < width; ++x) {
              acc[x] += d_row[2 * x] * w0;
              acc[x] += d_row[2 * x + 1] * w1;
            }
          }
        }
        S* dst = din.data() + (ci * height + y) * width;
        for (Index x = 0; x < width; ++x) dst[x] += acc[x];
      }
    }
  }
}

template <typename S>
void upconv2x2_backward_params(const UpGeometry& g, std::span<const S> in,
                               std::span<const S> dout, std::span<S> dweight, std::span<S> dbias) {
  const Index height = static_cast<Index>(g.height), width = static_cast<Index>(g.width);
  const Index in_ch = static_cast<Index>(g.in_ch), out_ch = static_cast<Index>(g.out_ch);
  const Index ow = 2 * width, oh = 2 * height;

#pragma omp parallel
  {
#pragma omp for schedule(static)
    for (Index co = 0; co < out_ch; ++co) {
      S total = 0;
      const S* plane = dout.data() + co * oh * ow;
      for (Index i = 0; i < oh * ow; ++i) total += plane[i];
      dbias[co] += total;
    }

    std::vector<S> acc(static_cast<std::size_t>(4 * width));
#pragma omp for collapse(2) schedule(static)
    for (Index ci = 0; ci < in_ch; ++ci) {
      for (Index co = 0; co < out_ch; ++co) {
        std::fill(acc.begin(), acc.end(), S(0));
        for (Index y = 0; y < height; ++y) {
          const S* i_row = in.data() + (ci * height + y) * width;
          for (Index dy = 0; dy < 2; ++dy) {
            const S* d_row = dout.data() + (co * oh + 2 * y + dy) * ow;
            S* a0 = acc.data() + (dy * 2 + 0) * width;
            S* a1 = acc.data() + (dy * 2 + 1) * width;
            for (Index x = 0; x < width; ++x) {
              a0[x] += i_row[x] * d_row[2 * x];
              a1[x] += i_row[x] * d_row[2 * x + 1];
            }
          }
        }
        S* dw = dweight.data() + (ci * out_ch + co) * 4;
        for (Index k = 0; k < 4; ++k) {
          S total = 0;
          for (Index x = 0; x < width; ++x) total += acc[k * width + x];
          dw[k] += total;
        }
      }
    }
  }
}

template <typename S>
void maxpool2x2_forward(std::size_t channels, std::size_t height, std::size_t width,
                        std::span<const S> in, std::span<S> out, std::span<std::size_t> argmax) {
  const Index ch = static_cast<Index>(channels);
  const std::size_t oh = height / 2, ow = width / 2;
#pragma omp parallel for schedule(static)
  for (Index c = 0; c < ch; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      const std::size_t top = (static_cast<std::size_t>(c) * height + 2 * y) * width;
      const std::size_t bottom = top + width;
      for (std::size_t x = 0; x < ow; ++x) {
        // Row-major window order; strict '>' keeps the first index on ties.
        std::size_t best = top + 2 * x;
        if (in[top + 2 * x + 1] > in[best]) best = top + 2 * x + 1;
        if (in[bottom + 2 * x] > in[best]) best = bottom + 2 * x;
        if (in[bottom + 2 * x + 1] > in[best]) best = bottom + 2 * x + 1;
        const std::size_t o = (static_cast<std::size_t>(c) * oh + y) * ow + x;
        out[o] = in[best];
        argmax[o] = best;
      }
    }
  }
}

template <typename S>
void maxpool2x2_backward(std::size_t channels, std::size_t height, std::size_t width,
                         std::span<const std::size_t> argmax, std::span<const S> dout,
                         std::span<S> din) {
  const Index ch = static_cast<Index>(channels);
  const std::size_t plane = (height / 2) * (width / 2);
#pragma omp parallel for schedule(static)
  for (Index c = 0; c < ch; ++c) {
    const std::size_t base = static_cast<std::size_t>(c) * plane;
    for (std::size_t i = base; i < base + plane; ++i) din[argmax[i]] += dout[i];
  }
}

namespace {

template <typename S>
void saxpy_rows(std::size_t m, std::size_t k, std::size_t n, const S* a, std::size_t a_row_stride,
                std::size_t a_col_stride, const S* b, S* c, bool accumulate) {
  const Index rows = static_cast<Index>(m);
#pragma omp parallel
  {
    std::vector<S> tmp(n);
#pragma omp for schedule(static)
    for (Index i = 0; i < rows; ++i) {
      std::fill(tmp.begin(), tmp.end(), S(0));
      for (std::size_t p = 0; p < k; ++p) {
        const S av = a[static_cast<std::size_t>(i) * a_row_stride + p * a_col_stride];
        const S* b_row = b + p * n;
        for (std::size_t j = 0; j < n; ++j) tmp[j] += av * b_row[j];
      }
      S* c_row = c + static_cast<std::size_t>(i) * n;
      if (accumulate) {
        for (std::size_t j = 0; j < n; ++j) c_row[j] += tmp[j];
      } else {
        std::copy(tmp.begin(), tmp.end(), c_row);
      }
    }
  }
}

}  // namespace

template <typename S>
void matmul_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const S> a,
               std::span<const S> b, std::span<S> c, bool accumulate) {
  saxpy_rows(m, k, n, a.data(), k, 1, b.data(), c.data(), accumulate);
}

template <typename S>
void matmul_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const S> a,
               std::span<const S> b, std::span<S> c, bool accumulate) {
  saxpy_rows(m, k, n, a.data(), 1, m, b.data(), c.data(), accumulate);
}

template <typename S>
void matmul_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const S> a,
               std::span<const S> b, std::span<S> c, bool accumulate) {
  std::vector<S> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  saxpy_rows(m, k, n, a.data(), k, 1, bt.data(), c.data(), accumulate);
}

#define SADU_INSTANTIATE_KERNELS(S)                                                              \
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

SADU_INSTANTIATE_KERNELS(float)
SADU_INSTANTIATE_KERNELS(double)

}  // namespace sadu::kernels
