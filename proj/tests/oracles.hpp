// SPDX-License-Identifier: Apache-2.0
//
// Brute-force reference computations for tests. Deliberately written as
// plain loops over std::vector<double> with no dependency on the library's
// kernels.

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "sadu/rng.hpp"
#include "sadu/tensor.hpp"

namespace oracle {

inline std::vector<double> to_vec(const sadu::Tensor<double>& t) {
  return {t.data().begin(), t.data().end()};
}

inline std::vector<double> to_vec(const sadu::Tensor<float>& t) {
  return {t.data().begin(), t.data().end()};
}

inline sadu::Tensor<double> random(sadu::Rng& rng, sadu::Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> d(sadu::shape_numel(shape));
  for (double& v : d) v = sadu::uniform(rng, lo, hi);
  return sadu::Tensor<double>(std::move(shape), std::move(d));
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? m : INFINITY;
}

// [m x k] * [k x n], index-triple loop.
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

// Cross-correlation of x [ci x h x w] with w [co x ci x kh x kw]; explicit
// zero-padded copy of the input, extra pad row/column at bottom/right.
inline std::vector<double> conv2d(const std::vector<double>& x, std::size_t ci, std::size_t h,
                                  std::size_t w, const std::vector<double>& wt, const std::vector<double>& bias,
                                  std::size_t co, std::size_t kh, std::size_t kw, bool same) {
  const std::size_t pt = same ? (kh - 1) / 2 : 0, pb = same ? kh - 1 - pt : 0;
  const std::size_t pl = same ? (kw - 1) / 2 : 0, pr = same ? kw - 1 - pl : 0;
  const std::size_t hp = h + pt + pb, wp = w + pl + pr;
  std::vector<double> padded(ci * hp * wp, 0.0);
  for (std::size_t c = 0; c < ci; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t z = 0; z < w; ++z) padded[(c * hp + y + pt) * wp + z + pl] = x[(c * h + y) * w + z];
  const std::size_t oh = hp - kh + 1, ow = wp - kw + 1;
  std::vector<double> out(co * oh * ow, 0.0);
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t z = 0; z < ow; ++z) {
        double s = bias.empty() ? 0.0 : bias[o];
        for (std::size_t c = 0; c < ci; ++c)
          for (std::size_t a = 0; a < kh; ++a)
            for (std::size_t b = 0; b < kw; ++b)
              s += wt[((o * ci + c) * kh + a) * kw + b] * padded[(c * hp + y + a) * wp + z + b];
        out[(o * oh + y) * ow + z] = s;
      }
  return out;
}

// 2x2 stride-2 transposed conv by scattering stamps; w is [ci x co x 2 x 2].
inline std::vector<double> upconv(const std::vector<double>& x, std::size_t ci, std::size_t h, std::size_t w,
                                  const std::vector<double>& wt, const std::vector<double>& bias, std::size_t co) {
  std::vector<double> out(co * 4 * h * w, 0.0);
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t i = 0; i < 4 * h * w; ++i) out[o * 4 * h * w + i] = bias[o];
  for (std::size_t c = 0; c < ci; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t z = 0; z < w; ++z)
        for (std::size_t o = 0; o < co; ++o)
          for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b)
              out[(o * 2 * h + 2 * y + a) * 2 * w + 2 * z + b] +=
                  x[(c * h + y) * w + z] * wt[((c * co + o) * 2 + a) * 2 + b];
  return out;
}

inline std::vector<double> maxpool(const std::vector<double>& x, std::size_t c, std::size_t h, std::size_t w) {
  std::vector<double> out(c * (h / 2) * (w / 2));
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h / 2; ++y)
      for (std::size_t z = 0; z < w / 2; ++z) {
        double m = -INFINITY;
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t b = 0; b < 2; ++b) m = std::max(m, x[(ch * h + 2 * y + a) * w + 2 * z + b]);
        out[(ch * (h / 2) + y) * (w / 2) + z] = m;
      }
  return out;
}

inline double elu(double v) { return v >= 0 ? v : std::expm1(v); }

// Direct DFT of one real frame, bins 0..n/2.
inline std::vector<std::complex<double>> dft(const std::vector<double>& frame) {
  const std::size_t n = frame.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> s = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * t % n) / static_cast<double>(n);
      s += frame[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = s;
  }
  return out;
}

// Self-attention by direct summation: x is [c x f x t], 1x1 convs given as
// [out x in] matrices, linears as [e x (c' f)] matrices.
struct AttentionOracle {
  std::vector<double> out;   // [2c x f x t]
  std::vector<double> beta;  // [t x t]
};

inline AttentionOracle attention(const std::vector<double>& x, std::size_t c, std::size_t f, std::size_t t,
                                 const std::vector<double>& wq, const std::vector<double>& bq,
                                 const std::vector<double>& wk, const std::vector<double>& bk,
                                 const std::vector<double>& wv, const std::vector<double>& bv,
                                 const std::vector<double>& lq, const std::vector<double>& lqb,
                                 const std::vector<double>& lk, const std::vector<double>& lkb, std::size_t ca,
                                 std::size_t e) {
  auto pointwise = [&](const std::vector<double>& wt, const std::vector<double>& b, std::size_t co) {
    std::vector<double> y(co * f * t);
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t p = 0; p < f * t; ++p) {
        double s = b[o];
        for (std::size_t i = 0; i < c; ++i) s += wt[o * c + i] * x[i * f * t + p];
        y[o * f * t + p] = s;
      }
    return y;
  };
  const auto q = pointwise(wq, bq, ca), k = pointwise(wk, bk, ca), v = pointwise(wv, bv, c);
  // Q(i)[a] = sum_{ch, fr} lq[a][ch * f + fr] * q[ch][fr][i] + lqb[a]
  auto embed = [&](const std::vector<double>& src, const std::vector<double>& l, const std::vector<double>& lb,
                   std::size_t seg) {
    std::vector<double> out(e);
    for (std::size_t a = 0; a < e; ++a) {
      double s = lb[a];
      for (std::size_t ch = 0; ch < ca; ++ch)
        for (std::size_t fr = 0; fr < f; ++fr) s += l[a * ca * f + ch * f + fr] * src[(ch * f + fr) * t + seg];
      out[a] = s;
    }
    return out;
  };
  AttentionOracle r;
  r.beta.assign(t * t, 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    const auto qi = embed(q, lq, lqb, i);
    std::vector<double> s(t);
    double mx = -INFINITY;
    for (std::size_t j = 0; j < t; ++j) {
      const auto kj = embed(k, lk, lkb, j);
      s[j] = 0.0;
      for (std::size_t a = 0; a < e; ++a) s[j] += qi[a] * kj[a];
      mx = std::max(mx, s[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < t; ++j) z += std::exp(s[j] - mx);
    for (std::size_t j = 0; j < t; ++j) r.beta[i * t + j] = std::exp(s[j] - mx) / z;
  }
  r.out.assign(2 * c * f * t, 0.0);
  for (std::size_t p = 0; p < c * f * t; ++p) r.out[p] = x[p];
  for (std::size_t row = 0; row < c * f; ++row)
    for (std::size_t i = 0; i < t; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < t; ++j) s += r.beta[i * t + j] * v[row * t + j];
      r.out[c * f * t + row * t + i] = s;
    }
  return r;
}

}  // namespace oracle
