// SPDX-License-Identifier: Apache-2.0
// Serial reference kernels against the OpenMP kernels on layer-sized inputs.
#include <benchmark/benchmark.h>

#include <vector>

#include "sadu/kernels.hpp"
#include "sadu/reference_kernels.hpp"
#include "sadu/rng.hpp"

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  sadu::Rng rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(sadu::uniform(rng, -1.0, 1.0));
  return v;
}

// A dense-block layer at the top level: C_in channels over 528 x 64, 3x3 same.
sadu::ConvGeometry conv_geometry(std::size_t in_ch) {
  sadu::ConvGeometry g;
  g.in_ch = in_ch;
  g.out_ch = 8;
  g.height = 528;
  g.width = 64;
  g.kernel_h = g.kernel_w = 3;
  g.pad_top = g.pad_bottom = g.pad_left = g.pad_right = 1;
  return g;
}

template <bool kParallel>
void BM_Conv2dForward(benchmark::State& state) {
  const auto g = conv_geometry(static_cast<std::size_t>(state.range(0)));
  sadu::kernels::set_threads(static_cast<int>(state.range(1)));
  const auto in = random_vec(g.in_ch * g.height * g.width, 1);
  const auto w = random_vec(g.out_ch * g.in_ch * 9, 2);
  const auto b = random_vec(g.out_ch, 3);
  std::vector<float> out(g.out_ch * g.out_h() * g.out_w());
  for (auto _ : state) {
    if constexpr (kParallel) {
      sadu::kernels::conv2d_forward<float>(g, in, w, b, out);
    } else {
      sadu::reference::conv2d_forward<float>(g, in, w, b, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(out.size() * g.in_ch * 9));
}

template <bool kParallel>
void BM_Conv2dBackwardParams(benchmark::State& state) {
  const auto g = conv_geometry(static_cast<std::size_t>(state.range(0)));
  sadu::kernels::set_threads(static_cast<int>(state.range(1)));
  const auto in = random_vec(g.in_ch * g.height * g.width, 1);
  const auto dout = random_vec(g.out_ch * g.out_h() * g.out_w(), 4);
  std::vector<float> dw(g.out_ch * g.in_ch * 9), db(g.out_ch);
  for (auto _ : state) {
    if constexpr (kParallel) {
      sadu::kernels::conv2d_backward_params<float>(g, in, dout, dw, db);
    } else {
      sadu::reference::conv2d_backward_params<float>(g, in, dout, dw, db);
    }
    benchmark::DoNotOptimize(dw.data());
  }
}

// Attention scores: (T x E) times (E x T) after projecting F x C' features.
template <bool kParallel>
void BM_Matmul(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0)), k = m, n = m;
  sadu::kernels::set_threads(static_cast<int>(state.range(1)));
  const auto a = random_vec(m * k, 5), b = random_vec(k * n, 6);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    if constexpr (kParallel) {
      sadu::kernels::matmul_nn<float>(m, k, n, a, b, c, false);
    } else {
      sadu::reference::matmul_nn<float>(m, k, n, a, b, c, false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m * k * n));
}

void thread_args(benchmark::internal::Benchmark* b, std::initializer_list<std::int64_t> sizes) {
  const std::int64_t hw = sadu::kernels::max_threads();
  for (std::int64_t s : sizes) {
    b->Args({s, 1});
    if (hw > 1) b->Args({s, hw});
  }
}

}  // namespace

BENCHMARK(BM_Conv2dForward<false>)->Apply([](auto* b) { thread_args(b, {8, 24}); })->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dForward<true>)->Apply([](auto* b) { thread_args(b, {8, 24}); })->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dBackwardParams<false>)->Apply([](auto* b) { thread_args(b, {8, 24}); })->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dBackwardParams<true>)->Apply([](auto* b) { thread_args(b, {8, 24}); })->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Matmul<false>)->Apply([](auto* b) { thread_args(b, {128, 256}); })->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Matmul<true>)->Apply([](auto* b) { thread_args(b, {128, 256}); })->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
