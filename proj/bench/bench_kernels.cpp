// SPDX-License-Identifier: Apache-2.0
//
// Serial reference kernels against their OpenMP counterparts. Thread count
// follows OMP_NUM_THREADS / SHR_NUM_THREADS.

#include <vector>

#include <benchmark/benchmark.h>

#include "shr/kernels.hpp"
#include "shr/rng.hpp"

namespace {

using namespace shr;

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) {
    x = rng.uniform(-1.0, 1.0);
  }
  return v;
}

template <auto Kernel>
void bm_matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = random_vec(static_cast<std::size_t>(n) * n, 1);
  const auto b = random_vec(static_cast<std::size_t>(n) * n, 2);
  std::vector<double> out(a.size());
  for (auto _ : state) {
    Kernel(a, b, out, n);
    benchmark::DoNotOptimize(out.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}

// RCC of an n x n heatmap is one self-product: 64 matches the toy grids.
BENCHMARK(bm_matmul<kernels::serial::matmul>)->Name("matmul/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bm_matmul<kernels::omp::matmul>)->Name("matmul/omp")->Arg(64)->Arg(128)->Arg(256);

kernels::ConvShape conv_shape(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  return {8, 8, 3, side, side};
}

template <auto Kernel>
void bm_conv_forward(benchmark::State& state) {
  const auto s = conv_shape(state);
  const auto in = random_vec(static_cast<std::size_t>(s.in_channels * s.padded_height() * s.padded_width()), 3);
  const auto w = random_vec(static_cast<std::size_t>(s.out_channels * s.in_channels * s.kernel * s.kernel), 4);
  const auto bias = random_vec(static_cast<std::size_t>(s.out_channels), 5);
  std::vector<double> out(static_cast<std::size_t>(s.out_channels * s.height * s.width));
  for (auto _ : state) {
    Kernel(s, in, w, bias, out);
    benchmark::DoNotOptimize(out.data());
    benchmark::ClobberMemory();
  }
}

BENCHMARK(bm_conv_forward<kernels::serial::conv2d_forward>)->Name("conv_forward/serial")->Arg(64)->Arg(128);
BENCHMARK(bm_conv_forward<kernels::omp::conv2d_forward>)->Name("conv_forward/omp")->Arg(64)->Arg(128);

template <auto Kernel>
void bm_conv_backward_input(benchmark::State& state) {
  const auto s = conv_shape(state);
  const auto g = random_vec(static_cast<std::size_t>(s.out_channels * s.height * s.width), 6);
  const auto w = random_vec(static_cast<std::size_t>(s.out_channels * s.in_channels * s.kernel * s.kernel), 7);
  std::vector<double> gin(static_cast<std::size_t>(s.in_channels * s.padded_height() * s.padded_width()));
  for (auto _ : state) {
    Kernel(s, g, w, gin);
    benchmark::DoNotOptimize(gin.data());
    benchmark::ClobberMemory();
  }
}

BENCHMARK(bm_conv_backward_input<kernels::serial::conv2d_backward_input>)
    ->Name("conv_backward_input/serial")
    ->Arg(64)
    ->Arg(128);
BENCHMARK(bm_conv_backward_input<kernels::omp::conv2d_backward_input>)
    ->Name("conv_backward_input/omp")
    ->Arg(64)
    ->Arg(128);

template <auto Kernel>
void bm_conv_backward_weights(benchmark::State& state) {
  const auto s = conv_shape(state);
  const auto g = random_vec(static_cast<std::size_t>(s.out_channels * s.height * s.width), 8);
  const auto in = random_vec(static_cast<std::size_t>(s.in_channels * s.padded_height() * s.padded_width()), 9);
  std::vector<double> gw(static_cast<std::size_t>(s.out_channels * s.in_channels * s.kernel * s.kernel));
  std::vector<double> gb(static_cast<std::size_t>(s.out_channels));
  for (auto _ : state) {
    Kernel(s, g, in, gw, gb);
    benchmark::DoNotOptimize(gw.data());
    benchmark::ClobberMemory();
  }
}

BENCHMARK(bm_conv_backward_weights<kernels::serial::conv2d_backward_weights>)
    ->Name("conv_backward_weights/serial")
    ->Arg(64)
    ->Arg(128);
BENCHMARK(bm_conv_backward_weights<kernels::omp::conv2d_backward_weights>)
    ->Name("conv_backward_weights/omp")
    ->Arg(64)
    ->Arg(128);

}  // namespace

BENCHMARK_MAIN();
