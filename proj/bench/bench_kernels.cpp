// Serial reference kernels against the OpenMP versions on pipeline-sized
// inputs: a 500x500 patch for the filters, a conv layer of the detector
// backbone, and a detector-head sized matrix product.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "redlesion/cand_small.hpp"
#include "redlesion/imgproc.hpp"
#include "redlesion/kernels.hpp"

using namespace redlesion;
namespace k = redlesion::kernels;

namespace {

constexpr int kSide = 500;

std::vector<float> noise_f(std::size_t n) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0, 1);
  std::vector<float> v(n);
  for (float& x : v) x = u(rng);
  return v;
}

std::vector<double> noise_d(std::size_t n) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0, 1);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

template <bool Omp>
void BM_Gaussian(benchmark::State& st) {
  const auto in = noise_f(kSide * kSide);
  std::vector<float> tmp(in.size()), out(in.size());
  const auto w = gaussian_kernel(static_cast<double>(st.range(0)));
  for (auto _ : st) {
    if constexpr (Omp) {
      k::omp::gaussian_rows(in, tmp, kSide, kSide, w);
      k::omp::gaussian_cols(tmp, out, kSide, kSide, w);
    } else {
      k::serial::gaussian_rows(in, tmp, kSide, kSide, w);
      k::serial::gaussian_cols(tmp, out, kSide, kSide, w);
    }
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(st.iterations() * kSide * kSide);
}

// Max then min filter with one line element: a single closing of the bank.
template <bool Omp>
void BM_LineClosing(benchmark::State& st) {
  const auto in = noise_f(kSide * kSide);
  std::vector<float> tmp(in.size()), out(in.size());
  const auto se = line_structuring_element(static_cast<int>(st.range(0)), 30.0);
  for (auto _ : st) {
    if constexpr (Omp) {
      k::omp::max_filter(in, tmp, kSide, kSide, se);
      k::omp::min_filter(tmp, out, kSide, kSide, se);
    } else {
      k::serial::max_filter(in, tmp, kSide, kSide, se);
      k::serial::min_filter(tmp, out, kSide, kSide, se);
    }
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(st.iterations() * kSide * kSide);
}

k::ConvGeometry conv_geometry(const benchmark::State& st) {
  k::ConvGeometry g;
  g.in_channels = static_cast<int>(st.range(0));
  g.out_channels = static_cast<int>(st.range(1));
  g.height = g.width = static_cast<int>(st.range(2));
  g.kernel = 3;
  return g;
}

template <bool Omp>
void BM_ConvForward(benchmark::State& st) {
  const k::ConvGeometry g = conv_geometry(st);
  const auto in = noise_d(static_cast<std::size_t>(g.in_channels) * g.height * g.width);
  const auto w = noise_d(static_cast<std::size_t>(g.weight_count()));
  const auto b = noise_d(static_cast<std::size_t>(g.out_channels));
  std::vector<double> out(static_cast<std::size_t>(g.out_channels) * g.height * g.width);
  for (auto _ : st) {
    if constexpr (Omp)
      k::omp::conv2d_forward(g, in, w, b, out);
    else
      k::serial::conv2d_forward(g, in, w, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(st.iterations() * g.weight_count() * g.height * g.width);
}

template <bool Omp>
void BM_ConvBackward(benchmark::State& st) {
  const k::ConvGeometry g = conv_geometry(st);
  const std::size_t in_n = static_cast<std::size_t>(g.in_channels) * g.height * g.width;
  const std::size_t out_n = static_cast<std::size_t>(g.out_channels) * g.height * g.width;
  const auto in = noise_d(in_n), w = noise_d(static_cast<std::size_t>(g.weight_count())), go = noise_d(out_n);
  std::vector<double> gi(in_n), gw(w.size()), gb(static_cast<std::size_t>(g.out_channels));
  for (auto _ : st) {
    if constexpr (Omp)
      k::omp::conv2d_backward(g, in, w, go, gi, gw, gb);
    else
      k::serial::conv2d_backward(g, in, w, go, gi, gw, gb);
    benchmark::DoNotOptimize(gw.data());
  }
  st.SetItemsProcessed(st.iterations() * g.weight_count() * g.height * g.width * 2);
}

template <bool Omp>
void BM_Gemm(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  const auto a = noise_d(static_cast<std::size_t>(n) * n), b = noise_d(static_cast<std::size_t>(n) * n);
  std::vector<double> c(static_cast<std::size_t>(n) * n);
  for (auto _ : st) {
    if constexpr (Omp)
      k::omp::gemm_nn(n, n, n, a.data(), n, b.data(), n, c.data(), n);
    else
      k::serial::gemm(n, n, n, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<long long>(n) * n * n);
}

}  // namespace

BENCHMARK(BM_Gaussian<false>)->Name("gaussian/serial")->Arg(1)->Arg(23);
BENCHMARK(BM_Gaussian<true>)->Name("gaussian/omp")->Arg(1)->Arg(23);
BENCHMARK(BM_LineClosing<false>)->Name("line_closing/serial")->Arg(9)->Arg(60);
BENCHMARK(BM_LineClosing<true>)->Name("line_closing/omp")->Arg(9)->Arg(60);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/serial")->Args({8, 16, 160})->Args({32, 32, 40});
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/omp")->Args({8, 16, 160})->Args({32, 32, 40});
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/serial")->Args({8, 16, 160})->Args({32, 32, 40});
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/omp")->Args({8, 16, 160})->Args({32, 32, 40});
BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/omp")->Arg(128)->Arg(256);

BENCHMARK_MAIN();
