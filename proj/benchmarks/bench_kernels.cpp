#include <benchmark/benchmark.h>

#include "sda/fft.hpp"
#include "sda/rng.hpp"
#include "sda/tensor.hpp"

using namespace sda;

namespace {

Mat<double> random_mat(int rows, int cols, Rng& rng) {
  Mat<double> m(rows, cols);
  for (auto& v : m.data) v = rng.normal();
  return m;
}

void BM_Attention(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int d = 32;
  Rng rng(1);
  const Mat<double> q = random_mat(n, d, rng), k = random_mat(n, d, rng), v = random_mat(n, d, rng);
  Mat<double> out(n, d);
  for (auto _ : state) {
    attention_forward(q, k, v, 2, out, static_cast<Mat<double>*>(nullptr), FlopTag::layer_attention);
    benchmark::DoNotOptimize(out.data.data());
  }
  state.SetComplexityN(n);
}
BENCHMARK(BM_Attention)->RangeMultiplier(2)->Range(64, 1024)->Complexity(benchmark::oNSquared);

void BM_Gemm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(2);
  const Mat<double> a = random_mat(n, n, rng), b = random_mat(n, n, rng);
  Mat<double> c(n, n);
  for (auto _ : state) {
    gemm_nn(n, n, n, a.data.data(), n, b.data.data(), n, c.data.data(), n, false);
    benchmark::DoNotOptimize(c.data.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}
BENCHMARK(BM_Gemm)->RangeMultiplier(2)->Range(32, 256);

void BM_LayerNorm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int d = 64;
  Rng rng(3);
  const Mat<double> x = random_mat(n, d, rng);
  const std::vector<double> gain(d, 1.0), bias(d, 0.0);
  Mat<double> y;
  LayerNormCache<double> cache;
  for (auto _ : state) {
    layernorm_forward(x, gain.data(), bias.data(), y, cache);
    benchmark::DoNotOptimize(y.data.data());
  }
}
BENCHMARK(BM_LayerNorm)->Range(64, 4096);

void BM_Fft2(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(4);
  std::vector<std::complex<double>> data(static_cast<std::size_t>(n) * n);
  for (auto& v : data) v = {rng.normal(), 0.0};
  for (auto _ : state) {
    fft2(data, n, n, false);
    fft2(data, n, n, true);
    benchmark::DoNotOptimize(data.data());
  }
}
BENCHMARK(BM_Fft2)->RangeMultiplier(2)->Range(16, 256);

}  // namespace
