// Parallel kernels against the serial reference on generator-sized problems.

#include <benchmark/benchmark.h>

#include <vector>

#include "m2e/nn/kernels.hpp"
#include "m2e/rng.hpp"

namespace {

std::vector<float> random_buffer(std::size_t n, std::uint64_t seed) {
  m2e::Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

void BM_GemmParallel(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0)), n = static_cast<int>(state.range(1)),
            k = static_cast<int>(state.range(2));
  auto a = random_buffer(static_cast<std::size_t>(m) * k, 1);
  auto b = random_buffer(static_cast<std::size_t>(k) * n, 2);
  std::vector<float> c(static_cast<std::size_t>(m) * n);
  for (auto _ : state) {
    m2e::kernels::gemm(false, false, m, n, k, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * m * n * k);
}

void BM_GemmReference(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0)), n = static_cast<int>(state.range(1)),
            k = static_cast<int>(state.range(2));
  auto a = random_buffer(static_cast<std::size_t>(m) * k, 1);
  auto b = random_buffer(static_cast<std::size_t>(k) * n, 2);
  std::vector<float> c(static_cast<std::size_t>(m) * n);
  for (auto _ : state) {
    m2e::reference::gemm(false, false, m, n, k, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * m * n * k);
}

// Conv as im2col + gemm, the path the layers take.
void BM_ConvParallel(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0)), side = static_cast<int>(state.range(1));
  m2e::kernels::ConvGeometry g{ch, side, side, 3, 1, 1};
  auto x = random_buffer(static_cast<std::size_t>(ch) * side * side, 3);
  auto w = random_buffer(static_cast<std::size_t>(ch) * g.col_rows(), 4);
  std::vector<float> cols(static_cast<std::size_t>(g.col_rows()) * g.col_cols());
  std::vector<float> y(static_cast<std::size_t>(ch) * g.col_cols());
  for (auto _ : state) {
    m2e::kernels::im2col(x.data(), g, cols.data());
    m2e::kernels::gemm(false, false, ch, g.col_cols(), g.col_rows(), w.data(), cols.data(), y.data(), false);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_ConvReference(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0)), side = static_cast<int>(state.range(1));
  m2e::kernels::ConvGeometry g{ch, side, side, 3, 1, 1};
  auto x = random_buffer(static_cast<std::size_t>(ch) * side * side, 3);
  auto w = random_buffer(static_cast<std::size_t>(ch) * g.col_rows(), 4);
  std::vector<float> y(static_cast<std::size_t>(ch) * g.col_cols());
  for (auto _ : state) {
    m2e::reference::conv2d(x.data(), g, w.data(), static_cast<const float*>(nullptr), ch, y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_GemmParallel)->Args({64, 4096, 576})->Args({256, 256, 2304});
BENCHMARK(BM_GemmReference)->Args({64, 4096, 576})->Args({256, 256, 2304});
BENCHMARK(BM_ConvParallel)->Args({16, 64})->Args({64, 32});
BENCHMARK(BM_ConvReference)->Args({16, 64})->Args({64, 32});

BENCHMARK_MAIN();
