// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include <random>

#include "cantor/kernels.h"
#include "cantor/matrix.h"

namespace {

using cantor::Matrix;

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix m(r, c);
  for (double& v : m.flat()) v = g(rng);
  return m;
}

template <bool Parallel>
void BM_GemmNT(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  Matrix c;
  for (auto _ : state) {
    if constexpr (Parallel)
      cantor::kernels::gemm_nt(a, b, c);
    else
      cantor::kernels::reference::gemm_nt(a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}

template <bool Parallel>
void BM_GemmNN(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, n, 3), b = random_matrix(n, n, 4);
  Matrix c;
  for (auto _ : state) {
    if constexpr (Parallel)
      cantor::kernels::gemm_nn(a, b, c);
    else
      cantor::kernels::reference::gemm_nn(a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}

// The MML inner sum: one prefix log-sum-exp over an L x K operand table.
template <bool Parallel>
void BM_PrefixLogSumExp(benchmark::State& state) {
  const auto L = static_cast<std::size_t>(state.range(0));
  const Matrix op = random_matrix(L, L + 8, 5);
  std::vector<double> child(L), out(L);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  for (double& v : child) v = g(rng);
  for (auto _ : state) {
    if constexpr (Parallel)
      cantor::kernels::prefix_logsumexp(child, op, out);
    else
      cantor::kernels::reference::prefix_logsumexp(child, op, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_LogSoftmaxRows(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix base = random_matrix(n, n, 7);
  for (auto _ : state) {
    Matrix m = base;
    if constexpr (Parallel)
      cantor::kernels::log_softmax_rows(m);
    else
      cantor::kernels::reference::log_softmax_rows(m);
    benchmark::DoNotOptimize(m.data());
  }
}

}  // namespace

BENCHMARK(BM_GemmNT<false>)->Name("gemm_nt/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_GemmNT<true>)->Name("gemm_nt/openmp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_GemmNN<false>)->Name("gemm_nn/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_GemmNN<true>)->Name("gemm_nn/openmp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_PrefixLogSumExp<false>)->Name("prefix_logsumexp/serial")->Arg(60)->Arg(240)->Arg(960);
BENCHMARK(BM_PrefixLogSumExp<true>)->Name("prefix_logsumexp/openmp")->Arg(60)->Arg(240)->Arg(960);
BENCHMARK(BM_LogSoftmaxRows<false>)->Name("log_softmax_rows/serial")->Arg(64)->Arg(512);
BENCHMARK(BM_LogSoftmaxRows<true>)->Name("log_softmax_rows/openmp")->Arg(64)->Arg(512);

BENCHMARK_MAIN();
