#include <benchmark/benchmark.h>

#include <vector>

#include "depvec/kernels.hpp"
#include "depvec/rng.hpp"

namespace {

std::vector<double> randv(std::int64_t n, std::uint64_t seed) {
  depvec::Rng rng = depvec::Rng::seeded(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void BM_matmul_omp(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  auto a = randv(n * n, 1), b = randv(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    depvec::kernels::matmul(a.data(), b.data(), c.data(), n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
}

void BM_matmul_serial(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  auto a = randv(n * n, 1), b = randv(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    depvec::kernels::serial::matmul(a.data(), b.data(), c.data(), n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
}

void BM_unary_omp(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  auto x = randv(n, 3);
  std::vector<double> y(n);
  for (auto _ : state) {
    depvec::kernels::unary(depvec::kernels::Unary::Tanh, x.data(), y.data(), n);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_unary_serial(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  auto x = randv(n, 3);
  std::vector<double> y(n);
  for (auto _ : state) {
    depvec::kernels::serial::unary(depvec::kernels::Unary::Tanh, x.data(),
                                   y.data(), n);
    benchmark::DoNotOptimize(y.data());
  }
}

BENCHMARK(BM_matmul_serial)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_matmul_omp)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_unary_serial)->Arg(1 << 12)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_unary_omp)->Arg(1 << 12)->Arg(1 << 16)->Arg(1 << 20);

}  // namespace

BENCHMARK_MAIN();
