// Compares the OpenMP matmul/hadamard against the serial reference kernels
// and times one forward step at the classification-model size. Build target
// exists only when google-benchmark is installed.

#include <benchmark/benchmark.h>

#include <cstddef>

#include "dblstm/cell.hpp"
#include "dblstm/matrix.hpp"
#include "dblstm/reference.hpp"

namespace {

dblstm::Matrix random_square(std::size_t n, std::uint64_t seed) {
  dblstm::Rng rng(seed);
  dblstm::Matrix m(n, n);
  for (std::size_t i = 0; i < m.size(); ++i) m.at_flat(i) = rng.uniform(-1.0, 1.0);
  return m;
}

void BM_matmul_ref(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const dblstm::Matrix a = random_square(n, 1);
  const dblstm::Matrix b = random_square(n, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(dblstm::ref::matmul(a, b));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * n * n * n);
}

void BM_matmul_omp(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const dblstm::Matrix a = random_square(n, 1);
  const dblstm::Matrix b = random_square(n, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(dblstm::matmul(a, b));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * n * n * n);
}

void BM_hadamard_ref(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const dblstm::Matrix a = random_square(n, 3);
  const dblstm::Matrix b = random_square(n, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(dblstm::ref::hadamard(a, b));
  }
}

void BM_hadamard_omp(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const dblstm::Matrix a = random_square(n, 3);
  const dblstm::Matrix b = random_square(n, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(dblstm::hadamard(a, b));
  }
}

// One recurrent step at the classification size (n = 32, scalar input).
void BM_step_forward(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const dblstm::ModelDims dims{1, n, 1, 0};
  const dblstm::DbLstmWeights w = dblstm::init_weights(dims, 9, 0.3);
  dblstm::Rng rng(10);
  dblstm::Matrix x(1, 1);
  x.at_flat(0) = rng.uniform(-1.0, 1.0);
  dblstm::StepState prev = dblstm::StepState::zeros(n);
  prev.h.at_flat(0) = 0.25;
  prev.c.at_flat(0) = -0.5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(dblstm::step_forward(w, x, prev));
  }
}

}  // namespace

BENCHMARK(BM_matmul_ref)->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_matmul_omp)->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_hadamard_ref)->Arg(256);
BENCHMARK(BM_hadamard_omp)->Arg(256);
BENCHMARK(BM_step_forward)->Arg(32)->Arg(128);

BENCHMARK_MAIN();
