#include <benchmark/benchmark.h>

#include <random>

#include "ntkdfl/ntk.hpp"
#include "ntkdfl/protocol.hpp"
#include "ntkdfl/topology.hpp"

namespace {

using namespace ntkdfl;

// Desk-scale shapes: 14x14 inputs, hidden 100, ten classes.
const ModelDims kDims{196, 100, 10};

Matrix uniform(std::mt19937_64& gen, long rows, long cols) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) m(i, j) = u(gen);
  return m;
}

MlpJacobian stack_of(long rows) {
  std::mt19937_64 gen(1);
  return MlpJacobian(kDims, init_weights(1, kDims, InitScheme::Shared, 0), uniform(gen, rows, 196));
}

void BM_Jacobian(benchmark::State& state) {
  std::mt19937_64 gen(2);
  const WeightVector w = init_weights(1, kDims, InitScheme::Shared, 0);
  const Matrix x = uniform(gen, state.range(0), 196);
  for (auto _ : state) benchmark::DoNotOptimize(MlpJacobian(kDims, w, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Gram(benchmark::State& state) {
  const MlpJacobian j = stack_of(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(gram(j));
}

void BM_Decompose(benchmark::State& state) {
  const Kernel k = gram(stack_of(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(KernelSpectrum::decompose(k));
}

void BM_EvolveGrid(benchmark::State& state) {
  const long n = state.range(0);
  const KernelSpectrum sp = KernelSpectrum::decompose(gram(stack_of(n)));
  std::mt19937_64 gen(3);
  const Matrix y = uniform(gen, n, 10), f0 = uniform(gen, n, 10);
  const std::vector<long> grid{100, 200, 300, 400, 500, 600, 700, 800};
  for (auto _ : state)
    benchmark::DoNotOptimize(evolve_residuals(sp, y, f0, 0.01, grid, static_cast<std::size_t>(n)));
}

void BM_FullEvolution(benchmark::State& state) {
  const long n = state.range(0);
  const MlpJacobian j = stack_of(n);
  std::mt19937_64 gen(4);
  const Matrix y = uniform(gen, n, 10);
  const WeightVector w = init_weights(1, kDims, InitScheme::Shared, 0);
  for (auto _ : state)
    benchmark::DoNotOptimize(evolve(j, y, j.outputs(), w, 0.01, {100, 200, 400, 800}));
}

void BM_NeighborhoodAverage(benchmark::State& state) {
  const std::size_t m = static_cast<std::size_t>(state.range(0));
  std::vector<WeightVector> w(m, init_weights(1, kDims, InitScheme::Shared, 0));
  const Topology topo = random_regular(m, 5, 9);
  for (auto _ : state) benchmark::DoNotOptimize(neighborhood_average(w, topo));
}

}  // namespace

BENCHMARK(BM_Jacobian)->Arg(200)->Arg(1200)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Gram)->Arg(200)->Arg(600)->Arg(1200)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Decompose)->Arg(200)->Arg(600)->Arg(1200)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EvolveGrid)->Arg(600)->Arg(1200)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FullEvolution)->Arg(1200)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NeighborhoodAverage)->Arg(30)->Arg(300)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
