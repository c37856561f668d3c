// Serial reference vs OpenMP chunked kernels for the composite loss and subgradient.

#include <map>

#include <benchmark/benchmark.h>

#include "qir/loss.hpp"
#include "qir/sim.hpp"
#include "qir/tuning.hpp"

namespace {

struct Fixture {
  qir::Dataset data;
  qir::LevelGrid grid;
  qir::QirModel model;

  explicit Fixture(Eigen::Index n)
      : data(qir::generate_sample(qir::SimScenario::lowdim(n, 42))),
        grid(qir::quantile_grid(0.5, 0.99, 10)),
        model(qir::SimScenario::lowdim(n, 42).true_model()) {}
};

const Fixture& fixture(Eigen::Index n) {
  static std::map<Eigen::Index, Fixture> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, Fixture(n)).first;
  return it->second;
}

void BM_LossSerial(benchmark::State& state) {
  const auto& f = fixture(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(qir::serial::composite_loss(f.model, f.data, f.grid));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_LossParallel(benchmark::State& state) {
  const auto& f = fixture(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(qir::composite_loss(f.model, f.data, f.grid));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_GradSerial(benchmark::State& state) {
  const auto& f = fixture(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(qir::serial::composite_subgradient(f.model, f.data, f.grid));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_LossAndGradParallel(benchmark::State& state) {
  const auto& f = fixture(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(qir::composite_loss_and_subgradient(f.model, f.data, f.grid));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_LossSerial)->Arg(500)->Arg(2000)->Arg(20000);
BENCHMARK(BM_LossParallel)->Arg(500)->Arg(2000)->Arg(20000);
BENCHMARK(BM_GradSerial)->Arg(500)->Arg(2000)->Arg(20000);
BENCHMARK(BM_LossAndGradParallel)->Arg(500)->Arg(2000)->Arg(20000);

BENCHMARK_MAIN();
