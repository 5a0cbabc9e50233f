#include <benchmark/benchmark.h>

#include "polyview/gaussian_world.hpp"
#include "polyview/losses.hpp"
#include "polyview/random.hpp"
#include "polyview/tinynn.hpp"

namespace {

using namespace polyview;

struct Fixture {
  MlpParams params;
  RowMatrix views;
};

Fixture make_fixture(int k, int m) {
  RandomStream init(1, streams::kInit);
  RandomStream data(1, streams::Train(0));
  return {init_params(init), sample_batch(GaussianConfig(1.0, 0.25, k, m, 1), data).views};
}

void set_labels(benchmark::State& state, int k, int m) {
  state.counters["views"] = static_cast<double>(k) * m;
  state.SetItemsProcessed(state.iterations() * k * m);
}

void BM_Forward(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  const int m = static_cast<int>(state.range(1));
  const Fixture f = make_fixture(k, m);
  for (auto _ : state) benchmark::DoNotOptimize(forward(f.params, f.views));
  set_labels(state, k, m);
}

template <Method method>
void BM_Loss(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  const int m = static_cast<int>(state.range(1));
  const Fixture f = make_fixture(k, m);
  const EmbeddingBatch z = forward(f.params, f.views);
  for (auto _ : state) benchmark::DoNotOptimize(compute_loss(method, z, 0.5).total);
  set_labels(state, k, m);
}

template <Method method>
void BM_Backward(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  const int m = static_cast<int>(state.range(1));
  const Fixture f = make_fixture(k, m);
  for (auto _ : state) benchmark::DoNotOptimize(backward(f.params, f.views, method, 0.5).loss.total);
  set_labels(state, k, m);
}

void Shapes(benchmark::internal::Benchmark* b) {
  b->Args({256, 2})->Args({256, 8})->Args({1024, 2})->Args({1024, 10});
  b->Unit(benchmark::kMillisecond);
}

BENCHMARK(BM_Forward)->Apply(Shapes);
BENCHMARK(BM_Loss<Method::MultiCrop>)->Apply(Shapes);
BENCHMARK(BM_Loss<Method::ArithmeticPVC>)->Apply(Shapes);
BENCHMARK(BM_Loss<Method::GeometricPVC>)->Apply(Shapes);
BENCHMARK(BM_Loss<Method::SuffStats>)->Apply(Shapes);
BENCHMARK(BM_Backward<Method::MultiCrop>)->Apply(Shapes);
BENCHMARK(BM_Backward<Method::GeometricPVC>)->Apply(Shapes);
BENCHMARK(BM_Backward<Method::SuffStats>)->Apply(Shapes);

}  // namespace
BENCHMARK_MAIN();
