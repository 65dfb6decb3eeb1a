// Serial dense reference vs. the OpenMP baseline and optimized kernels on one
// synthetic layer.

#include <benchmark/benchmark.h>

#include <map>

#include "spdnn/engine.hpp"
#include "spdnn/ingest.hpp"
#include "spdnn/oracle.hpp"

namespace {

struct Fixture {
  spdnn::NetworkModel model;
  spdnn::FeatureBatch inputs;
  spdnn::SlicedEllLayer ell;
};

const Fixture& fixture(std::size_t neurons, std::size_t inputs) {
  static std::map<std::pair<std::size_t, std::size_t>, Fixture> cache;
  auto [it, fresh] = cache.try_emplace({neurons, inputs});
  if (fresh) {
    spdnn::GeneratorSpec spec;
    spec.neurons = neurons;
    spec.layers = 1;
    it->second.model = spdnn::generate_synthetic_network(spec);
    it->second.inputs = spdnn::generate_synthetic_inputs(neurons, inputs, spec.input_density, 7);
    spdnn::InferenceConfig config;
    it->second.ell = spdnn::prepare_layer(it->second.model.layers[0], config.block_size, config.buffer_capacity,
                                          config.warp_size);
  }
  return it->second;
}

void set_edges(benchmark::State& state, const Fixture& f) {
  const double edges = static_cast<double>(f.model.layers[0].nnz() * f.inputs.total_inputs);
  state.counters["edges/s"] = benchmark::Counter(edges, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_Reference(benchmark::State& state) {
  const auto& f = fixture(state.range(0), state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(spdnn::oracle::reference_layer(f.inputs, f.model.layers[0], f.model.bias));
  }
  set_edges(state, f);
}

void BM_Baseline(benchmark::State& state) {
  const auto& f = fixture(state.range(0), state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(spdnn::baseline_layer(f.inputs, f.model.layers[0], f.model.bias));
  }
  set_edges(state, f);
}

void BM_Optimized(benchmark::State& state) {
  const auto& f = fixture(state.range(0), state.range(1));
  const auto minibatch = static_cast<std::size_t>(state.range(2));
  for (auto _ : state) {
    benchmark::DoNotOptimize(spdnn::optimized_layer(f.inputs, f.ell, f.model.bias, minibatch));
  }
  set_edges(state, f);
}

}  // namespace

BENCHMARK(BM_Reference)->Args({1024, 256})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Baseline)->Args({1024, 256})->Args({1024, 6000})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Optimized)
    ->Args({1024, 256, 12})
    ->Args({1024, 6000, 1})
    ->Args({1024, 6000, 4})
    ->Args({1024, 6000, 12})
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
