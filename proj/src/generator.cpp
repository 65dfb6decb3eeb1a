#include <algorithm>
#include <numeric>
#include <random>

#include "spdnn/ingest.hpp"

namespace spdnn {
namespace {

// Uniform in [0, 1) from the top 53 bits; unlike std::uniform_real_distribution
// this is identical across standard library implementations.
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t pick_below(std::mt19937_64& rng, std::size_t bound) {
  return static_cast<std::size_t>(rng() % bound);
}

std::size_t pick_coprime_stride(std::mt19937_64& rng, std::size_t n) {
  if (n == 1) return 1;
  for (;;) {
    auto stride = 1 + pick_below(rng, n - 1);
    if (std::gcd(stride, n) == 1) return stride;
  }
}

}  // namespace

void GeneratorSpec::validate() const {
  if (neurons == 0) throw Error("neurons must be positive");
  if (connections_per_neuron > neurons) throw Error("connections per neuron exceeds neuron count");
  if (!(input_density > 0.0 && input_density <= 1.0)) throw Error("input density must be in (0, 1]");
}

NetworkModel generate_synthetic_network(const GeneratorSpec& spec) {
  spec.validate();
  const std::size_t n = spec.neurons;
  const std::size_t k = spec.connections_per_neuron;
  std::mt19937_64 rng(spec.seed);

  NetworkModel model;
  model.neurons = n;
  model.bias.assign(n, spec.bias_value);
  model.layers.resize(spec.layers);

  std::vector<Index> row(k);
  for (auto& layer : model.layers) {
    const std::size_t step = pick_coprime_stride(rng, n);
    const std::size_t offset = pick_below(rng, n);
    const std::size_t stride = pick_coprime_stride(rng, n);

    layer.row_ptr.resize(n + 1);
    layer.col_idx.resize(n * k);
    layer.values.assign(n * k, spec.weight_value);
    for (std::size_t r = 0; r < n; ++r) {
      layer.row_ptr[r] = r * k;
      const std::size_t base = (r * step + offset) % n;
      for (std::size_t i = 0; i < k; ++i) row[i] = static_cast<Index>((base + i * stride) % n);
      std::sort(row.begin(), row.end());
      std::copy(row.begin(), row.end(), layer.col_idx.begin() + static_cast<std::ptrdiff_t>(r * k));
    }
    layer.row_ptr[n] = n * k;
  }
  return model;
}

FeatureBatch generate_synthetic_inputs(std::size_t neurons, std::size_t count, double density,
                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto batch = FeatureBatch::zeros(neurons, count);
  for (auto& v : batch.data) v = unit_uniform(rng) < density ? 1.0f : 0.0f;
  return batch;
}

}  // namespace spdnn
