#include "spdnn/engine.hpp"

#include <algorithm>
#include <chrono>

#include "spdnn/streamer.hpp"

namespace spdnn {

std::size_t PreparedLayer::resident_bytes() const {
  const auto& plan = ell.plan;
  return csr.row_ptr.size() * sizeof(std::uint64_t) + csr.col_idx.size() * sizeof(Index) +
         csr.values.size() * sizeof(Real) + ell.wdispl.size() * sizeof(std::uint32_t) +
         ell.windex.size() * sizeof(CompactIndex) + ell.wvalue.size() * sizeof(Real) +
         (plan.buffdispl.size() + plan.mapdispl.size()) * sizeof(std::uint32_t) +
         plan.map.size() * sizeof(CompactIndex);
}

PreparedLayer prepare(const NetworkModel& model, std::size_t layer, Mode mode, const InferenceConfig& config) {
  PreparedLayer prepared;
  prepared.index = layer;
  prepared.mode = mode;
  if (mode == Mode::baseline) {
    prepared.csr = model.layers.at(layer);
  } else {
    prepared.ell =
        prepare_layer(model.layers.at(layer), config.block_size, config.buffer_capacity, config.warp_size);
  }
  return prepared;
}

LayerOutcome evaluate_layer(const FeatureBatch& features, const PreparedLayer& layer, std::span<const Real> bias,
                            const InferenceConfig& config) {
  auto dense = layer.mode == Mode::baseline
                   ? baseline_layer(features, layer.csr, bias, config.threads)
                   : optimized_layer(features, layer.ell, bias, config.minibatch, config.threads);
  LayerOutcome outcome;
  outcome.active_before = features.active_count();
  outcome.weight_element_reads = dense.weight_reads;
  outcome.feature_element_reads = dense.feature_reads;
  outcome.features = compact_active(std::move(dense), features.categories, features.total_inputs);
  outcome.active_after = outcome.features.active_count();
  return outcome;
}

namespace {

template <typename NextLayer>
void run_layers(const NetworkModel& model, FeatureBatch& current, InferenceResult& result, NextLayer&& next_layer) {
  for (std::size_t l = 0; l < model.depth(); ++l) {
    LayerSummary summary;
    summary.active_before = current.active_count();
    if (current.active_count() == 0) {
      result.per_layer.push_back(summary);
      continue;
    }
    auto outcome = next_layer(l, current);
    summary.active_after = outcome.active_after;
    summary.weight_element_reads = outcome.weight_element_reads;
    summary.feature_element_reads = outcome.feature_element_reads;
    result.per_layer.push_back(summary);
    current = std::move(outcome.features);
  }
}

}  // namespace

InferenceResult infer(const NetworkModel& model, const FeatureBatch& inputs, const InferenceConfig& config,
                      Mode mode) {
  config.validate();
  if (inputs.neurons != model.neurons) throw Error("dimension mismatch: inputs and model neuron counts differ");

  InferenceResult result;
  result.edges_processed = static_cast<std::uint64_t>(inputs.total_inputs) * count_edges(model);
  FeatureBatch current = inputs;
  using Clock = std::chrono::steady_clock;

  if (config.streaming) {
    const auto start = Clock::now();
    {
      WeightStreamer streamer(model, config, mode);
      WeightStreamer::Lease lease;
      run_layers(model, current, result, [&](std::size_t, const FeatureBatch& in) {
        lease = streamer.next();
        return evaluate_layer(in, *lease, model.bias, config);
      });
      lease.reset();
      result.stream = streamer.stats();
    }
    result.elapsed_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  } else {
    std::vector<PreparedLayer> prepared(model.depth());
    for (std::size_t l = 0; l < model.depth(); ++l) prepared[l] = prepare(model, l, mode, config);
    result.stream.prefetches = model.depth();
    result.stream.peak_resident = model.depth();

    const auto start = Clock::now();
    run_layers(model, current, result, [&](std::size_t l, const FeatureBatch& in) {
      return evaluate_layer(in, prepared[l], model.bias, config);
    });
    result.elapsed_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  }

  result.categories = current.categories;
  std::sort(result.categories.begin(), result.categories.end());
  result.final = std::move(current);
  return result;
}

}  // namespace spdnn
