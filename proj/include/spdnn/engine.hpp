#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spdnn/model.hpp"
#include "spdnn/preprocess.hpp"

namespace spdnn {

/// Uncompacted output of one layer: a dense N x M column-major block, one
/// active flag per column, and access counters.
struct DenseOutput {
  std::size_t neurons = 0;
  std::vector<Real> data;
  std::vector<std::uint8_t> active;
  // Weight slots read, counting padding; feature elements read from the input.
  std::uint64_t weight_reads = 0;
  std::uint64_t feature_reads = 0;
};

/// One output element per (row, feature), each gathering its row of the CSR.
/// out[r, j] = relu(sum_n values[n] * in[col_idx[n], j] + bias[r]), summed in
/// CSR order.
DenseOutput baseline_layer(const FeatureBatch& features, const LayerCSR& layer, std::span<const Real> bias,
                           int threads = 0);

/// Staged, minibatched evaluation over sliced-ELL weights.
///
/// Features are taken `minibatch` at a time. For every (group, block) the
/// block's stages are loaded into a staging buffer of buffer_capacity slots per
/// feature lane; each weight slot is then read once and applied to every lane
/// of the group. Per-row summation order matches baseline_layer.
DenseOutput optimized_layer(const FeatureBatch& features, const SlicedEllLayer& ell, std::span<const Real> bias,
                            std::size_t minibatch, int threads = 0);

/// Keeps the active columns in order and filters `categories` in lockstep.
FeatureBatch compact_active(DenseOutput output, std::span<const Index> categories, std::size_t total_inputs);

struct LayerOutcome {
  FeatureBatch features;
  std::size_t active_before = 0;
  std::size_t active_after = 0;
  std::uint64_t weight_element_reads = 0;
  std::uint64_t feature_element_reads = 0;
};

/// Layer weights in the form one mode consumes.
struct PreparedLayer {
  std::size_t index = 0;
  Mode mode = Mode::optimized;
  LayerCSR csr;         // baseline
  SlicedEllLayer ell;   // optimized

  std::size_t resident_bytes() const;
};

PreparedLayer prepare(const NetworkModel& model, std::size_t layer, Mode mode, const InferenceConfig& config);

/// Evaluates one layer and compacts the survivors.
LayerOutcome evaluate_layer(const FeatureBatch& features, const PreparedLayer& layer, std::span<const Real> bias,
                            const InferenceConfig& config);

struct LayerSummary {
  std::size_t active_before = 0;
  std::size_t active_after = 0;
  std::uint64_t weight_element_reads = 0;
  std::uint64_t feature_element_reads = 0;
};

struct StreamStats {
  std::size_t prefetches = 0;
  std::size_t swaps = 0;
  std::size_t peak_resident = 0;
};

struct InferenceResult {
  FeatureBatch final;
  std::vector<Index> categories;
  std::vector<LayerSummary> per_layer;
  double elapsed_seconds = 0.0;
  std::uint64_t edges_processed = 0;
  StreamStats stream;
};

/// Runs every layer with compaction after each.
///
/// With config.streaming the prepared weights come from a WeightStreamer that
/// keeps at most two layers resident; otherwise all layers are prepared
/// before the timed loop. Once no feature is active the remaining layers are
/// skipped and report zero reads.
InferenceResult infer(const NetworkModel& model, const FeatureBatch& inputs, const InferenceConfig& config,
                      Mode mode);

}  // namespace spdnn
