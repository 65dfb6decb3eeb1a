#pragma once

#include <vector>

#include "spdnn/model.hpp"

namespace spdnn::oracle {

/// Largest neuron count the dense reference accepts.
inline constexpr std::size_t kMaxNeurons = 4096;

/// Serial dense reference: materializes W and evaluates relu(W * Y + b) with a
/// row-major triple loop. Returns the dense N x M column-major output.
std::vector<Real> reference_layer(const FeatureBatch& features, const LayerCSR& layer, const std::vector<Real>& bias);

struct ReferenceResult {
  FeatureBatch final;
  std::vector<Index> categories;
  std::vector<std::size_t> active_counts;  // after each layer
};

/// All layers, dropping all-zero columns after each one.
ReferenceResult reference_infer(const NetworkModel& model, const FeatureBatch& inputs);

}  // namespace spdnn::oracle
