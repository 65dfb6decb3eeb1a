#include "spdnn/oracle.hpp"

#include <algorithm>

namespace spdnn::oracle {

std::vector<Real> reference_layer(const FeatureBatch& features, const LayerCSR& layer, const std::vector<Real>& bias) {
  const std::size_t n = layer.rows();
  if (n > kMaxNeurons) throw Error("dense reference is limited to " + std::to_string(kMaxNeurons) + " neurons");
  if (features.neurons != n || bias.size() != n || features.data.size() != n * features.active_count()) {
    throw Error("dimension mismatch in reference layer");
  }

  std::vector<Real> dense(n * n, 0.0f);
  for (std::size_t r = 0; r < n; ++r) {
    for (auto k = layer.row_ptr[r]; k < layer.row_ptr[r + 1]; ++k) dense[r * n + layer.col_idx[k]] = layer.values[k];
  }

  const std::size_t m = features.active_count();
  std::vector<Real> out(n * m);
  for (std::size_t j = 0; j < m; ++j) {
    const Real* y = features.column(j);
    for (std::size_t r = 0; r < n; ++r) {
      Real acc = 0.0f;
      for (std::size_t c = 0; c < n; ++c) acc += dense[r * n + c] * y[c];
      out[j * n + r] = relu_clamped(acc + bias[r]);
    }
  }
  return out;
}

ReferenceResult reference_infer(const NetworkModel& model, const FeatureBatch& inputs) {
  ReferenceResult result;
  FeatureBatch current = inputs;
  for (const auto& layer : model.layers) {
    if (current.active_count() == 0) {
      result.active_counts.push_back(0);
      continue;
    }
    auto dense = reference_layer(current, layer, model.bias);
    const std::size_t n = model.neurons;
    FeatureBatch next;
    next.neurons = n;
    next.total_inputs = current.total_inputs;
    for (std::size_t j = 0; j < current.active_count(); ++j) {
      auto first = dense.begin() + static_cast<std::ptrdiff_t>(j * n);
      auto last = first + static_cast<std::ptrdiff_t>(n);
      if (std::none_of(first, last, [](Real v) { return v != 0.0f; })) continue;
      next.categories.push_back(current.categories[j]);
      next.data.insert(next.data.end(), first, last);
    }
    result.active_counts.push_back(next.active_count());
    current = std::move(next);
  }
  result.categories = current.categories;
  std::sort(result.categories.begin(), result.categories.end());
  result.final = std::move(current);
  return result;
}

}  // namespace spdnn::oracle
