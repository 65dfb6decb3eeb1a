#include "spdnn/model.hpp"

#include <sstream>

namespace spdnn {

FeatureBatch FeatureBatch::zeros(std::size_t neurons, std::size_t count) {
  FeatureBatch batch;
  batch.neurons = neurons;
  batch.total_inputs = count;
  batch.categories.resize(count);
  for (std::size_t j = 0; j < count; ++j) batch.categories[j] = static_cast<Index>(j);
  batch.data.assign(neurons * count, 0.0f);
  return batch;
}

std::string to_string(Mode mode) {
  return mode == Mode::baseline ? "baseline" : "optimized";
}

Mode parse_mode(const std::string& text) {
  if (text == "baseline") return Mode::baseline;
  if (text == "optimized") return Mode::optimized;
  throw Error("unknown mode '" + text + "'");
}

void InferenceConfig::validate() const {
  if (minibatch == 0) throw Error("minibatch must be positive");
  if (block_size == 0) throw Error("block_size must be positive");
  if (warp_size == 0) throw Error("warp_size must be positive");
  if (block_size % warp_size != 0) throw Error("block_size must be a multiple of warp_size");
  if (buffer_capacity == 0) throw Error("buffer_capacity must be at least 1");
  if (workers == 0) throw Error("workers must be positive");
  if (!(rebalance_threshold > 1.0)) throw Error("rebalance_threshold must exceed 1.0");
}

std::uint64_t count_edges(const NetworkModel& model) {
  std::uint64_t edges = 0;
  for (const auto& layer : model.layers) edges += layer.nnz();
  return edges;
}

void collect_layer_violations(const LayerCSR& layer, std::size_t neurons, std::size_t l,
                              std::vector<Violation>& out) {
  auto report = [&](auto&&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    out.push_back({os.str()});
  };
  if (layer.row_ptr.size() != neurons + 1) {
    report("dimension mismatch at layer ", l, ": row_ptr has ", layer.row_ptr.size(),
           " entries, expected ", neurons + 1);
    return;
  }
  if (layer.row_ptr.front() != 0) report("row_ptr[0] is not zero at layer ", l);
  for (std::size_t r = 0; r < neurons; ++r) {
    if (layer.row_ptr[r + 1] < layer.row_ptr[r]) {
      report("row_ptr not monotone at layer ", l, ", row ", r);
      return;
    }
  }
  if (layer.row_ptr.back() != layer.col_idx.size() || layer.col_idx.size() != layer.values.size()) {
    report("nnz mismatch at layer ", l, ": row_ptr ends at ", layer.row_ptr.back(), ", ",
           layer.col_idx.size(), " indices, ", layer.values.size(), " values");
    return;
  }
  for (std::size_t r = 0; r < neurons; ++r) {
    for (auto n = layer.row_ptr[r]; n < layer.row_ptr[r + 1]; ++n) {
      if (layer.col_idx[n] >= neurons) {
        report("index out of range at layer ", l, ", row ", r);
      } else if (n > layer.row_ptr[r] && layer.col_idx[n] <= layer.col_idx[n - 1]) {
        report("unsorted or duplicate columns at layer ", l, ", row ", r);
      }
      if (!std::isfinite(layer.values[n])) report("non-finite value at layer ", l, ", row ", r);
    }
  }
}

std::vector<Violation> validate_model(const NetworkModel& model) {
  std::vector<Violation> out;
  if (model.neurons == 0) out.push_back({"model has zero neurons"});
  if (model.bias.size() != model.neurons) {
    out.push_back({"bias has " + std::to_string(model.bias.size()) + " entries, expected " +
                   std::to_string(model.neurons)});
  }
  for (std::size_t i = 0; i < model.bias.size(); ++i) {
    if (!std::isfinite(model.bias[i])) out.push_back({"non-finite bias at neuron " + std::to_string(i)});
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    collect_layer_violations(model.layers[l], model.neurons, l, out);
  }
  return out;
}

void require_valid(const NetworkModel& model) {
  auto violations = validate_model(model);
  if (violations.empty()) return;
  std::string message = "invalid model:";
  for (const auto& v : violations) message += "\n  " + v.message;
  throw Error(message);
}

}  // namespace spdnn
