#include "report.hpp"

#include <yaml-cpp/yaml.h>

namespace spdnn::cli {

std::optional<LayoutSummary> summarize_layout(const NetworkModel& model, const InferenceConfig& config) {
  LayoutSummary summary;
  auto& p = summary.padding;
  try {
    for (const auto& layer : model.layers) {
      auto ell = prepare_layer(layer, config.block_size, config.buffer_capacity, config.warp_size);
      auto stats = padding_stats(layer, ell.plan, config.warp_size);
      p.nnz += stats.nnz;
      p.warp_padded_slots += stats.warp_padded_slots;
      p.tile_padded_slots += stats.tile_padded_slots;
      p.layer_padded_slots += stats.layer_padded_slots;
      summary.footprint += index_footprint(ell);
    }
  } catch (const Error&) {
    return std::nullopt;
  }
  p.defined = p.nnz > 0;
  if (p.defined) {
    const auto nnz = static_cast<double>(p.nnz);
    p.warp_overhead = static_cast<double>(p.warp_padded_slots) / nnz;
    p.tile_overhead = static_cast<double>(p.tile_padded_slots) / nnz;
    p.layer_overhead = static_cast<double>(p.layer_padded_slots) / nnz;
  }
  return summary;
}

RunReport make_report(const NetworkModel& model, const InferenceConfig& config, Mode mode,
                      const InferenceResult& result, const std::optional<LayoutSummary>& layout) {
  RunReport r;
  r.neurons = model.neurons;
  r.layers = model.depth();
  r.inputs = result.final.total_inputs;
  r.mode = to_string(mode);
  r.workers = config.workers;
  r.minibatch = config.minibatch;
  r.streaming = config.streaming;
  r.elapsed_seconds = result.elapsed_seconds;
  r.edges_processed = result.edges_processed;
  r.edges_per_second =
      result.elapsed_seconds > 0.0 ? static_cast<double>(result.edges_processed) / result.elapsed_seconds : 0.0;
  for (const auto& layer : result.per_layer) {
    r.per_layer_active_counts.push_back(layer.active_after);
    r.per_layer_weight_reads.push_back(layer.weight_element_reads);
    r.weight_element_reads += layer.weight_element_reads;
    r.feature_element_reads += layer.feature_element_reads;
  }
  r.categories = result.categories.size();
  r.stream = result.stream;
  r.layout = layout;
  return r;
}

namespace {

void emit_padding(YAML::Emitter& out, const PaddingStats& p) {
  out << YAML::BeginMap;
  out << YAML::Key << "nnz" << YAML::Value << p.nnz;
  out << YAML::Key << "defined" << YAML::Value << p.defined;
  out << YAML::Key << "warp_padded_slots" << YAML::Value << p.warp_padded_slots;
  out << YAML::Key << "tile_padded_slots" << YAML::Value << p.tile_padded_slots;
  out << YAML::Key << "layer_padded_slots" << YAML::Value << p.layer_padded_slots;
  out << YAML::Key << "warp_overhead" << YAML::Value << p.warp_overhead;
  out << YAML::Key << "tile_overhead" << YAML::Value << p.tile_overhead;
  out << YAML::Key << "layer_overhead" << YAML::Value << p.layer_overhead;
  out << YAML::EndMap;
}

void emit_footprint(YAML::Emitter& out, const IndexFootprint& f) {
  out << YAML::BeginMap;
  out << YAML::Key << "windex_wide_bytes" << YAML::Value << f.windex_wide;
  out << YAML::Key << "windex_compact_bytes" << YAML::Value << f.windex_compact;
  out << YAML::Key << "map_wide_bytes" << YAML::Value << f.map_wide;
  out << YAML::Key << "map_compact_bytes" << YAML::Value << f.map_compact;
  out << YAML::Key << "displacement_bytes" << YAML::Value << f.displacements;
  out << YAML::Key << "wvalue_bytes" << YAML::Value << f.wvalue;
  out << YAML::Key << "index_reduction" << YAML::Value << f.index_reduction();
  out << YAML::Key << "total_reduction" << YAML::Value << f.total_reduction();
  out << YAML::EndMap;
}

void emit_comm(YAML::Emitter& out, const CommMatrix& m) {
  out << YAML::BeginSeq;
  for (std::size_t i = 0; i < m.workers(); ++i) {
    out << YAML::Flow << YAML::BeginSeq;
    for (std::size_t j = 0; j < m.workers(); ++j) out << m.at(i, j);
    out << YAML::EndSeq;
  }
  out << YAML::EndSeq;
}

void emit_counts(YAML::Emitter& out, const std::vector<std::size_t>& counts) {
  out << YAML::Flow << YAML::BeginSeq;
  for (auto c : counts) out << c;
  out << YAML::EndSeq;
}

void emit_balance(YAML::Emitter& out, const BalanceReport& b) {
  out << YAML::BeginMap;
  out << YAML::Key << "rebalances" << YAML::Value << b.rebalance_count();
  out << YAML::Key << "moved_rows" << YAML::Value << b.moved_rows();
  out << YAML::Key << "layers" << YAML::Value << YAML::BeginSeq;
  for (std::size_t l = 0; l < b.layers.size(); ++l) {
    const auto& layer = b.layers[l];
    out << YAML::BeginMap;
    out << YAML::Key << "layer" << YAML::Value << l;
    out << YAML::Key << "before" << YAML::Value;
    emit_counts(out, layer.before_counts);
    out << YAML::Key << "after" << YAML::Value;
    emit_counts(out, layer.after_counts);
    // .inf is valid YAML for a worker left empty.
    out << YAML::Key << "imbalance_before" << YAML::Value << layer.imbalance_before;
    out << YAML::Key << "imbalance_after" << YAML::Value << layer.imbalance_after;
    out << YAML::Key << "rebalanced" << YAML::Value << layer.rebalanced;
    out << YAML::Key << "moved_rows" << YAML::Value << layer.moved_rows;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::EndMap;
}

void emit_report(YAML::Emitter& out, const RunReport& r) {
  out << YAML::BeginMap;
  out << YAML::Key << "neurons" << YAML::Value << r.neurons;
  out << YAML::Key << "layers" << YAML::Value << r.layers;
  out << YAML::Key << "inputs" << YAML::Value << r.inputs;
  out << YAML::Key << "mode" << YAML::Value << r.mode;
  out << YAML::Key << "workers" << YAML::Value << r.workers;
  out << YAML::Key << "minibatch" << YAML::Value << r.minibatch;
  out << YAML::Key << "streaming" << YAML::Value << r.streaming;
  out << YAML::Key << "elapsed_seconds" << YAML::Value << r.elapsed_seconds;
  out << YAML::Key << "edges_processed" << YAML::Value << r.edges_processed;
  out << YAML::Key << "edges_per_second" << YAML::Value << r.edges_per_second;
  out << YAML::Key << "categories" << YAML::Value << r.categories;
  out << YAML::Key << "per_layer_active_counts" << YAML::Value;
  emit_counts(out, r.per_layer_active_counts);
  out << YAML::Key << "weight_element_reads" << YAML::Value << r.weight_element_reads;
  out << YAML::Key << "per_layer_weight_reads" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (auto reads : r.per_layer_weight_reads) out << reads;
  out << YAML::EndSeq;
  out << YAML::Key << "feature_element_reads" << YAML::Value << r.feature_element_reads;
  out << YAML::Key << "stream" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "prefetches" << YAML::Value << r.stream.prefetches;
  out << YAML::Key << "swaps" << YAML::Value << r.stream.swaps;
  out << YAML::Key << "peak_resident" << YAML::Value << r.stream.peak_resident;
  out << YAML::EndMap;
  if (r.layout) {
    out << YAML::Key << "padding_stats" << YAML::Value;
    emit_padding(out, r.layout->padding);
    out << YAML::Key << "index_footprint" << YAML::Value;
    emit_footprint(out, r.layout->footprint);
  }
  if (r.comm_matrix) {
    out << YAML::Key << "comm_matrix" << YAML::Value;
    emit_comm(out, *r.comm_matrix);
  }
  if (r.balance_report) {
    out << YAML::Key << "balance_report" << YAML::Value;
    emit_balance(out, *r.balance_report);
  }
  if (r.verified) out << YAML::Key << "verified" << YAML::Value << *r.verified;
  out << YAML::EndMap;
}

}  // namespace

std::string to_yaml(const RunReport& report) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  emit_report(out, report);
  return std::string(out.c_str()) + "\n";
}

ReadRatio read_ratio(const RunReport& baseline, const RunReport& optimized) {
  ReadRatio r;
  r.baseline_reads = baseline.weight_element_reads;
  r.optimized_reads = optimized.weight_element_reads;
  const double overhead = optimized.layout ? optimized.layout->padding.warp_overhead : 0.0;
  const std::size_t mb = optimized.minibatch;
  r.bound = static_cast<double>(mb) / (1.0 + overhead);

  // Baseline reads of layer l are active_l * nnz_l, so nnz_l is recoverable.
  double used = 0.0;
  double issued = 0.0;
  std::size_t active = baseline.inputs;
  for (std::size_t l = 0; l < baseline.per_layer_weight_reads.size(); ++l) {
    if (active > 0) {
      const double nnz = static_cast<double>(baseline.per_layer_weight_reads[l]) / static_cast<double>(active);
      used += static_cast<double>(active) * nnz;
      issued += static_cast<double>((active + mb - 1) / mb * mb) * nnz;
    }
    active = baseline.per_layer_active_counts[l];
  }
  if (used > 0.0) r.partial_group_factor = issued / used;

  if (r.optimized_reads > 0) {
    r.ratio = static_cast<double>(r.baseline_reads) / static_cast<double>(r.optimized_reads);
    r.within_bound = r.ratio * r.partial_group_factor * kReadBoundSlack >= r.bound;
  } else {
    r.within_bound = r.baseline_reads == 0;
  }
  return r;
}

std::string to_yaml(const BenchSummary& bench) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "reports" << YAML::Value << YAML::BeginSeq;
  for (const auto& r : bench.reports) emit_report(out, r);
  out << YAML::EndSeq;
  out << YAML::Key << "summary" << YAML::Value << YAML::BeginSeq;
  for (const auto& r : bench.reports) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "mode" << YAML::Value << r.mode;
    out << YAML::Key << "workers" << YAML::Value << r.workers;
    out << YAML::Key << "elapsed_seconds" << YAML::Value << r.elapsed_seconds;
    out << YAML::Key << "edges_per_second" << YAML::Value << r.edges_per_second;
    out << YAML::Key << "categories" << YAML::Value << r.categories;
    if (r.verified) out << YAML::Key << "verified" << YAML::Value << *r.verified;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  if (bench.reads) {
    const auto& x = *bench.reads;
    out << YAML::Key << "weight_read_ratio" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "baseline_reads" << YAML::Value << x.baseline_reads;
    out << YAML::Key << "optimized_reads" << YAML::Value << x.optimized_reads;
    out << YAML::Key << "ratio" << YAML::Value << x.ratio;
    out << YAML::Key << "bound" << YAML::Value << x.bound;
    out << YAML::Key << "partial_group_factor" << YAML::Value << x.partial_group_factor;
    out << YAML::Key << "slack" << YAML::Value << kReadBoundSlack;
    out << YAML::Key << "within_bound" << YAML::Value << x.within_bound;
    out << YAML::EndMap;
  }
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace spdnn::cli
