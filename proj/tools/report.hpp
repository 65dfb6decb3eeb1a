#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spdnn/engine.hpp"
#include "spdnn/parallel.hpp"
#include "spdnn/preprocess.hpp"

namespace spdnn::cli {

/// Padding and index footprint of a whole model under one geometry.
struct LayoutSummary {
  PaddingStats padding;
  IndexFootprint footprint;
};

/// Empty when the model cannot be laid out with compact indices.
std::optional<LayoutSummary> summarize_layout(const NetworkModel& model, const InferenceConfig& config);

struct RunReport {
  std::size_t neurons = 0;
  std::size_t layers = 0;
  std::size_t inputs = 0;
  std::string mode;
  std::size_t workers = 1;
  std::size_t minibatch = 0;
  bool streaming = false;
  double elapsed_seconds = 0.0;
  std::uint64_t edges_processed = 0;
  double edges_per_second = 0.0;
  std::vector<std::size_t> per_layer_active_counts;
  std::size_t categories = 0;
  std::vector<std::uint64_t> per_layer_weight_reads;
  std::uint64_t weight_element_reads = 0;
  std::uint64_t feature_element_reads = 0;
  StreamStats stream;
  std::optional<LayoutSummary> layout;
  std::optional<CommMatrix> comm_matrix;
  std::optional<BalanceReport> balance_report;
  std::optional<bool> verified;
};

RunReport make_report(const NetworkModel& model, const InferenceConfig& config, Mode mode,
                      const InferenceResult& result, const std::optional<LayoutSummary>& layout);

/// Single YAML document.
std::string to_yaml(const RunReport& report);

struct ReadRatio {
  std::uint64_t baseline_reads = 0;
  std::uint64_t optimized_reads = 0;
  double ratio = 0.0;
  double bound = 0.0;  // minibatch / (1 + warp_overhead)
  // Lanes issued over lanes used, weighted by per-layer baseline reads; 1 when
  // every minibatch group is full.
  double partial_group_factor = 1.0;
  bool within_bound = false;
};

/// Relative tolerance on `bound` after the partial-group correction.
inline constexpr double kReadBoundSlack = 1.01;

ReadRatio read_ratio(const RunReport& baseline, const RunReport& optimized);

struct BenchSummary {
  std::vector<RunReport> reports;
  std::optional<ReadRatio> reads;
};

std::string to_yaml(const BenchSummary& bench);

}  // namespace spdnn::cli
