#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "spdnn/model.hpp"

namespace spdnn {

// TSV files: 1-based "<row>\t<col>\t<value>" triplets.

/// Reads one weight layer. Lines may come in any order; duplicates are rejected.
LayerCSR load_layer_tsv(std::istream& in, std::size_t neurons);

/// Reads "<image>\t<neuron>\t<value>" nonzeros into `max_inputs` dense columns.
/// `max_inputs` == 0 sizes the batch by the largest image index present.
FeatureBatch load_features_tsv(std::istream& in, std::size_t neurons, std::size_t max_inputs);

/// One 1-based category per line; returns them 0-based and sorted.
std::vector<Index> load_truth_categories(std::istream& in);

void write_layer_tsv(std::ostream& out, const LayerCSR& layer);
void write_features_tsv(std::ostream& out, const FeatureBatch& features);
void write_categories(std::ostream& out, const std::vector<Index>& categories);

struct GeneratorSpec {
  std::size_t neurons = 1024;
  std::size_t layers = 120;
  std::size_t connections_per_neuron = 32;
  Real weight_value = 1.0f / 16.0f;
  Real bias_value = -0.3f;
  std::uint64_t seed = 1;
  std::size_t input_count = 6000;
  double input_density = 0.3;

  void validate() const;
};

/// Fixed fan-in network: every row of every layer has exactly K nonzeros.
///
/// Row r of layer l reads columns (r*step_l + offset_l + i*stride_l) mod N for
/// i in [0, K), with stride_l coprime to N so the K columns are distinct. The
/// per-layer step, offset and stride come from the seed.
NetworkModel generate_synthetic_network(const GeneratorSpec& spec);

/// Binary inputs: each entry is 1 with probability `density`, otherwise 0.
FeatureBatch generate_synthetic_inputs(std::size_t neurons, std::size_t count, double density,
                                       std::uint64_t seed);

// Little-endian binary caches. See docs/formats.md for the layouts.
void write_binary(std::ostream& out, const NetworkModel& model);
void write_binary(std::ostream& out, const FeatureBatch& features);
NetworkModel read_model_binary(std::istream& in);
FeatureBatch read_features_binary(std::istream& in);

void save_model(const std::filesystem::path& path, const NetworkModel& model);
NetworkModel load_model(const std::filesystem::path& path);
void save_features(const std::filesystem::path& path, const FeatureBatch& features);
/// Binary by default; a .tsv path needs `neurons`, and `inputs` == 0 infers the
/// input count from the largest image index.
FeatureBatch load_features(const std::filesystem::path& path, std::size_t neurons = 0,
                           std::size_t inputs = 0);

}  // namespace spdnn
