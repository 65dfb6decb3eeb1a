#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace spdnn {

using Real = float;
using Index = std::uint32_t;
using CompactIndex = std::uint16_t;

/// Upper clamp of the activation.
inline constexpr Real kReluCeiling = 32.0f;

/// Error raised for malformed inputs, geometry mismatches and I/O failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// max(0, min(x, 32)). NaN propagates.
constexpr Real relu_clamped(Real x) noexcept {
  if (x != x) return x;
  return x < 0.0f ? 0.0f : (x > kReluCeiling ? kReluCeiling : x);
}

/// One N x N sparse weight matrix in compressed sparse row form.
///
/// Canonical form: row_ptr nondecreasing with row_ptr[0] == 0 and
/// row_ptr[N] == nnz, and column indices strictly increasing per row.
struct LayerCSR {
  std::vector<std::uint64_t> row_ptr{0};
  std::vector<Index> col_idx;
  std::vector<Real> values;

  std::size_t rows() const noexcept { return row_ptr.empty() ? 0 : row_ptr.size() - 1; }
  std::size_t nnz() const noexcept { return col_idx.size(); }
  std::size_t row_nnz(std::size_t r) const { return row_ptr[r + 1] - row_ptr[r]; }

  friend bool operator==(const LayerCSR&, const LayerCSR&) = default;
};

/// The layered network: every layer is neurons x neurons, one bias per neuron.
struct NetworkModel {
  std::size_t neurons = 0;
  std::vector<LayerCSR> layers;
  std::vector<Real> bias;

  std::size_t depth() const noexcept { return layers.size(); }

  friend bool operator==(const NetworkModel&, const NetworkModel&) = default;
};

/// Dense column-major activations for the features still alive.
///
/// Column j holds the activations of global input `categories[j]`.
struct FeatureBatch {
  std::size_t neurons = 0;
  std::size_t total_inputs = 0;
  std::vector<Index> categories;
  std::vector<Real> data;

  std::size_t active_count() const noexcept { return categories.size(); }
  Real* column(std::size_t j) noexcept { return data.data() + j * neurons; }
  const Real* column(std::size_t j) const noexcept { return data.data() + j * neurons; }
  Real at(std::size_t row, std::size_t col) const { return data[col * neurons + row]; }

  /// All-zero batch whose categories are [0, count).
  static FeatureBatch zeros(std::size_t neurons, std::size_t count);

  friend bool operator==(const FeatureBatch&, const FeatureBatch&) = default;
};

enum class Mode { baseline, optimized };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);

struct InferenceConfig {
  std::size_t minibatch = 12;
  std::size_t block_size = 256;
  std::size_t warp_size = 32;
  std::size_t buffer_capacity = 1024;
  std::size_t workers = 1;
  double rebalance_threshold = 1.25;
  bool streaming = false;
  // 0 leaves the OpenMP default in place.
  int threads = 0;

  /// Throws Error describing the first broken constraint.
  void validate() const;
};

/// Sum of nonzeros over all layers; edges touched by one input.
std::uint64_t count_edges(const NetworkModel& model);

struct Violation {
  std::string message;
};

/// Every broken invariant, with its location. Empty means the model is valid.
std::vector<Violation> validate_model(const NetworkModel& model);

/// Single-layer check shared by validate_model and the loaders.
void collect_layer_violations(const LayerCSR& layer, std::size_t neurons, std::size_t layer_index,
                              std::vector<Violation>& out);

/// Throws Error with every violation joined when the model is invalid.
void require_valid(const NetworkModel& model);

}  // namespace spdnn
