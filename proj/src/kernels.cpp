#include <algorithm>
#include <cstring>
#include <type_traits>

#include "spdnn/engine.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace spdnn {
namespace {

int team_size(int requested) {
#ifdef _OPENMP
  return requested > 0 ? requested : omp_get_max_threads();
#else
  (void)requested;
  return 1;
#endif
}

void check_shapes(const FeatureBatch& features, std::size_t rows, std::span<const Real> bias) {
  if (features.neurons != rows || bias.size() != rows) {
    throw Error("dimension mismatch: layer has " + std::to_string(rows) + " rows, features " +
                std::to_string(features.neurons) + ", bias " + std::to_string(bias.size()));
  }
  if (features.data.size() != features.neurons * features.active_count()) {
    throw Error("dimension mismatch: feature data size");
  }
}

void mark_active(DenseOutput& out, std::size_t columns, int threads) {
  out.active.assign(columns, 0);
  const std::size_t n = out.neurons;
  const auto cols = static_cast<std::ptrdiff_t>(columns);
#pragma omp parallel for schedule(static) num_threads(threads)
  for (std::ptrdiff_t j = 0; j < cols; ++j) {
    const Real* col = out.data.data() + static_cast<std::size_t>(j) * n;
    out.active[j] = std::any_of(col, col + n, [](Real v) { return v > 0.0f; });
  }
}

// Accumulates one (group, block) of the optimized layer. `Width` is either a
// compile-time lane count or a runtime size_t for partial groups.
template <typename Width>
void accumulate_block(const SlicedEllLayer& ell, std::size_t block, const FeatureBatch& in,
                      std::size_t first_feature, Width width, std::size_t lane_stride, Real* buffer,
                      Real* acc, std::uint64_t& weight_reads, std::uint64_t& feature_reads) {
  const std::size_t lanes = width;
  const auto& plan = ell.plan;
  const std::size_t ws = ell.warp_size;
  const std::size_t warps = ell.warps_per_block();
  const std::size_t n = in.neurons;
  const Real* features = in.data.data() + first_feature * n;

  std::fill(acc, acc + plan.block_size * lane_stride, 0.0f);
  for (auto s = plan.buffdispl[block]; s < plan.buffdispl[block + 1]; ++s) {
    const std::size_t occupancy = plan.stage_size(s);
    const CompactIndex* map = plan.map.data() + plan.mapdispl[s];
    // Slot-major: buffer[slot * lane_stride + f] holds feature f's input row.
    for (std::size_t slot = 0; slot < occupancy; ++slot) {
      const Real* src = features + map[slot];
      Real* dst = buffer + slot * lane_stride;
      for (std::size_t f = 0; f < lanes; ++f) dst[f] = src[f * n];
    }
    feature_reads += occupancy * lanes;

    for (std::size_t w = 0; w < warps; ++w) {
      const std::size_t slot_id = s * warps + w;
      const std::size_t first = ell.wdispl[slot_id];
      const std::size_t last = ell.wdispl[slot_id + 1];
      Real* warp_acc = acc + w * ws * lane_stride;
      for (std::size_t m = first; m < last; ++m) {
        const CompactIndex* index = ell.windex.data() + m * ws;
        const Real* value = ell.wvalue.data() + m * ws;
        for (std::size_t lane = 0; lane < ws; ++lane) {
          const Real* staged = buffer + std::size_t{index[lane]} * lane_stride;
          const Real weight = value[lane];
          Real* a = warp_acc + lane * lane_stride;
          for (std::size_t f = 0; f < lanes; ++f) a[f] += staged[f] * weight;
        }
      }
      weight_reads += (last - first) * ws;
    }
  }
}

template <std::size_t K>
using Lanes = std::integral_constant<std::size_t, K>;

}  // namespace

DenseOutput baseline_layer(const FeatureBatch& features, const LayerCSR& layer, std::span<const Real> bias,
                           int threads) {
  const std::size_t rows = layer.rows();
  check_shapes(features, rows, bias);
  const std::size_t cols = features.active_count();
  threads = team_size(threads);

  DenseOutput out;
  out.neurons = rows;
  out.data.resize(rows * cols);
  const auto* row_ptr = layer.row_ptr.data();
  const auto* col_idx = layer.col_idx.data();
  const auto* values = layer.values.data();

#pragma omp parallel for schedule(static) num_threads(threads)
  for (std::ptrdiff_t jj = 0; jj < static_cast<std::ptrdiff_t>(cols); ++jj) {
    const auto j = static_cast<std::size_t>(jj);
    const Real* in = features.column(j);
    Real* dst = out.data.data() + j * rows;
    for (std::size_t r = 0; r < rows; ++r) {
      Real acc = 0.0f;
      for (auto k = row_ptr[r]; k < row_ptr[r + 1]; ++k) acc += in[col_idx[k]] * values[k];
      dst[r] = relu_clamped(acc + bias[r]);
    }
  }
  out.weight_reads = static_cast<std::uint64_t>(layer.nnz()) * cols;
  out.feature_reads = out.weight_reads;
  mark_active(out, cols, threads);
  return out;
}

DenseOutput optimized_layer(const FeatureBatch& features, const SlicedEllLayer& ell, std::span<const Real> bias,
                            std::size_t minibatch, int threads) {
  const std::size_t rows = ell.rows;
  check_shapes(features, rows, bias);
  if (minibatch == 0) throw Error("minibatch must be positive");
  if (ell.warp_size == 0 || ell.plan.block_size % ell.warp_size != 0 || ell.plan.rows != rows ||
      ell.wdispl.size() != ell.plan.num_stages() * ell.warps_per_block() + 1) {
    throw Error("geometry mismatch: sliced-ELL layout does not match its plan");
  }
  const std::size_t cols = features.active_count();
  const std::size_t groups = (cols + minibatch - 1) / minibatch;
  const std::size_t blocks = ell.num_blocks();
  const std::size_t block_size = ell.plan.block_size;
  threads = team_size(threads);

  DenseOutput out;
  out.neurons = rows;
  out.data.resize(rows * cols);
  std::uint64_t weight_reads = 0;
  std::uint64_t feature_reads = 0;

#pragma omp parallel num_threads(threads) reduction(+ : weight_reads, feature_reads)
  {
    std::vector<Real> buffer(ell.plan.buffer_capacity * minibatch);
    std::vector<Real> acc(block_size * minibatch);

#pragma omp for schedule(dynamic, 1)
    for (std::ptrdiff_t task = 0; task < static_cast<std::ptrdiff_t>(groups * blocks); ++task) {
      const std::size_t group = static_cast<std::size_t>(task) / blocks;
      const std::size_t block = static_cast<std::size_t>(task) % blocks;
      const std::size_t first = group * minibatch;
      const std::size_t lanes = std::min(minibatch, cols - first);

      auto run = [&](auto width) {
        accumulate_block(ell, block, features, first, width, minibatch, buffer.data(), acc.data(),
                         weight_reads, feature_reads);
      };
      if (lanes == minibatch && minibatch == 12) {
        run(Lanes<12>{});
      } else if (lanes == minibatch && minibatch == 8) {
        run(Lanes<8>{});
      } else if (lanes == minibatch && minibatch == 4) {
        run(Lanes<4>{});
      } else if (lanes == 1) {
        run(Lanes<1>{});
      } else {
        run(lanes);
      }

      const std::size_t row_end = std::min(rows, (block + 1) * block_size);
      for (std::size_t r = block * block_size; r < row_end; ++r) {
        const Real* a = acc.data() + (r - block * block_size) * minibatch;
        for (std::size_t f = 0; f < lanes; ++f) {
          out.data[(first + f) * rows + r] = relu_clamped(a[f] + bias[r]);
        }
      }
    }
  }
  out.weight_reads = weight_reads;
  out.feature_reads = feature_reads;
  mark_active(out, cols, threads);
  return out;
}

FeatureBatch compact_active(DenseOutput output, std::span<const Index> categories, std::size_t total_inputs) {
  if (output.active.size() != categories.size()) {
    throw Error("active flags and categories differ in length");
  }
  const std::size_t n = output.neurons;
  FeatureBatch batch;
  batch.neurons = n;
  batch.total_inputs = total_inputs;
  std::size_t kept = 0;
  for (std::size_t j = 0; j < categories.size(); ++j) {
    if (!output.active[j]) continue;
    if (kept != j) {
      std::memmove(output.data.data() + kept * n, output.data.data() + j * n, n * sizeof(Real));
    }
    batch.categories.push_back(categories[j]);
    ++kept;
  }
  output.data.resize(kept * n);
  batch.data = std::move(output.data);
  return batch;
}

}  // namespace spdnn
