#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spdnn/model.hpp"

namespace spdnn {

/// Preload lists for staging input rows through a bounded per-block buffer.
///
/// Output rows are grouped into blocks of `block_size`. Each block's footprint
/// (the sorted, deduplicated input rows its weights reference) is split
/// greedily into stages of at most `buffer_capacity` rows. Stage ids are
/// global: block b owns stages [buffdispl[b], buffdispl[b+1]), and stage s
/// preloads map[mapdispl[s] .. mapdispl[s+1]) into buffer slots 0, 1, ...
struct StagingPlan {
  std::size_t rows = 0;
  std::size_t block_size = 0;
  std::size_t buffer_capacity = 0;
  std::vector<std::uint32_t> buffdispl{0};
  std::vector<std::uint32_t> mapdispl{0};
  std::vector<CompactIndex> map;

  std::size_t num_blocks() const noexcept { return buffdispl.size() - 1; }
  std::size_t num_stages() const noexcept { return mapdispl.size() - 1; }
  std::size_t stage_size(std::size_t s) const { return mapdispl[s + 1] - mapdispl[s]; }

  friend bool operator==(const StagingPlan&, const StagingPlan&) = default;
};

/// A layer whose column indices were rewritten into buffer slots.
///
/// `slots` keeps the original nonzero order. For nonzero n, `stage[n]` is the
/// global stage holding its input row and `slots.col_idx[n]` is the slot
/// within that stage, so map[mapdispl[stage[n]] + slots.col_idx[n]] is the
/// original column.
struct StagedLayer {
  LayerCSR slots;
  std::vector<std::uint32_t> stage;

  friend bool operator==(const StagedLayer&, const StagedLayer&) = default;
};

struct StagingResult {
  StagingPlan plan;
  StagedLayer staged;
};

/// Errors: buffer_capacity or block_size of zero; a referenced input row that
/// does not fit a compact index.
StagingResult build_staging_plan(const LayerCSR& layer, std::size_t block_size,
                                 std::size_t buffer_capacity);

/// Rewrites `layer` against an existing plan. Throws if a column is missing
/// from its block's footprint.
StagedLayer stage_layer(const LayerCSR& layer, const StagingPlan& plan);

/// Transposed sliced-ELL weights, padded per warp and per stage.
///
/// Warp slot w = stage * warps_per_block + warp_in_block covers slices
/// [wdispl[w], wdispl[w+1]); lane i of slice m lives at m * warp_size + i.
/// Padding is (slot 0, value 0).
struct SlicedEllLayer {
  std::size_t rows = 0;
  std::size_t warp_size = 0;
  std::vector<std::uint32_t> wdispl{0};
  std::vector<CompactIndex> windex;
  std::vector<Real> wvalue;
  StagingPlan plan;

  std::size_t warps_per_block() const noexcept { return plan.block_size / warp_size; }
  std::size_t num_blocks() const noexcept { return plan.num_blocks(); }
  std::size_t slots() const noexcept { return windex.size(); }

  friend bool operator==(const SlicedEllLayer&, const SlicedEllLayer&) = default;
};

SlicedEllLayer csr_to_sliced_ell(const StagedLayer& staged, const StagingPlan& plan,
                                 std::size_t warp_size);

/// Inverse of csr_to_sliced_ell.
///
/// Within one lane and stage, slots strictly increase, so any entry after the
/// first with slot 0 is padding. A first entry of (slot 0, value 0) is also
/// read as padding; an explicit zero weight in that position does not survive.
StagedLayer expand_sliced_ell(const SlicedEllLayer& ell);

/// Build the plan, stage the layer and convert it in one go.
SlicedEllLayer prepare_layer(const LayerCSR& layer, std::size_t block_size,
                             std::size_t buffer_capacity, std::size_t warp_size);

/// Zero-padding cost of three ELL granularities over the same staged layout.
///
/// Each (block, stage) tile is padded to the widest warp lane (warp), the
/// widest row in the block (tile), or the widest row-stage in the whole layer
/// (layer). Slots beyond the last row of a partial block count as padding.
struct PaddingStats {
  std::uint64_t nnz = 0;
  std::uint64_t warp_padded_slots = 0;
  std::uint64_t tile_padded_slots = 0;
  std::uint64_t layer_padded_slots = 0;
  double warp_overhead = 0.0;
  double tile_overhead = 0.0;
  double layer_overhead = 0.0;
  // False when nnz == 0; the overheads are then reported as 0.
  bool defined = true;
};

PaddingStats padding_stats(const LayerCSR& layer, const StagingPlan& plan, std::size_t warp_size);

/// Lossless two-byte copy; throws Error if any value is >= 65536.
std::vector<CompactIndex> narrow_indices(std::span<const Index> values);

/// Byte counts of the index-bearing structures with four- and two-byte indices.
struct IndexFootprint {
  std::uint64_t windex_wide = 0;
  std::uint64_t windex_compact = 0;
  std::uint64_t map_wide = 0;
  std::uint64_t map_compact = 0;
  // wdispl + mapdispl + buffdispl; always four-byte.
  std::uint64_t displacements = 0;
  std::uint64_t wvalue = 0;

  std::uint64_t index_wide() const { return windex_wide + map_wide + displacements; }
  std::uint64_t index_compact() const { return windex_compact + map_compact + displacements; }
  double index_reduction() const;
  /// Including the weight values.
  double total_reduction() const;

  IndexFootprint& operator+=(const IndexFootprint& other);
};

IndexFootprint index_footprint(const SlicedEllLayer& ell);

}  // namespace spdnn
