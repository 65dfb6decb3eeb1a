#include "spdnn/preprocess.hpp"

#include <algorithm>
#include <limits>

namespace spdnn {
namespace {

constexpr std::uint64_t kCompactLimit = std::uint64_t{1} << 16;

std::uint32_t checked_u32(std::uint64_t value) {
  if (value > std::numeric_limits<std::uint32_t>::max()) throw Error("displacement overflows 32 bits");
  return static_cast<std::uint32_t>(value);
}

std::size_t block_end(std::size_t b, std::size_t block_size, std::size_t rows) {
  return std::min(rows, (b + 1) * block_size);
}

// Calls visit(stage, count) for each run of a row's entries sharing a stage.
// A row's entries are grouped by stage because stages split each block's
// sorted footprint into ascending ranges.
template <typename Visit>
void for_each_row_stage_count(const StagedLayer& staged, std::size_t row, Visit&& visit) {
  const auto& csr = staged.slots;
  auto n = csr.row_ptr[row];
  const auto end = csr.row_ptr[row + 1];
  while (n < end) {
    const auto s = staged.stage[n];
    auto run = n;
    while (run < end && staged.stage[run] == s) ++run;
    visit(s, run - n);
    n = run;
  }
}

}  // namespace

std::vector<CompactIndex> narrow_indices(std::span<const Index> values) {
  std::vector<CompactIndex> out;
  out.reserve(values.size());
  for (auto v : values) {
    if (v >= kCompactLimit) throw Error("neuron count exceeds compact index range");
    out.push_back(static_cast<CompactIndex>(v));
  }
  return out;
}

StagingResult build_staging_plan(const LayerCSR& layer, std::size_t block_size,
                                 std::size_t buffer_capacity) {
  if (buffer_capacity == 0) throw Error("buffer_capacity must be at least 1");
  if (block_size == 0) throw Error("block_size must be positive");

  const std::size_t rows = layer.rows();
  const std::size_t blocks = (rows + block_size - 1) / block_size;
  StagingPlan plan;
  plan.rows = rows;
  plan.block_size = block_size;
  plan.buffer_capacity = buffer_capacity;
  plan.buffdispl.reserve(blocks + 1);

  std::vector<Index> wide_map;
  std::vector<Index> footprint;
  for (std::size_t b = 0; b < blocks; ++b) {
    footprint.assign(layer.col_idx.begin() + static_cast<std::ptrdiff_t>(layer.row_ptr[b * block_size]),
                     layer.col_idx.begin() +
                         static_cast<std::ptrdiff_t>(layer.row_ptr[block_end(b, block_size, rows)]));
    std::sort(footprint.begin(), footprint.end());
    footprint.erase(std::unique(footprint.begin(), footprint.end()), footprint.end());

    for (std::size_t start = 0; start < footprint.size(); start += buffer_capacity) {
      const auto stop = std::min(footprint.size(), start + buffer_capacity);
      wide_map.insert(wide_map.end(), footprint.begin() + static_cast<std::ptrdiff_t>(start),
                      footprint.begin() + static_cast<std::ptrdiff_t>(stop));
      plan.mapdispl.push_back(checked_u32(wide_map.size()));
    }
    plan.buffdispl.push_back(checked_u32(plan.mapdispl.size() - 1));
  }
  plan.map = narrow_indices(wide_map);

  auto staged = stage_layer(layer, plan);
  return {std::move(plan), std::move(staged)};
}

StagedLayer stage_layer(const LayerCSR& layer, const StagingPlan& plan) {
  if (layer.rows() != plan.rows) throw Error("geometry mismatch: layer rows differ from plan rows");

  StagedLayer staged;
  staged.slots.row_ptr = layer.row_ptr;
  staged.slots.values = layer.values;
  staged.slots.col_idx.resize(layer.nnz());
  staged.stage.resize(layer.nnz());

  for (std::size_t b = 0; b < plan.num_blocks(); ++b) {
    const auto first_stage = plan.buffdispl[b];
    const auto last_stage = plan.buffdispl[b + 1];
    const auto block_map = plan.map.begin() + plan.mapdispl[first_stage];
    const auto block_map_end = plan.map.begin() + plan.mapdispl[last_stage];
    for (std::size_t r = b * plan.block_size; r < block_end(b, plan.block_size, plan.rows); ++r) {
      for (auto n = layer.row_ptr[r]; n < layer.row_ptr[r + 1]; ++n) {
        const auto col = layer.col_idx[n];
        auto it = std::lower_bound(block_map, block_map_end, col);
        if (it == block_map_end || *it != col) {
          throw Error("geometry mismatch: column " + std::to_string(col) + " missing from block " +
                      std::to_string(b) + " footprint");
        }
        const auto pos = static_cast<std::size_t>(it - plan.map.begin());
        auto s = static_cast<std::uint32_t>(
            std::upper_bound(plan.mapdispl.begin() + first_stage, plan.mapdispl.begin() + last_stage + 1, pos) -
            plan.mapdispl.begin() - 1);
        staged.stage[n] = s;
        staged.slots.col_idx[n] = static_cast<Index>(pos - plan.mapdispl[s]);
      }
    }
  }
  return staged;
}

SlicedEllLayer csr_to_sliced_ell(const StagedLayer& staged, const StagingPlan& plan,
                                 std::size_t warp_size) {
  const auto& csr = staged.slots;
  if (warp_size == 0 || plan.block_size % warp_size != 0) {
    throw Error("geometry mismatch: block size must be a multiple of warp size");
  }
  if (csr.rows() != plan.rows || staged.stage.size() != csr.nnz()) {
    throw Error("geometry mismatch: staged layer does not match plan");
  }

  SlicedEllLayer ell;
  ell.rows = plan.rows;
  ell.warp_size = warp_size;
  ell.plan = plan;
  const std::size_t warps = plan.block_size / warp_size;
  ell.wdispl.assign(1, 0);
  ell.wdispl.reserve(plan.num_stages() * warps + 1);

  // Next unconsumed entry of every row; rows visit their stages in order.
  std::vector<std::uint64_t> cursor(csr.row_ptr.begin(), csr.row_ptr.end() - 1);
  std::vector<std::size_t> lane_count(warp_size);

  for (std::size_t b = 0; b < plan.num_blocks(); ++b) {
    for (auto s = plan.buffdispl[b]; s < plan.buffdispl[b + 1]; ++s) {
      const auto capacity = plan.stage_size(s);
      for (std::size_t w = 0; w < warps; ++w) {
        const std::size_t first_row = b * plan.block_size + w * warp_size;
        std::size_t slices = 0;
        for (std::size_t lane = 0; lane < warp_size; ++lane) {
          const std::size_t r = first_row + lane;
          std::size_t count = 0;
          if (r < plan.rows) {
            while (cursor[r] + count < csr.row_ptr[r + 1] && staged.stage[cursor[r] + count] == s) {
              if (csr.col_idx[cursor[r] + count] >= capacity) {
                throw Error("geometry mismatch: slot beyond stage occupancy");
              }
              ++count;
            }
          }
          lane_count[lane] = count;
          slices = std::max(slices, count);
        }

        const std::size_t base = ell.windex.size();
        ell.windex.resize(base + slices * warp_size, 0);
        ell.wvalue.resize(base + slices * warp_size, 0.0f);
        for (std::size_t lane = 0; lane < warp_size; ++lane) {
          const std::size_t r = first_row + lane;
          for (std::size_t m = 0; m < lane_count[lane]; ++m) {
            const auto n = cursor[r] + m;
            ell.windex[base + m * warp_size + lane] = static_cast<CompactIndex>(csr.col_idx[n]);
            ell.wvalue[base + m * warp_size + lane] = csr.values[n];
          }
          if (lane_count[lane] != 0) cursor[r] += lane_count[lane];
        }
        ell.wdispl.push_back(checked_u32(ell.wdispl.back() + slices));
      }
    }
  }
  for (std::size_t r = 0; r < plan.rows; ++r) {
    if (cursor[r] != csr.row_ptr[r + 1]) {
      throw Error("geometry mismatch: row " + std::to_string(r) + " has entries outside its block's stages");
    }
  }
  return ell;
}

StagedLayer expand_sliced_ell(const SlicedEllLayer& ell) {
  const auto& plan = ell.plan;
  const std::size_t warps = ell.warps_per_block();
  StagedLayer staged;
  auto& csr = staged.slots;
  csr.row_ptr.assign(ell.rows + 1, 0);

  // Collect per-row entries first; rows are interleaved across warp slots.
  std::vector<std::vector<std::pair<std::uint32_t, std::pair<Index, Real>>>> rows(ell.rows);
  for (std::size_t b = 0; b < plan.num_blocks(); ++b) {
    for (auto s = plan.buffdispl[b]; s < plan.buffdispl[b + 1]; ++s) {
      for (std::size_t w = 0; w < warps; ++w) {
        const auto slot = s * warps + w;
        for (std::size_t lane = 0; lane < ell.warp_size; ++lane) {
          const std::size_t r = b * plan.block_size + w * ell.warp_size + lane;
          if (r >= ell.rows) continue;
          for (auto m = ell.wdispl[slot]; m < ell.wdispl[slot + 1]; ++m) {
            const auto at = m * ell.warp_size + lane;
            const Index index = ell.windex[at];
            const Real value = ell.wvalue[at];
            const bool first = m == ell.wdispl[slot];
            if (index == 0 && (!first || value == 0.0f)) break;
            rows[r].push_back({s, {index, value}});
          }
        }
      }
    }
  }
  for (std::size_t r = 0; r < ell.rows; ++r) {
    csr.row_ptr[r + 1] = csr.row_ptr[r] + rows[r].size();
    for (const auto& [s, entry] : rows[r]) {
      staged.stage.push_back(s);
      csr.col_idx.push_back(entry.first);
      csr.values.push_back(entry.second);
    }
  }
  return staged;
}

SlicedEllLayer prepare_layer(const LayerCSR& layer, std::size_t block_size, std::size_t buffer_capacity,
                             std::size_t warp_size) {
  auto [plan, staged] = build_staging_plan(layer, block_size, buffer_capacity);
  return csr_to_sliced_ell(staged, plan, warp_size);
}

PaddingStats padding_stats(const LayerCSR& layer, const StagingPlan& plan, std::size_t warp_size) {
  if (warp_size == 0 || plan.block_size % warp_size != 0) {
    throw Error("geometry mismatch: block size must be a multiple of warp size");
  }
  const auto staged = stage_layer(layer, plan);
  const std::size_t stages = plan.num_stages();
  const std::size_t warps = plan.block_size / warp_size;

  // Widest lane per (stage, warp) and widest row per stage.
  std::vector<std::uint64_t> warp_width(stages * warps, 0);
  std::vector<std::uint64_t> tile_width(stages, 0);
  std::uint64_t layer_width = 0;
  for (std::size_t r = 0; r < plan.rows; ++r) {
    const std::size_t w = (r % plan.block_size) / warp_size;
    for_each_row_stage_count(staged, r, [&](std::uint32_t s, std::uint64_t count) {
      warp_width[s * warps + w] = std::max(warp_width[s * warps + w], count);
      tile_width[s] = std::max(tile_width[s], count);
      layer_width = std::max(layer_width, count);
    });
  }

  std::uint64_t warp_slots = 0;
  std::uint64_t tile_slots = 0;
  for (auto width : warp_width) warp_slots += width * warp_size;
  for (auto width : tile_width) tile_slots += width * plan.block_size;
  const std::uint64_t layer_slots = layer_width * plan.block_size * stages;

  PaddingStats stats;
  stats.nnz = layer.nnz();
  stats.warp_padded_slots = warp_slots - stats.nnz;
  stats.tile_padded_slots = tile_slots - stats.nnz;
  stats.layer_padded_slots = layer_slots - stats.nnz;
  stats.defined = stats.nnz != 0;
  if (stats.defined) {
    const auto nnz = static_cast<double>(stats.nnz);
    stats.warp_overhead = static_cast<double>(stats.warp_padded_slots) / nnz;
    stats.tile_overhead = static_cast<double>(stats.tile_padded_slots) / nnz;
    stats.layer_overhead = static_cast<double>(stats.layer_padded_slots) / nnz;
  }
  return stats;
}

double IndexFootprint::index_reduction() const {
  const auto wide = index_wide();
  return wide == 0 ? 0.0 : 1.0 - static_cast<double>(index_compact()) / static_cast<double>(wide);
}

double IndexFootprint::total_reduction() const {
  const auto wide = index_wide() + wvalue;
  return wide == 0 ? 0.0 : 1.0 - static_cast<double>(index_compact() + wvalue) / static_cast<double>(wide);
}

IndexFootprint& IndexFootprint::operator+=(const IndexFootprint& other) {
  windex_wide += other.windex_wide;
  windex_compact += other.windex_compact;
  map_wide += other.map_wide;
  map_compact += other.map_compact;
  displacements += other.displacements;
  wvalue += other.wvalue;
  return *this;
}

IndexFootprint index_footprint(const SlicedEllLayer& ell) {
  IndexFootprint f;
  f.windex_wide = ell.windex.size() * sizeof(Index);
  f.windex_compact = ell.windex.size() * sizeof(CompactIndex);
  f.map_wide = ell.plan.map.size() * sizeof(Index);
  f.map_compact = ell.plan.map.size() * sizeof(CompactIndex);
  f.displacements = (ell.wdispl.size() + ell.plan.mapdispl.size() + ell.plan.buffdispl.size()) *
                    sizeof(std::uint32_t);
  f.wvalue = ell.wvalue.size() * sizeof(Real);
  return f;
}

}  // namespace spdnn
