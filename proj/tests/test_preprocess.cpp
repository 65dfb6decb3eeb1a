#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "spdnn/ingest.hpp"
#include "spdnn/preprocess.hpp"
#include "support/random_models.hpp"

using namespace spdnn;

namespace {

LayerCSR from_rows(std::size_t n, const std::vector<std::vector<Index>>& rows) {
  LayerCSR layer;
  layer.row_ptr.assign(1, 0);
  for (std::size_t r = 0; r < n; ++r) {
    if (r < rows.size()) {
      for (auto c : rows[r]) {
        layer.col_idx.push_back(c);
        layer.values.push_back(0.5f + static_cast<Real>(c));
      }
    }
    layer.row_ptr.push_back(layer.col_idx.size());
  }
  return layer;
}

// The first block's rows reference {0,1,3,4,5,7,8,10,11,13,14}.
LayerCSR sample_layer() {
  return from_rows(16, {{0, 4, 7, 8, 10, 13}, {1, 3, 8}, {4, 5, 11, 14}, {0, 7, 8, 13}, {2}, {6, 9}, {12}, {15}});
}

std::vector<CompactIndex> stage_map(const StagingPlan& plan, std::size_t s) {
  return {plan.map.begin() + plan.mapdispl[s], plan.map.begin() + plan.mapdispl[s + 1]};
}

// Brute force: every nonzero's original column comes back through the plan.
bool gathers_match(const LayerCSR& layer, const StagingResult& result) {
  const auto& plan = result.plan;
  const auto& staged = result.staged;
  for (std::size_t n = 0; n < layer.nnz(); ++n) {
    const auto s = staged.stage[n];
    if (s >= plan.num_stages()) return false;
    const auto slot = staged.slots.col_idx[n];
    if (slot >= plan.stage_size(s)) return false;
    if (plan.map[plan.mapdispl[s] + slot] != layer.col_idx[n]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("preload list and remapped indices of the sample block") {
  const auto layer = sample_layer();
  auto [plan, staged] = build_staging_plan(layer, 4, 1024);
  REQUIRE(plan.num_blocks() == 4);
  REQUIRE(plan.buffdispl[1] - plan.buffdispl[0] == 1);
  CHECK(stage_map(plan, 0) == std::vector<CompactIndex>{0, 1, 3, 4, 5, 7, 8, 10, 11, 13, 14});

  const std::vector<Index> row0(staged.slots.col_idx.begin(), staged.slots.col_idx.begin() + 3);
  CHECK(row0 == std::vector<Index>{0, 3, 5});
  CHECK(gathers_match(layer, {plan, staged}));
}

TEST_CASE("a six-slot buffer splits the sample block into two stages") {
  const auto layer = sample_layer();
  auto result = build_staging_plan(layer, 4, 6);
  const auto& plan = result.plan;
  REQUIRE(plan.buffdispl[1] == 2);
  CHECK(stage_map(plan, 0) == std::vector<CompactIndex>{0, 1, 3, 4, 5, 7});
  CHECK(stage_map(plan, 1) == std::vector<CompactIndex>{8, 10, 11, 13, 14});

  // Row 0 reads 8, 10, 13 in the second stage: buffer slots 0, 1, 3.
  const auto& staged = result.staged;
  CHECK(std::vector<std::uint32_t>(staged.stage.begin(), staged.stage.begin() + 6) ==
        std::vector<std::uint32_t>{0, 0, 0, 1, 1, 1});
  CHECK(std::vector<Index>(staged.slots.col_idx.begin(), staged.slots.col_idx.begin() + 6) ==
        std::vector<Index>{0, 3, 5, 0, 1, 3});
  CHECK(gathers_match(layer, result));
}

TEST_CASE("staging plan invariants over random layers") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = testing::uniform_int(rng, 1, 96);
    const auto layer = testing::random_layer(rng, n, 0, std::min<std::size_t>(n, 12));
    const std::size_t block = testing::uniform_int(rng, 1, 20);
    const std::size_t capacity = testing::uniform_int(rng, 1, 40);
    auto result = build_staging_plan(layer, block, capacity);
    const auto& plan = result.plan;
    REQUIRE(gathers_match(layer, result));
    REQUIRE(plan.num_blocks() == (n + block - 1) / block);
    CHECK(plan.buffdispl.front() == 0);
    CHECK(std::is_sorted(plan.buffdispl.begin(), plan.buffdispl.end()));
    for (std::size_t s = 0; s < plan.num_stages(); ++s) {
      CHECK(plan.stage_size(s) >= 1);
      CHECK(plan.stage_size(s) <= capacity);
      auto m = stage_map(plan, s);
      CHECK(std::adjacent_find(m.begin(), m.end(), std::greater_equal<>()) == m.end());
    }
    for (std::size_t b = 0; b < plan.num_blocks(); ++b) {
      std::set<Index> footprint;
      for (auto i = layer.row_ptr[b * block]; i < layer.row_ptr[std::min(n, (b + 1) * block)]; ++i) {
        footprint.insert(layer.col_idx[i]);
      }
      const auto map_len = plan.mapdispl[plan.buffdispl[b + 1]] - plan.mapdispl[plan.buffdispl[b]];
      CHECK(map_len == footprint.size());
    }
  }
}

TEST_CASE("build_staging_plan errors") {
  const auto layer = sample_layer();
  CHECK_THROWS_AS(build_staging_plan(layer, 4, 0), Error);
  CHECK_THROWS_AS(build_staging_plan(layer, 0, 4), Error);

  auto plan = build_staging_plan(layer, 4, 6).plan;
  CHECK_THROWS_AS(stage_layer(from_rows(8, {}), plan), Error);
  auto other = from_rows(16, {{9}});  // column 9 is not in block 0's footprint
  CHECK_THROWS_AS(stage_layer(other, plan), Error);
}

TEST_CASE("sliced-ELL layout of a hand-built two-warp block") {
  // Rows with 3, 1, 2, 2 entries; block of 4, warps of 2, one stage.
  const auto layer = from_rows(4, {{0, 1, 3}, {2}, {1, 2}, {0, 3}});
  auto [plan, staged] = build_staging_plan(layer, 4, 64);
  auto ell = csr_to_sliced_ell(staged, plan, 2);

  CHECK(ell.wdispl == std::vector<std::uint32_t>{0, 3, 5});
  // Warp 0: lanes (row 0, row 1); row 1 padded twice.
  // Warp 1: lanes (row 2, row 3); no padding.
  CHECK(ell.windex == std::vector<CompactIndex>{0, 2, 1, 0, 3, 0, 1, 0, 2, 3});
  CHECK(ell.wvalue == std::vector<Real>{0.5f, 2.5f, 1.5f, 0.0f, 3.5f, 0.0f, 1.5f, 0.5f, 2.5f, 3.5f});
  CHECK(ell.slots() - layer.nnz() == 2);

  auto back = expand_sliced_ell(ell);
  CHECK(back == staged);
  CHECK(back.slots.nnz() == 8);
}

TEST_CASE("padding per warp is max-minus-count") {
  SUBCASE("uneven warp (3, 1)") {
    const auto three_one = from_rows(4, {{0, 1, 2}, {3}, {}, {}});
    auto [plan, staged] = build_staging_plan(three_one, 2, 16);
    auto ell = csr_to_sliced_ell(staged, plan, 2);
    CHECK(ell.wdispl == std::vector<std::uint32_t>{0, 3});  // block 1 has no stages
    CHECK(ell.slots() == 6);
  }
  SUBCASE("equal rows need no padding") {
    const auto layer = from_rows(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
    auto [plan, staged] = build_staging_plan(layer, 4, 16);
    auto ell = csr_to_sliced_ell(staged, plan, 4);
    CHECK(ell.slots() == layer.nnz());
  }
}

TEST_CASE("expand inverts convert on random layers") {
  std::mt19937_64 rng(500);
  for (int seed = 0; seed < 500; ++seed) {
    const auto layer = testing::random_layer(rng, 64, 8, 8);
    const std::size_t capacity = testing::uniform_int(rng, 4, 64);
    auto [plan, staged] = build_staging_plan(layer, 8, capacity);
    auto ell = csr_to_sliced_ell(staged, plan, 4);
    REQUIRE(expand_sliced_ell(ell) == staged);
    CHECK(ell.wdispl.size() == plan.num_stages() * 2 + 1);
    CHECK(ell.windex.size() == std::size_t{ell.wdispl.back()} * 4);
    for (std::size_t s = 0; s < plan.num_stages(); ++s) {
      for (std::size_t w = 0; w < 2; ++w) {
        for (auto m = ell.wdispl[s * 2 + w]; m < ell.wdispl[s * 2 + w + 1]; ++m) {
          for (std::size_t lane = 0; lane < 4; ++lane) CHECK(ell.windex[m * 4 + lane] < plan.stage_size(s));
        }
      }
    }
  }
}

TEST_CASE("expand of an empty layout") {
  SlicedEllLayer ell;
  ell.rows = 3;
  ell.warp_size = 1;
  ell.plan.rows = 3;
  ell.plan.block_size = 1;
  ell.plan.buffdispl = {0, 0, 0, 0};
  auto back = expand_sliced_ell(ell);
  CHECK(back.slots.nnz() == 0);
  CHECK(back.slots.row_ptr == std::vector<std::uint64_t>{0, 0, 0, 0});
}

TEST_CASE("csr_to_sliced_ell geometry errors") {
  const auto layer = sample_layer();
  auto [plan, staged] = build_staging_plan(layer, 4, 6);
  CHECK_THROWS_AS(csr_to_sliced_ell(staged, plan, 3), Error);
  CHECK_THROWS_AS(csr_to_sliced_ell(staged, plan, 0), Error);
  auto short_stage = staged;
  short_stage.stage.pop_back();
  CHECK_THROWS_AS(csr_to_sliced_ell(short_stage, plan, 2), Error);
  auto wrong_stage = staged;
  wrong_stage.stage[0] = 5;
  CHECK_THROWS_AS(csr_to_sliced_ell(wrong_stage, plan, 2), Error);
}

TEST_CASE("padding_stats") {
  SUBCASE("uniform rows cost nothing") {
    GeneratorSpec spec;
    spec.neurons = 64;
    spec.connections_per_neuron = 8;
    spec.layers = 1;
    const auto layer = generate_synthetic_network(spec).layers[0];
    auto plan = build_staging_plan(layer, 16, 1024).plan;
    auto stats = padding_stats(layer, plan, 4);
    CHECK(stats.nnz == 512);
    CHECK(stats.warp_overhead == 0.0);
    CHECK(stats.tile_overhead == 0.0);
    CHECK(stats.layer_overhead == 0.0);
  }
  SUBCASE("rows (3, 1) in one warp of 2") {
    const auto three_one = from_rows(2, {{0, 1}, {0}});
    auto plan = build_staging_plan(three_one, 2, 16).plan;
    auto stats = padding_stats(three_one, plan, 2);
    CHECK(stats.nnz == 3);
    CHECK(stats.warp_padded_slots == 1);
    CHECK(stats.warp_overhead == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("tile and layer granularity") {
    // Two blocks of 4 rows, warps of 2. Block 0 rows (4,1,1,1), block 1 rows (1,1,2,2).
    const auto layer =
        from_rows(8, {{0, 1, 2, 3}, {4}, {5}, {6}, {0}, {1}, {2, 3}, {4, 5}});
    auto plan = build_staging_plan(layer, 4, 64).plan;
    auto stats = padding_stats(layer, plan, 2);
    CHECK(stats.nnz == 13);
    // warp: (4*2 + 1*2) + (1*2 + 2*2) = 16
    CHECK(stats.warp_padded_slots == 3);
    // tile: 4*4 + 2*4 = 24
    CHECK(stats.tile_padded_slots == 11);
    // layer: 2 tiles * 4 rows * 4 = 32
    CHECK(stats.layer_padded_slots == 19);
  }
  SUBCASE("empty layer") {
    const auto layer = from_rows(4, {});
    auto plan = build_staging_plan(layer, 2, 8).plan;
    auto stats = padding_stats(layer, plan, 2);
    CHECK_FALSE(stats.defined);
    CHECK(stats.warp_overhead == 0.0);
  }
}

TEST_CASE("padding overhead ordering holds on random layers") {
  std::mt19937_64 rng(1000);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = testing::uniform_int(rng, 4, 80);
    const auto layer = testing::random_layer(rng, n, 1, std::min<std::size_t>(n, 10));
    const std::size_t warp = std::size_t{1} << testing::uniform_int(rng, 0, 3);
    const std::size_t block = warp * testing::uniform_int(rng, 1, 4);
    const std::size_t capacity = testing::uniform_int(rng, 1, 48);
    auto [plan, staged] = build_staging_plan(layer, block, capacity);
    auto stats = padding_stats(layer, plan, warp);
    REQUIRE(stats.warp_padded_slots <= stats.tile_padded_slots);
    REQUIRE(stats.tile_padded_slots <= stats.layer_padded_slots);
    CHECK(stats.warp_overhead <= stats.tile_overhead);
    CHECK(stats.tile_overhead <= stats.layer_overhead);
    // The warp-granularity count is exactly what the sliced-ELL layout stores.
    auto ell = csr_to_sliced_ell(staged, plan, warp);
    CHECK(ell.slots() == stats.nnz + stats.warp_padded_slots);
  }
}

TEST_CASE("narrow_indices") {
  const std::vector<Index> edge{0, 65535};
  CHECK(narrow_indices(edge) == std::vector<CompactIndex>{0, 65535});
  const std::vector<Index> over{65536};
  CHECK_THROWS_WITH_AS(narrow_indices(over), "neuron count exceeds compact index range", Error);
  CHECK(narrow_indices(std::vector<Index>{}).empty());
}

TEST_CASE("compact indices halve the windex and map footprint") {
  std::mt19937_64 rng(77);
  const auto layer = testing::random_layer(rng, 256, 4, 16);
  auto ell = prepare_layer(layer, 64, 128, 32);
  auto f = index_footprint(ell);
  CHECK(f.windex_wide == 2 * f.windex_compact);
  CHECK(f.map_wide == 2 * f.map_compact);
  CHECK(f.windex_compact == ell.windex.size() * 2);
  CHECK(f.index_reduction() >= 0.25);
  CHECK(f.index_reduction() < 0.5);
  CHECK(f.total_reduction() > 0.0);
  CHECK(f.total_reduction() < f.index_reduction());
}
