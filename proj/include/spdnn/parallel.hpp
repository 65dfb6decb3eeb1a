#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "spdnn/engine.hpp"
#include "spdnn/fabric.hpp"

namespace spdnn {

/// Features split across workers; shard categories are disjoint.
struct Partition {
  std::vector<FeatureBatch> shards;

  std::size_t worker_count() const noexcept { return shards.size(); }
  std::vector<std::size_t> counts() const;
};

/// Rows sent from worker i to worker j, accumulated over every rebalance.
class CommMatrix {
 public:
  CommMatrix() = default;
  explicit CommMatrix(std::size_t workers) : workers_(workers), cells_(workers * workers, 0) {}

  std::size_t workers() const noexcept { return workers_; }
  std::uint64_t at(std::size_t from, std::size_t to) const { return cells_.at(from * workers_ + to); }
  void add(std::size_t from, std::size_t to, std::uint64_t rows);

  std::uint64_t sent_by(std::size_t worker) const;
  std::uint64_t received_by(std::size_t worker) const;
  std::uint64_t total() const;
  bool all_zero() const { return total() == 0; }

  CommMatrix& operator+=(const CommMatrix& other);
  friend bool operator==(const CommMatrix&, const CommMatrix&) = default;

 private:
  std::size_t workers_ = 0;
  std::vector<std::uint64_t> cells_;
};

struct Transfer {
  std::size_t from = 0;
  std::size_t to = 0;
  std::size_t rows = 0;

  friend bool operator==(const Transfer&, const Transfer&) = default;
};

struct LayerBalance {
  std::vector<std::size_t> before_counts;
  std::vector<std::size_t> after_counts;
  double imbalance_before = 1.0;
  double imbalance_after = 1.0;
  std::uint64_t moved_rows = 0;
  bool rebalanced = false;
};

struct BalanceReport {
  std::vector<LayerBalance> layers;

  std::uint64_t moved_rows() const;
  std::size_t rebalance_count() const;
};

/// Contiguous category ranges; shard sizes differ by at most one, larger first.
Partition partition_even(const FeatureBatch& features, std::size_t workers);

/// max/min of the counts; +inf when some count is zero and another is not;
/// 1.0 when all are zero.
double imbalance_ratio(std::span<const std::size_t> counts);

/// Targets are an even split of the total; the extra rows of an uneven split
/// go to the workers already holding the most (lowest index on ties), which
/// minimizes movement. Donors and receivers are then paired greedily, largest
/// surplus with largest deficit.
std::vector<Transfer> balance_step(std::span<const std::size_t> counts);

/// Moves each transfer's rows from the donor's highest categories to the
/// receiver. Throws if a transfer exceeds what the donor holds.
std::pair<Partition, CommMatrix> apply_transfers(std::span<const Transfer> plan, Partition partition);

/// Sorted union of shard categories; throws on a category held twice.
std::vector<Index> gather_categories(const Partition& partition);

/// Removes and returns the last `rows` columns of `batch`.
FeatureBatch take_tail(FeatureBatch& batch, std::size_t rows);

/// Merges `incoming` into `batch`, keeping categories ascending.
void merge_columns(FeatureBatch& batch, FeatureBatch incoming);

struct ParallelResult {
  InferenceResult result;
  CommMatrix comm;
  BalanceReport balance;
  std::uint64_t messages = 0;
};

/// Batch-parallel inference on config.workers simulated workers.
///
/// Every worker holds the full weights and runs the engine on its shard.
/// After each layer the workers exchange active counts; when the imbalance
/// exceeds config.rebalance_threshold they move rows per balance_step. The
/// final shards are gathered at worker 0 and sorted by category. Timing covers
/// everything from the initial scatter to the gather.
ParallelResult run_batch_parallel(const NetworkModel& model, const FeatureBatch& inputs,
                                  const InferenceConfig& config, Mode mode = Mode::optimized,
                                  Fabric::LatencyHook latency = {});

}  // namespace spdnn
