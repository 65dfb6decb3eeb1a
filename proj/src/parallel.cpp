#include "spdnn/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <limits>
#include <numeric>
#include <optional>
#include <thread>

#include "spdnn/streamer.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace spdnn {

std::vector<std::size_t> Partition::counts() const {
  std::vector<std::size_t> out;
  out.reserve(shards.size());
  for (const auto& shard : shards) out.push_back(shard.active_count());
  return out;
}

void CommMatrix::add(std::size_t from, std::size_t to, std::uint64_t rows) {
  if (from == to) throw Error("comm matrix diagonal must stay zero");
  cells_.at(from * workers_ + to) += rows;
}

std::uint64_t CommMatrix::sent_by(std::size_t worker) const {
  std::uint64_t sum = 0;
  for (std::size_t j = 0; j < workers_; ++j) sum += at(worker, j);
  return sum;
}

std::uint64_t CommMatrix::received_by(std::size_t worker) const {
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < workers_; ++i) sum += at(i, worker);
  return sum;
}

std::uint64_t CommMatrix::total() const { return std::accumulate(cells_.begin(), cells_.end(), std::uint64_t{0}); }

CommMatrix& CommMatrix::operator+=(const CommMatrix& other) {
  if (other.workers_ != workers_) throw Error("comm matrix size mismatch");
  for (std::size_t i = 0; i < cells_.size(); ++i) cells_[i] += other.cells_[i];
  return *this;
}

std::uint64_t BalanceReport::moved_rows() const {
  std::uint64_t sum = 0;
  for (const auto& layer : layers) sum += layer.moved_rows;
  return sum;
}

std::size_t BalanceReport::rebalance_count() const {
  return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(), [](const auto& l) { return l.rebalanced; }));
}

Partition partition_even(const FeatureBatch& features, std::size_t workers) {
  if (workers == 0) throw Error("worker count must be positive");
  const std::size_t m = features.active_count();
  const std::size_t n = features.neurons;
  Partition partition;
  partition.shards.resize(workers);
  std::size_t begin = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t size = m / workers + (w < m % workers ? 1 : 0);
    auto& shard = partition.shards[w];
    shard.neurons = n;
    shard.total_inputs = features.total_inputs;
    shard.categories.assign(features.categories.begin() + static_cast<std::ptrdiff_t>(begin),
                            features.categories.begin() + static_cast<std::ptrdiff_t>(begin + size));
    shard.data.assign(features.data.begin() + static_cast<std::ptrdiff_t>(begin * n),
                      features.data.begin() + static_cast<std::ptrdiff_t>((begin + size) * n));
    begin += size;
  }
  return partition;
}

double imbalance_ratio(std::span<const std::size_t> counts) {
  if (counts.empty()) return 1.0;
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  if (*hi == 0) return 1.0;
  if (*lo == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(*hi) / static_cast<double>(*lo);
}

std::vector<Transfer> balance_step(std::span<const std::size_t> counts) {
  const std::size_t workers = counts.size();
  if (workers == 0) return {};
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});

  std::vector<std::size_t> order(workers);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
  std::vector<std::size_t> target(workers, total / workers);
  for (std::size_t i = 0; i < total % workers; ++i) ++target[order[i]];

  std::vector<std::size_t> surplus(workers, 0);
  std::vector<std::size_t> deficit(workers, 0);
  for (std::size_t w = 0; w < workers; ++w) {
    if (counts[w] > target[w]) surplus[w] = counts[w] - target[w];
    if (counts[w] < target[w]) deficit[w] = target[w] - counts[w];
  }

  // Largest first, lowest index on ties.
  auto largest = [&](const std::vector<std::size_t>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  };
  std::vector<Transfer> plan;
  for (;;) {
    const auto donor = largest(surplus);
    const auto receiver = largest(deficit);
    if (surplus[donor] == 0 || deficit[receiver] == 0) break;
    const auto rows = std::min(surplus[donor], deficit[receiver]);
    plan.push_back({donor, receiver, rows});
    surplus[donor] -= rows;
    deficit[receiver] -= rows;
  }
  return plan;
}

FeatureBatch take_tail(FeatureBatch& batch, std::size_t rows) {
  if (rows > batch.active_count()) throw Error("transfer exceeds donor size");
  const std::size_t keep = batch.active_count() - rows;
  const std::size_t n = batch.neurons;
  FeatureBatch tail;
  tail.neurons = n;
  tail.total_inputs = batch.total_inputs;
  tail.categories.assign(batch.categories.begin() + static_cast<std::ptrdiff_t>(keep), batch.categories.end());
  tail.data.assign(batch.data.begin() + static_cast<std::ptrdiff_t>(keep * n), batch.data.end());
  batch.categories.resize(keep);
  batch.data.resize(keep * n);
  return tail;
}

void merge_columns(FeatureBatch& batch, FeatureBatch incoming) {
  if (incoming.active_count() == 0) return;
  if (batch.active_count() == 0) {
    incoming.total_inputs = std::max(incoming.total_inputs, batch.total_inputs);
    batch = std::move(incoming);
    return;
  }
  if (incoming.neurons != batch.neurons) throw Error("merging shards with different neuron counts");
  const std::size_t n = batch.neurons;
  FeatureBatch merged;
  merged.neurons = n;
  merged.total_inputs = batch.total_inputs;
  merged.categories.reserve(batch.active_count() + incoming.active_count());
  merged.data.reserve(batch.data.size() + incoming.data.size());
  std::size_t a = 0;
  std::size_t b = 0;
  auto take = [&](const FeatureBatch& from, std::size_t j) {
    merged.categories.push_back(from.categories[j]);
    merged.data.insert(merged.data.end(), from.column(j), from.column(j) + n);
  };
  while (a < batch.active_count() || b < incoming.active_count()) {
    if (b == incoming.active_count() ||
        (a < batch.active_count() && batch.categories[a] < incoming.categories[b])) {
      take(batch, a++);
    } else {
      if (a < batch.active_count() && batch.categories[a] == incoming.categories[b]) {
        throw Error("category " + std::to_string(incoming.categories[b]) + " held by two workers");
      }
      take(incoming, b++);
    }
  }
  batch = std::move(merged);
}

std::pair<Partition, CommMatrix> apply_transfers(std::span<const Transfer> plan, Partition partition) {
  const std::size_t workers = partition.worker_count();
  CommMatrix comm(workers);
  for (const auto& t : plan) {
    if (t.from >= workers || t.to >= workers || t.from == t.to) throw Error("transfer names an invalid worker");
    if (t.rows == 0) continue;
    auto rows = take_tail(partition.shards[t.from], t.rows);
    merge_columns(partition.shards[t.to], std::move(rows));
    comm.add(t.from, t.to, t.rows);
  }
  return {std::move(partition), comm};
}

std::vector<Index> gather_categories(const Partition& partition) {
  std::vector<Index> all;
  for (const auto& shard : partition.shards) all.insert(all.end(), shard.categories.begin(), shard.categories.end());
  std::sort(all.begin(), all.end());
  auto dup = std::adjacent_find(all.begin(), all.end());
  if (dup != all.end()) throw Error("category " + std::to_string(*dup) + " held by two workers");
  return all;
}

namespace {

// Everything the workers share or write into their own slot.
struct WorkerContext {
  const NetworkModel& model;
  const InferenceConfig& config;
  InferenceConfig worker_config;
  Mode mode;
  Fabric& fabric;
  const std::vector<PreparedLayer>* prepared;  // null when streaming
  Partition& partition;
  std::vector<std::vector<LayerSummary>>& summaries;  // [worker][layer]
  BalanceReport& balance;                              // written by worker 0
  CommMatrix& comm;                                    // written by worker 0
  FeatureBatch& gathered;                              // written by worker 0
  std::vector<StreamStats>& stream_stats;
};

void worker_main(WorkerContext& ctx, std::size_t me) {
  const std::size_t workers = ctx.fabric.size();
  const std::size_t depth = ctx.model.depth();
  FeatureBatch shard = std::move(ctx.partition.shards[me]);
  auto& summaries = ctx.summaries[me];
  summaries.assign(depth, LayerSummary{});

  std::optional<WeightStreamer> streamer;
  WeightStreamer::Lease lease;
  if (!ctx.prepared) streamer.emplace(ctx.model, ctx.worker_config, ctx.mode);

  std::size_t global_active = 1;
  for (std::size_t l = 0; l < depth && global_active > 0; ++l) {
    auto& summary = summaries[l];
    summary.active_before = shard.active_count();
    const PreparedLayer* layer = nullptr;
    if (streamer) {
      lease = streamer->next();
      layer = &*lease;
    } else {
      layer = &(*ctx.prepared)[l];
    }
    if (shard.active_count() > 0) {
      auto outcome = evaluate_layer(shard, *layer, ctx.model.bias, ctx.worker_config);
      summary.active_after = outcome.active_after;
      summary.weight_element_reads = outcome.weight_element_reads;
      summary.feature_element_reads = outcome.feature_element_reads;
      shard = std::move(outcome.features);
    }

    // Exchange active counts with every other worker.
    for (std::size_t peer = 0; peer < workers; ++peer) {
      if (peer != me) ctx.fabric.send(me, peer, CountMessage{me, shard.active_count()});
    }
    std::vector<std::size_t> counts(workers, 0);
    counts[me] = shard.active_count();
    for (std::size_t k = 1; k < workers; ++k) {
      auto msg = ctx.fabric.receive<CountMessage>(me);
      counts[msg.from] = msg.count;
    }
    global_active = std::accumulate(counts.begin(), counts.end(), std::size_t{0});

    // Every worker derives the same plan from the same counts.
    LayerBalance entry;
    entry.before_counts = counts;
    entry.imbalance_before = imbalance_ratio(counts);
    entry.after_counts = counts;
    if (entry.imbalance_before > ctx.config.rebalance_threshold) {
      const auto plan = balance_step(counts);
      entry.rebalanced = true;
      for (const auto& t : plan) {
        entry.after_counts[t.from] -= t.rows;
        entry.after_counts[t.to] += t.rows;
        entry.moved_rows += t.rows;
        if (t.from == me) ctx.fabric.send(me, t.to, RowsMessage{me, take_tail(shard, t.rows)});
      }
      const auto expected = std::count_if(plan.begin(), plan.end(), [&](const Transfer& t) { return t.to == me; });
      for (std::ptrdiff_t k = 0; k < expected; ++k) {
        auto msg = ctx.fabric.receive<RowsMessage>(me);
        merge_columns(shard, std::move(msg.rows));
      }
      if (me == 0) {
        for (const auto& t : plan) ctx.comm.add(t.from, t.to, t.rows);
      }
    }
    entry.imbalance_after = imbalance_ratio(entry.after_counts);
    if (me == 0) ctx.balance.layers.push_back(std::move(entry));
    ctx.fabric.barrier();
  }
  lease.reset();
  if (streamer) ctx.stream_stats[me] = streamer->stats();

  // Gather at worker 0.
  if (me != 0) {
    ctx.fabric.send(me, 0, GatherMessage{me, std::move(shard)});
    return;
  }
  for (std::size_t k = 1; k < workers; ++k) {
    auto msg = ctx.fabric.receive<GatherMessage>(0);
    merge_columns(shard, std::move(msg.shard));
  }
  ctx.gathered = std::move(shard);
}

}  // namespace

ParallelResult run_batch_parallel(const NetworkModel& model, const FeatureBatch& inputs,
                                  const InferenceConfig& config, Mode mode, Fabric::LatencyHook latency) {
  config.validate();
  if (inputs.neurons != model.neurons) throw Error("dimension mismatch: inputs and model neuron counts differ");
  const std::size_t workers = config.workers;

  InferenceConfig worker_config = config;
  if (worker_config.threads == 0) {
#ifdef _OPENMP
    worker_config.threads = std::max(1, omp_get_max_threads() / static_cast<int>(workers));
#else
    worker_config.threads = 1;
#endif
  }

  std::vector<PreparedLayer> prepared;
  if (!config.streaming) {
    prepared.resize(model.depth());
    for (std::size_t l = 0; l < model.depth(); ++l) prepared[l] = prepare(model, l, mode, config);
  }

  ParallelResult out;
  out.comm = CommMatrix(workers);
  Fabric fabric(workers, std::move(latency));
  std::vector<std::vector<LayerSummary>> summaries(workers);
  std::vector<StreamStats> stream_stats(workers);
  FeatureBatch gathered;

  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  Partition partition = partition_even(inputs, workers);
  WorkerContext ctx{model,     config,    worker_config, mode,     fabric,   config.streaming ? nullptr : &prepared,
                    partition, summaries, out.balance,   out.comm, gathered, stream_stats};

  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        try {
          worker_main(ctx, w);
        } catch (...) {
          errors[w] = std::current_exception();
          fabric.abort();
        }
      });
    }
  }
  // Prefer the root cause over the FabricAborted it triggered elsewhere.
  for (int pass = 0; pass < 2; ++pass) {
    for (auto& error : errors) {
      if (!error) continue;
      try {
        std::rethrow_exception(error);
      } catch (const FabricAborted&) {
        if (pass == 1) throw;
      } catch (...) {
        throw;
      }
    }
  }

  auto& result = out.result;
  result.elapsed_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  result.edges_processed = static_cast<std::uint64_t>(inputs.total_inputs) * count_edges(model);
  result.per_layer.assign(model.depth(), LayerSummary{});
  for (const auto& worker : summaries) {
    for (std::size_t l = 0; l < model.depth(); ++l) {
      result.per_layer[l].active_before += worker[l].active_before;
      result.per_layer[l].active_after += worker[l].active_after;
      result.per_layer[l].weight_element_reads += worker[l].weight_element_reads;
      result.per_layer[l].feature_element_reads += worker[l].feature_element_reads;
    }
  }
  for (const auto& s : stream_stats) {
    result.stream.prefetches += s.prefetches;
    result.stream.swaps += s.swaps;
    result.stream.peak_resident = std::max(result.stream.peak_resident, s.peak_resident);
  }
  if (!config.streaming) {
    result.stream.prefetches = model.depth();
    result.stream.peak_resident = model.depth();
  }
  gathered.neurons = model.neurons;
  gathered.total_inputs = inputs.total_inputs;
  result.categories = gathered.categories;
  result.final = std::move(gathered);
  out.messages = fabric.messages_sent();
  return out;
}

}  // namespace spdnn
