#pragma once

#include <condition_variable>
#include <deque>
#include <exception>
#include <memory>
#include <mutex>
#include <thread>

#include "spdnn/engine.hpp"

namespace spdnn {

/// Prepares layer weights on a background thread, one layer ahead of the
/// consumer, with at most `depth` layers resident at any time.
///
/// A layer counts as resident from the moment its preparation starts until
/// the consumer drops its Lease. With the default depth of 2 the producer
/// builds layer l+1 while layer l is in use, and waits for l to be released
/// before starting l+2. Leases must not outlive the streamer.
class WeightStreamer {
 public:
  class Lease {
   public:
    Lease() = default;
    Lease(Lease&& other) noexcept;
    Lease& operator=(Lease&& other) noexcept;
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;
    ~Lease() { reset(); }

    const PreparedLayer& operator*() const { return *layer_; }
    const PreparedLayer* operator->() const { return layer_.get(); }
    explicit operator bool() const { return layer_ != nullptr; }
    void reset();

   private:
    friend class WeightStreamer;
    Lease(WeightStreamer* owner, std::unique_ptr<PreparedLayer> layer);

    WeightStreamer* owner_ = nullptr;
    std::unique_ptr<PreparedLayer> layer_;
  };

  WeightStreamer(const NetworkModel& model, const InferenceConfig& config, Mode mode, std::size_t depth = 2);
  ~WeightStreamer();

  WeightStreamer(const WeightStreamer&) = delete;
  WeightStreamer& operator=(const WeightStreamer&) = delete;

  /// Blocks until the next layer is fully materialized. Rethrows any error
  /// raised while preparing it.
  Lease next();

  StreamStats stats() const;

 private:
  void produce(std::stop_token stop);
  void release();

  const NetworkModel& model_;
  InferenceConfig config_;
  Mode mode_;
  std::size_t depth_;

  mutable std::mutex mutex_;
  std::condition_variable_any changed_;
  std::deque<std::unique_ptr<PreparedLayer>> ready_;
  std::exception_ptr error_;
  std::size_t resident_ = 0;
  std::size_t handed_out_ = 0;
  StreamStats stats_;
  std::jthread producer_;
};

}  // namespace spdnn
