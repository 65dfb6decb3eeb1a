#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <variant>
#include <vector>

#include "spdnn/model.hpp"

namespace spdnn {

/// Active feature count of one worker after a layer.
struct CountMessage {
  std::size_t from = 0;
  std::size_t count = 0;
};

/// Feature columns handed to another worker, with their categories.
struct RowsMessage {
  std::size_t from = 0;
  FeatureBatch rows;
};

/// A worker's final shard, sent to worker 0.
struct GatherMessage {
  std::size_t from = 0;
  FeatureBatch shard;
};

using Message = std::variant<CountMessage, RowsMessage, GatherMessage>;

/// Thrown out of blocking calls once the fabric is aborted.
class FabricAborted : public Error {
 public:
  FabricAborted() : Error("worker fabric aborted") {}
};

/// In-process stand-in for the interconnect between simulated workers: one
/// FIFO mailbox per worker plus a reusable barrier.
class Fabric {
 public:
  using LatencyHook = std::function<void(std::size_t from, std::size_t to, const Message&)>;

  explicit Fabric(std::size_t workers, LatencyHook hook = {});

  std::size_t size() const noexcept { return boxes_.size(); }

  void send(std::size_t from, std::size_t to, Message message);

  /// Removes and returns the oldest message of type T addressed to `me`,
  /// blocking until one arrives.
  template <typename T>
  T receive(std::size_t me);

  void barrier();

  /// Wakes every blocked worker with FabricAborted.
  void abort();

  std::uint64_t messages_sent() const;

 private:
  struct Mailbox {
    std::deque<Message> queue;
  };

  mutable std::mutex mutex_;
  std::condition_variable changed_;
  std::vector<Mailbox> boxes_;
  LatencyHook hook_;
  bool aborted_ = false;
  std::size_t arrived_ = 0;
  std::uint64_t generation_ = 0;
  std::uint64_t sent_ = 0;
};

template <typename T>
T Fabric::receive(std::size_t me) {
  std::unique_lock lock(mutex_);
  auto& queue = boxes_.at(me).queue;
  for (;;) {
    if (aborted_) throw FabricAborted();
    for (auto it = queue.begin(); it != queue.end(); ++it) {
      if (auto* hit = std::get_if<T>(&*it)) {
        T out = std::move(*hit);
        queue.erase(it);
        return out;
      }
    }
    changed_.wait(lock);
  }
}

}  // namespace spdnn
