#include "spdnn/fabric.hpp"

namespace spdnn {

Fabric::Fabric(std::size_t workers, LatencyHook hook) : boxes_(workers), hook_(std::move(hook)) {
  if (workers == 0) throw Error("fabric needs at least one worker");
}

void Fabric::send(std::size_t from, std::size_t to, Message message) {
  if (hook_) hook_(from, to, message);
  {
    std::lock_guard lock(mutex_);
    if (aborted_) throw FabricAborted();
    boxes_.at(to).queue.push_back(std::move(message));
    ++sent_;
  }
  changed_.notify_all();
}

void Fabric::barrier() {
  std::unique_lock lock(mutex_);
  if (aborted_) throw FabricAborted();
  const auto generation = generation_;
  if (++arrived_ == boxes_.size()) {
    arrived_ = 0;
    ++generation_;
    changed_.notify_all();
    return;
  }
  changed_.wait(lock, [&] { return aborted_ || generation_ != generation; });
  if (generation_ == generation) throw FabricAborted();
}

void Fabric::abort() {
  {
    std::lock_guard lock(mutex_);
    aborted_ = true;
  }
  changed_.notify_all();
}

std::uint64_t Fabric::messages_sent() const {
  std::lock_guard lock(mutex_);
  return sent_;
}

}  // namespace spdnn
