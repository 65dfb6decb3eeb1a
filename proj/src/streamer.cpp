#include "spdnn/streamer.hpp"

#include <algorithm>

namespace spdnn {

WeightStreamer::Lease::Lease(WeightStreamer* owner, std::unique_ptr<PreparedLayer> layer)
    : owner_(owner), layer_(std::move(layer)) {}

WeightStreamer::Lease::Lease(Lease&& other) noexcept
    : owner_(std::exchange(other.owner_, nullptr)), layer_(std::move(other.layer_)) {}

WeightStreamer::Lease& WeightStreamer::Lease::operator=(Lease&& other) noexcept {
  if (this != &other) {
    reset();
    owner_ = std::exchange(other.owner_, nullptr);
    layer_ = std::move(other.layer_);
  }
  return *this;
}

void WeightStreamer::Lease::reset() {
  if (layer_) {
    layer_.reset();
    owner_->release();
  }
  owner_ = nullptr;
}

WeightStreamer::WeightStreamer(const NetworkModel& model, const InferenceConfig& config, Mode mode,
                               std::size_t depth)
    : model_(model), config_(config), mode_(mode), depth_(std::max<std::size_t>(depth, 1)) {
  producer_ = std::jthread([this](std::stop_token stop) { produce(stop); });
}

WeightStreamer::~WeightStreamer() {
  producer_.request_stop();
  changed_.notify_all();
}

void WeightStreamer::produce(std::stop_token stop) {
  for (std::size_t l = 0; l < model_.depth(); ++l) {
    {
      std::unique_lock lock(mutex_);
      if (!changed_.wait(lock, stop, [&] { return resident_ < depth_; })) return;
      ++resident_;
      stats_.peak_resident = std::max(stats_.peak_resident, resident_);
    }
    try {
      auto layer = std::make_unique<PreparedLayer>(prepare(model_, l, mode_, config_));
      std::lock_guard lock(mutex_);
      ready_.push_back(std::move(layer));
      ++stats_.prefetches;
    } catch (...) {
      std::lock_guard lock(mutex_);
      error_ = std::current_exception();
      changed_.notify_all();
      return;
    }
    changed_.notify_all();
  }
}

WeightStreamer::Lease WeightStreamer::next() {
  std::unique_lock lock(mutex_);
  if (handed_out_ == model_.depth()) throw Error("weight streamer exhausted");
  changed_.wait(lock, [&] { return !ready_.empty() || error_; });
  if (ready_.empty()) std::rethrow_exception(error_);
  auto layer = std::move(ready_.front());
  ready_.pop_front();
  if (handed_out_ > 0) ++stats_.swaps;
  ++handed_out_;
  return Lease(this, std::move(layer));
}

void WeightStreamer::release() {
  {
    std::lock_guard lock(mutex_);
    --resident_;
  }
  changed_.notify_all();
}

StreamStats WeightStreamer::stats() const {
  std::lock_guard lock(mutex_);
  return stats_;
}

}  // namespace spdnn
