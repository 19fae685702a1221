#include "qnet/control/signal_bus.hpp"

namespace qnet::control {

void SignalQueue::push(const optics::DetectionEvent& e) {
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    queue_.push_back(e);
  }
  cv_.notify_all();
}

void SignalQueue::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

std::optional<optics::DetectionEvent> SignalQueue::next(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
  if (queue_.empty()) return std::nullopt;
  auto e = queue_.front();
  queue_.pop_front();
  return e;
}

std::vector<optics::DetectionEvent> SignalQueue::drain() {
  std::lock_guard lock(mu_);
  std::vector<optics::DetectionEvent> out(queue_.begin(), queue_.end());
  queue_.clear();
  return out;
}

bool SignalQueue::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::shared_ptr<SignalQueue> SignalBus::subscribe(const std::string& instantiation_id, timing::ChannelKey key) {
  auto q = std::make_shared<SignalQueue>();
  std::lock_guard lock(mu_);
  auto& topic = topics_[instantiation_id];
  if (topic.closed) q->close();
  else topic.queues[key].push_back(q);
  return q;
}

void SignalBus::publish(const std::string& instantiation_id, const optics::EventStream& events) {
  std::lock_guard lock(mu_);
  auto it = topics_.find(instantiation_id);
  if (it == topics_.end()) return;
  auto& queues = it->second.queues;
  for (const auto& e : events) {
    auto q = queues.find({e.node, e.channel});
    if (q == queues.end()) continue;
    for (const auto& weak : q->second)
      if (auto sub = weak.lock()) sub->push(e);
  }
}

void SignalBus::close(const std::string& instantiation_id) {
  std::lock_guard lock(mu_);
  auto& topic = topics_[instantiation_id];
  topic.closed = true;
  for (auto& [key, subs] : topic.queues)
    for (const auto& weak : subs)
      if (auto sub = weak.lock()) sub->close();
  topic.queues.clear();
}

}  // namespace qnet::control
