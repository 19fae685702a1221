#pragma once

// Live detection events fanned out to subscribers of one channel.

#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>

#include "qnet/timing.hpp"

namespace qnet::control {

class SignalQueue {
 public:
  void push(const optics::DetectionEvent& e);
  void close();
  /// Next event, or nullopt once closed and drained or after the timeout.
  std::optional<optics::DetectionEvent> next(std::chrono::milliseconds timeout);
  /// Everything queued so far.
  std::vector<optics::DetectionEvent> drain();
  bool closed() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<optics::DetectionEvent> queue_;
  bool closed_ = false;
};

class SignalBus {
 public:
  std::shared_ptr<SignalQueue> subscribe(const std::string& instantiation_id, timing::ChannelKey key);
  /// Events must arrive in time order; each goes to every queue on its
  /// channel exactly once.
  void publish(const std::string& instantiation_id, const optics::EventStream& events);
  void close(const std::string& instantiation_id);

 private:
  struct Topic {
    std::map<timing::ChannelKey, std::vector<std::weak_ptr<SignalQueue>>> queues;
    bool closed = false;
  };
  std::mutex mu_;
  std::map<std::string, Topic> topics_;
};

}  // namespace qnet::control
