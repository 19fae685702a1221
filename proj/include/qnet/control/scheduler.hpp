#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qnet/control/design.hpp"

namespace qnet::control {

struct ScheduleWindow {
  std::uint64_t id = 0;
  std::string request_id;
  std::string subscriber_id;
  /// Half-open [start_s, end_s).
  std::int64_t start_s = 0;
  std::int64_t end_s = 0;
  int priority = 0;
  std::set<std::string> resources;
};

struct Blocking {
  std::uint64_t window_id = 0;
  std::string request_id;
  std::vector<std::string> shared;
};

struct ScheduleOutcome {
  std::optional<ScheduleWindow> window;
  std::vector<Blocking> conflicts;

  bool accepted() const { return window.has_value(); }
};

bool windows_overlap(std::int64_t a_start, std::int64_t a_end, std::int64_t b_start, std::int64_t b_end);

/// Accepted windows. Check-and-insert is atomic.
class Calendar {
 public:
  /// Accept iff no accepted window overlapping in time shares a resource.
  /// A request that already holds a window gets that window back.
  ScheduleOutcome schedule(const CompiledConfig& c, int priority = 0);
  /// Same, throwing E_CONFLICT with the blocking windows in the message.
  ScheduleWindow schedule_or_throw(const CompiledConfig& c, int priority = 0);

  std::vector<Blocking> conflicts(std::int64_t start_s, std::int64_t end_s, const std::set<std::string>& resources,
                                  const std::string& ignore_request = {}) const;
  std::vector<ScheduleWindow> accepted() const;
  std::optional<ScheduleWindow> window_for(const std::string& request_id) const;
  bool release(const std::string& request_id);

 private:
  std::vector<Blocking> conflicts_locked(std::int64_t start_s, std::int64_t end_s, const std::set<std::string>& resources,
                                         const std::string& ignore_request) const;

  mutable std::mutex mu_;
  std::vector<ScheduleWindow> windows_;
  std::uint64_t next_id_ = 1;
};

struct PendingRequest {
  CompiledConfig config;
  int priority = 0;
};

/// Higher priority first, submission order within a priority. Outcomes come
/// back in submission order.
std::vector<ScheduleOutcome> schedule_batch(Calendar& cal, const std::vector<PendingRequest>& requests);

}  // namespace qnet::control
