#include "qnet/control/scheduler.hpp"

#include <algorithm>
#include <numeric>

namespace qnet::control {

bool windows_overlap(std::int64_t a_start, std::int64_t a_end, std::int64_t b_start, std::int64_t b_end) {
  return a_start < b_end && b_start < a_end;
}

std::vector<Blocking> Calendar::conflicts_locked(std::int64_t start_s, std::int64_t end_s,
                                                 const std::set<std::string>& resources,
                                                 const std::string& ignore_request) const {
  std::vector<Blocking> out;
  for (const auto& w : windows_) {
    if (w.request_id == ignore_request || !windows_overlap(start_s, end_s, w.start_s, w.end_s)) continue;
    Blocking b{w.id, w.request_id, {}};
    std::set_intersection(resources.begin(), resources.end(), w.resources.begin(), w.resources.end(),
                          std::back_inserter(b.shared));
    if (!b.shared.empty()) out.push_back(std::move(b));
  }
  return out;
}

std::vector<Blocking> Calendar::conflicts(std::int64_t start_s, std::int64_t end_s, const std::set<std::string>& resources,
                                          const std::string& ignore_request) const {
  std::lock_guard lock(mu_);
  return conflicts_locked(start_s, end_s, resources, ignore_request);
}

ScheduleOutcome Calendar::schedule(const CompiledConfig& c, int priority) {
  if (c.window_end_s <= c.window_start_s) throw Error(ErrorCode::Precondition, "window end must be after start");
  const auto resources = c.resources();
  std::lock_guard lock(mu_);
  ScheduleOutcome out;
  for (const auto& w : windows_)
    if (w.request_id == c.request_id) {
      out.window = w;
      return out;
    }
  out.conflicts = conflicts_locked(c.window_start_s, c.window_end_s, resources, c.request_id);
  if (!out.conflicts.empty()) return out;
  ScheduleWindow w{next_id_++, c.request_id, c.subscriber_id, c.window_start_s, c.window_end_s, priority, resources};
  windows_.push_back(w);
  out.window = std::move(w);
  return out;
}

ScheduleWindow Calendar::schedule_or_throw(const CompiledConfig& c, int priority) {
  auto out = schedule(c, priority);
  if (out.accepted()) return *out.window;
  std::string msg = "request " + c.request_id + " conflicts with";
  for (const auto& b : out.conflicts) msg += " " + b.request_id + " (" + b.shared.front() + ")";
  throw Error(ErrorCode::Conflict, msg);
}

std::vector<ScheduleWindow> Calendar::accepted() const {
  std::lock_guard lock(mu_);
  return windows_;
}

std::optional<ScheduleWindow> Calendar::window_for(const std::string& request_id) const {
  std::lock_guard lock(mu_);
  for (const auto& w : windows_)
    if (w.request_id == request_id) return w;
  return std::nullopt;
}

bool Calendar::release(const std::string& request_id) {
  std::lock_guard lock(mu_);
  const auto n = windows_.size();
  std::erase_if(windows_, [&](const ScheduleWindow& w) { return w.request_id == request_id; });
  return windows_.size() != n;
}

std::vector<ScheduleOutcome> schedule_batch(Calendar& cal, const std::vector<PendingRequest>& requests) {
  std::vector<std::size_t> order(requests.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return requests[a].priority > requests[b].priority; });
  std::vector<ScheduleOutcome> out(requests.size());
  for (auto i : order) out[i] = cal.schedule(requests[i].config, requests[i].priority);
  return out;
}

}  // namespace qnet::control
