#include "qnet/control/records.hpp"

namespace qnet::control {

void AuditLog::append(std::int64_t time_s, std::string request_id, std::string instantiation_id, std::string event,
                      std::string detail) {
  std::lock_guard lock(mu_);
  entries_.push_back({entries_.size() + 1, time_s, std::move(request_id), std::move(instantiation_id), std::move(event),
                      std::move(detail)});
}

std::vector<AuditEntry> AuditLog::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

nlohmann::json to_json(const AuditEntry& e) {
  return {{"seq", e.seq},
          {"time_s", e.time_s},
          {"request_id", e.request_id},
          {"instantiation_id", e.instantiation_id},
          {"event", e.event},
          {"detail", e.detail}};
}

const char* to_string(FeeMode mode) { return mode == FeeMode::Flat ? "flat" : "per_use"; }

double fee_weight(FeeMode mode, std::size_t device_count) {
  return mode == FeeMode::Flat ? 1.0 : static_cast<double>(device_count);
}

UsageEntry UsageLedger::append(UsageEntry entry) {
  std::lock_guard lock(mu_);
  entry.seq = entries_.size() + 1;
  entry.weight = fee_weight(entry.mode, entry.devices);
  entry.fee_units = entry.duration_h * entry.weight;
  entries_.push_back(entry);
  return entry;
}

std::vector<UsageEntry> UsageLedger::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::vector<UsageEntry> UsageLedger::entries_for(const std::string& subscriber_id) const {
  std::lock_guard lock(mu_);
  std::vector<UsageEntry> out;
  for (const auto& e : entries_)
    if (e.subscriber_id == subscriber_id) out.push_back(e);
  return out;
}

double UsageLedger::total_units(const std::string& subscriber_id) const {
  double sum = 0.0;
  for (const auto& e : entries_for(subscriber_id)) sum += e.fee_units;
  return sum;
}

nlohmann::json to_json(const UsageEntry& e) {
  return {{"seq", e.seq},
          {"subscriber_id", e.subscriber_id},
          {"instantiation_id", e.instantiation_id},
          {"request_id", e.request_id},
          {"duration_h", e.duration_h},
          {"devices", e.devices},
          {"mode", to_string(e.mode)},
          {"weight", e.weight},
          {"fee_units", e.fee_units}};
}

}  // namespace qnet::control
