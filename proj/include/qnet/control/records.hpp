#pragma once

// Append-only audit log and usage ledger.

#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

namespace qnet::control {

struct AuditEntry {
  std::uint64_t seq = 0;
  std::int64_t time_s = 0;
  std::string request_id;
  std::string instantiation_id;
  std::string event;
  std::string detail;
};

class AuditLog {
 public:
  void append(std::int64_t time_s, std::string request_id, std::string instantiation_id, std::string event,
              std::string detail = {});
  std::vector<AuditEntry> entries() const;

 private:
  mutable std::mutex mu_;
  std::vector<AuditEntry> entries_;
};

nlohmann::json to_json(const AuditEntry& e);

enum class FeeMode { PerUse, Flat };
const char* to_string(FeeMode mode);

/// Per-use: one unit per device-hour. Flat: one unit per window-hour.
double fee_weight(FeeMode mode, std::size_t device_count);

struct UsageEntry {
  std::uint64_t seq = 0;
  std::string subscriber_id;
  std::string instantiation_id;
  std::string request_id;
  double duration_h = 0.0;
  std::size_t devices = 0;
  FeeMode mode = FeeMode::PerUse;
  double weight = 0.0;
  double fee_units = 0.0;
};

class UsageLedger {
 public:
  /// Fills seq, weight and fee units.
  UsageEntry append(UsageEntry entry);
  std::vector<UsageEntry> entries() const;
  std::vector<UsageEntry> entries_for(const std::string& subscriber_id) const;
  double total_units(const std::string& subscriber_id) const;

 private:
  mutable std::mutex mu_;
  std::vector<UsageEntry> entries_;
};

nlohmann::json to_json(const UsageEntry& e);

}  // namespace qnet::control
