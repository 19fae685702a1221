#pragma once

// The control plane: submit -> validate -> schedule -> instantiate ->
// monitor -> archive, with metering and an audit trail. State transitions
// are serialized; monitoring reads immutable snapshots.

#include <atomic>
#include <condition_variable>
#include <functional>
#include <memory>
#include <thread>

#include "qnet/control/archive.hpp"
#include "qnet/control/devices.hpp"
#include "qnet/control/engine.hpp"
#include "qnet/control/records.hpp"
#include "qnet/control/scheduler.hpp"
#include "qnet/control/signal_bus.hpp"

namespace qnet::control {

enum class InstanceState { Pending, Active, Completed, Failed };
const char* to_string(InstanceState s);

inline constexpr std::int64_t kRetentionSeconds = 30 * 86400;

struct ServiceOptions {
  std::string archive_dir = "archives";
  std::int64_t retention_s = kRetentionSeconds;
  FeeMode default_fee_mode = FeeMode::PerUse;
  std::map<std::string, FeeMode> fee_modes;
  RunSettings run;
  /// Seconds; defaults to the system clock.
  std::function<std::int64_t()> clock;
  /// Run instantiations on worker threads instead of inside instantiate().
  bool background = false;
  /// Background runs wait for begin() so subscribers can attach first.
  bool hold_runs = false;
};

struct RequestRecord {
  NetworkConfigRequest request;
  nlohmann::json design;
  CompiledConfig config;
  Findings findings;
  std::optional<ScheduleWindow> window;
  std::string instantiation_id;
};

struct ApcStatus {
  std::string endpoint;
  double signal = 0.0;
  bool converged = false;
  std::string skipped;
};

struct Snapshot {
  std::string id;
  std::string request_id;
  std::string subscriber_id;
  InstanceState state = InstanceState::Pending;
  std::int64_t started_s = 0;
  std::int64_t stopped_s = 0;
  std::size_t intervals = 0;
  std::optional<timing::CountRecord> latest;
  std::map<std::string, std::string> device_health;
  std::vector<ApcStatus> apc;
  std::string failure;
};

nlohmann::json to_json(const Snapshot& s, const timing::CountingPlan& plan);
nlohmann::json to_json(const timing::CountRecord& r, const timing::CountingPlan& plan);

struct ArchiveRecord {
  std::string instantiation_id;
  std::string request_id;
  std::string subscriber_id;
  std::string path;
  std::string sha256;
  std::int64_t created_s = 0;
  std::int64_t retention_deadline_s = 0;
  std::size_t events = 0;
  std::size_t intervals = 0;
};

nlohmann::json to_json(const ArchiveRecord& r);

class ControlPlane {
 public:
  ControlPlane(topology::NetworkTopology t, ServiceOptions options);
  ~ControlPlane();
  ControlPlane(const ControlPlane&) = delete;
  ControlPlane& operator=(const ControlPlane&) = delete;

  /// Parse, compile and validate. Throws E_SCHEMA, E_RESOURCE, E_UNROUTABLE
  /// or E_CONFLICT for a reused request id; findings are kept, not thrown.
  RequestRecord submit(const nlohmann::json& design);
  RequestRecord request(const std::string& request_id) const;

  /// Throws E_PRECONDITION when the request has findings, E_CONFLICT when
  /// the calendar refuses it.
  ScheduleWindow schedule(const std::string& request_id);

  /// Re-validate, push settings and start the run. Returns the handle id; a
  /// rejected device setting leaves the handle Failed and devices restored.
  std::string instantiate(const std::string& request_id);

  Snapshot monitor(const std::string& id) const;
  /// Records from index `from`, waiting up to `timeout` for a new one.
  std::vector<timing::CountRecord> counts_since(const std::string& id, std::size_t from,
                                                std::chrono::milliseconds timeout) const;
  timing::CountingPlan plan(const std::string& id) const;
  void wait(const std::string& id) const;
  void stop(const std::string& id);
  /// Start a held background run.
  void begin(const std::string& id);
  /// Finished result; E_NOT_FINISHED while running.
  RunResult result(const std::string& id) const;

  /// Idempotent. Throws E_NOT_FINISHED unless Completed or Failed.
  ArchiveRecord archive(const std::string& id);
  /// Archive bytes for their owner. Throws E_SCOPE, E_EXPIRED or E_CORRUPT.
  std::string fetch_archive(const std::string& id, const std::string& subscriber_id) const;

  std::shared_ptr<SignalQueue> subscribe_signal(const std::string& subscriber_id, const std::string& id,
                                                timing::ChannelKey key);

  std::vector<UsageEntry> ledger(const std::string& subscriber_id) const;
  const UsageLedger& usage() const { return ledger_; }
  std::vector<AuditEntry> audit() const { return audit_.entries(); }
  std::vector<std::string> instantiations() const;
  const Calendar& calendar() const { return calendar_; }
  DeviceRegistry& devices() { return devices_; }
  const topology::NetworkTopology& topology() const { return topology_; }
  std::int64_t now() const;

  /// Stop running instantiations and archive everything finished.
  void shutdown();

 private:
  struct Instance;
  std::shared_ptr<Instance> find(const std::string& id) const;
  void run(const std::shared_ptr<Instance>& inst);
  void publish(Instance& inst);

  topology::NetworkTopology topology_;
  ServiceOptions options_;
  Calendar calendar_;
  DeviceRegistry devices_;
  AuditLog audit_;
  UsageLedger ledger_;
  SignalBus signals_;

  mutable std::mutex transitions_;
  std::map<std::string, RequestRecord> requests_;
  std::map<std::string, std::shared_ptr<Instance>> instances_;
  std::uint64_t next_instance_ = 1;
};

}  // namespace qnet::control
