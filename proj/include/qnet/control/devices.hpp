#pragma once

// Device models behind the push-settings contract: global switch state and
// source enables shared by every running instantiation.

#include <map>
#include <mutex>
#include <set>

#include "qnet/control/design.hpp"

namespace qnet::control {

class DeviceRegistry {
 public:
  explicit DeviceRegistry(const topology::NetworkTopology& t);

  /// Apply every setting in order. Any rejected setting throws E_DEVICE
  /// after restoring the state held before the call.
  void push(const CompiledConfig& c);
  /// Remove the config's mappings and source enables. Idempotent.
  void release(const CompiledConfig& c);

  topology::SwitchStates switch_states() const;
  std::set<std::pair<HubId, int>> enabled_sources() const;

  /// Make a switch row refuse new mappings, as a failed device would.
  void inject_fault(const topology::SwitchId& id, int row);
  void clear_faults();

 private:
  void apply(const topology::SwitchId& id, int row, int col);

  mutable std::mutex mu_;
  topology::SwitchStates states_;
  std::set<std::pair<HubId, int>> sources_;
  std::map<topology::SwitchId, std::set<int>> faults_;
  std::size_t hub_count_ = 0;
  std::vector<int> source_slots_;
};

}  // namespace qnet::control
