#include "qnet/control/devices.hpp"

namespace qnet::control {

namespace {

[[noreturn]] void reject(const std::string& what) { throw Error(ErrorCode::Device, what); }

}  // namespace

DeviceRegistry::DeviceRegistry(const topology::NetworkTopology& t) : states_(t), hub_count_(t.hub_count()) {
  for (const auto& h : t.hubs) source_slots_.push_back(h.sources);
}

void DeviceRegistry::apply(const topology::SwitchId& id, int row, int col) {
  const std::string name = topology::to_string(id);
  if (!states_.contains(id)) reject(name + ": no such switch");
  auto& sw = states_.at(id);
  if (row < 0 || row >= sw.rows || col < 0 || col >= sw.cols)
    reject(name + ": port (" + std::to_string(row) + "," + std::to_string(col) + ") rejected");
  if (auto f = faults_.find(id); f != faults_.end() && f->second.count(row))
    reject(name + ": row " + std::to_string(row) + " not responding");
  const int held = sw.row_to_col[static_cast<std::size_t>(row)];
  if (held == col) return;
  if (held >= 0 || sw.row_of(col))
    reject(name + ": (" + std::to_string(row) + "," + std::to_string(col) + ") is in use");
  sw.row_to_col[static_cast<std::size_t>(row)] = col;
}

void DeviceRegistry::push(const CompiledConfig& c) {
  std::lock_guard lock(mu_);
  const auto states_before = states_;
  const auto sources_before = sources_;
  try {
    for (const auto& s : c.sources) {
      if (s.hub >= hub_count_ || s.slot < 0 || s.slot >= source_slots_[s.hub])
        reject("H" + std::to_string(s.hub) + ".source" + std::to_string(s.slot) + ": no such source");
      if (!s.enabled) continue;
      if (!sources_.insert({s.hub, s.slot}).second)
        reject("H" + std::to_string(s.hub) + ".source" + std::to_string(s.slot) + " already enabled");
    }
    for (const auto& [id, maps] : c.switches)
      for (const auto& [r, col] : maps) apply(id, r, col);
  } catch (...) {
    states_ = states_before;
    sources_ = sources_before;
    throw;
  }
}

void DeviceRegistry::release(const CompiledConfig& c) {
  std::lock_guard lock(mu_);
  for (const auto& s : c.sources) sources_.erase({s.hub, s.slot});
  for (const auto& [id, maps] : c.switches) {
    if (!states_.contains(id)) continue;
    auto& sw = states_.at(id);
    for (const auto& [r, col] : maps)
      if (r >= 0 && r < sw.rows && sw.row_to_col[static_cast<std::size_t>(r)] == col)
        sw.row_to_col[static_cast<std::size_t>(r)] = -1;
  }
}

topology::SwitchStates DeviceRegistry::switch_states() const {
  std::lock_guard lock(mu_);
  return states_;
}

std::set<std::pair<HubId, int>> DeviceRegistry::enabled_sources() const {
  std::lock_guard lock(mu_);
  return sources_;
}

void DeviceRegistry::inject_fault(const topology::SwitchId& id, int row) {
  std::lock_guard lock(mu_);
  faults_[id].insert(row);
}

void DeviceRegistry::clear_faults() {
  std::lock_guard lock(mu_);
  faults_.clear();
}

}  // namespace qnet::control
