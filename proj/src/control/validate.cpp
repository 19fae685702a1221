#include "qnet/control/validate.hpp"

#include <map>
#include <set>

#include "qnet/control/compiler.hpp"
#include "qnet/control/scheduler.hpp"

namespace qnet::control {

using topology::SwitchId;

namespace {

std::string hub_name(HubId h) { return "H" + std::to_string(h); }

}  // namespace

Findings validate_config(const CompiledConfig& c, const topology::NetworkTopology& t, const Calendar* calendar) {
  Findings out;
  const topology::SwitchStates fresh(t);
  bool switches_ok = true;
  for (const auto& [id, maps] : c.switches) {
    const std::string name = topology::to_string(id);
    if (!fresh.contains(id)) {
      out.push_back({ErrorCode::UnknownDevice, name, "no such switch"});
      switches_ok = false;
      continue;
    }
    const auto& sw = fresh.at(id);
    std::set<int> rows, cols;
    for (const auto& [r, col] : maps) {
      if (r < 0 || r >= sw.rows || col < 0 || col >= sw.cols) {
        out.push_back({ErrorCode::PortRange, name,
                       "port (" + std::to_string(r) + ", " + std::to_string(col) + ") outside " +
                           std::to_string(sw.rows) + "x" + std::to_string(sw.cols)});
        switches_ok = false;
        continue;
      }
      if (!rows.insert(r).second) {
        out.push_back({ErrorCode::Fanout, name, "row " + std::to_string(r) + " mapped twice"});
        switches_ok = false;
      }
      if (!cols.insert(col).second) {
        out.push_back({ErrorCode::Fanout, name, "column " + std::to_string(col) + " mapped twice"});
        switches_ok = false;
      }
    }
  }

  std::map<HubId, std::set<int>> slots;
  for (const auto& s : c.sources) {
    if (s.hub >= t.hub_count()) {
      out.push_back({ErrorCode::UnknownDevice, hub_name(s.hub), "no such hub"});
      continue;
    }
    if (s.slot < 0 || s.slot >= t.hubs[s.hub].sources)
      out.push_back({ErrorCode::PortRange, hub_name(s.hub) + ".source" + std::to_string(s.slot), "source slot out of range"});
    else if (!slots[s.hub].insert(s.slot).second)
      out.push_back({ErrorCode::Capacity, hub_name(s.hub) + ".source" + std::to_string(s.slot), "source slot used twice"});
  }

  std::map<HubId, std::set<int>> detectors;
  std::map<HubId, int> detector_count;
  for (const auto& e : c.endpoints) {
    if (e.hub >= t.hub_count() || (e.node && *e.node >= t.node_count())) {
      out.push_back({ErrorCode::UnknownDevice, e.id, "endpoint names an unknown hub or node"});
      continue;
    }
    if (e.node && t.node(*e.node).hub != e.hub)
      out.push_back({ErrorCode::Path, e.id, "detectors must be on the node's own hub"});
    if (static_cast<int>(e.detector_channels.size()) != optics::receiver_channel_count(e.receiver))
      out.push_back({ErrorCode::Capacity, e.id, "receiver needs " + std::to_string(optics::receiver_channel_count(e.receiver)) + " detector channels"});
    for (std::size_t k = 0; k + 1 < e.detector_channels.size(); ++k)
      if (e.detector_channels[k + 1] != e.detector_channels[k] + 1)
        out.push_back({ErrorCode::Capacity, e.id, "receiver channels must be contiguous"});
    for (int ch : e.detector_channels) {
      ++detector_count[e.hub];
      if (ch < 0 || ch >= topology::kDetectorChannels)
        out.push_back({ErrorCode::PortRange, e.id, "detector channel " + std::to_string(ch) + " out of range"});
      else if (!detectors[e.hub].insert(ch).second)
        out.push_back({ErrorCode::Capacity, e.id, "detector channel " + std::to_string(ch) + " claimed twice"});
    }
  }
  for (const auto& [hub, n] : detector_count)
    if (hub < t.hub_count() && n > t.hubs[hub].detector_channels)
      out.push_back({ErrorCode::Capacity, hub_name(hub),
                     std::to_string(n) + " detector channels claimed, " + std::to_string(t.hubs[hub].detector_channels) + " available"});

  std::map<HubId, std::set<int>> apc;
  std::map<HubId, int> apc_count;
  for (const auto& a : c.apc) {
    ++apc_count[a.hub];
    if (a.channel < 0 || a.channel >= topology::kApcChannels)
      out.push_back({ErrorCode::PortRange, hub_name(a.hub) + ".apc", "APC channel " + std::to_string(a.channel) + " out of range"});
    else
      apc[a.hub].insert(a.channel);
  }
  for (const auto& [hub, n] : apc_count)
    if (hub < t.hub_count() && (n > t.hubs[hub].apc_channels || apc[hub].size() != static_cast<std::size_t>(n)))
      out.push_back({ErrorCode::Capacity, hub_name(hub) + ".apc",
                     std::to_string(n) + " APC channels claimed, " + std::to_string(t.hubs[hub].apc_channels) + " available"});

  if (switches_ok) {
    const auto states = config_switch_states(t, c);
    for (const auto& r : c.routes) {
      try {
        const auto path = route_path(t, states, c, r);
        if (!path.contiguous()) out.push_back({ErrorCode::Path, r.endpoint, "path is not contiguous"});
      } catch (const Error& e) {
        out.push_back({ErrorCode::Path, r.endpoint, std::string(to_string(e.code())) + ": " + e.what()});
      }
    }
  }

  for (const auto& p : c.timing_pairs) {
    auto known = [&](timing::ChannelKey k) {
      for (const auto& e : c.endpoints)
        for (int ch : e.detector_channels)
          if (e.tag == k.node && ch == k.channel) return true;
      return false;
    };
    if (!known(p.a) || !known(p.b)) out.push_back({ErrorCode::Timing, p.id, "timing pair names a channel no endpoint owns"});
  }

  if (calendar) {
    for (const auto& w : calendar->conflicts(c.window_start_s, c.window_end_s, c.resources(), c.request_id))
      out.push_back({ErrorCode::Conflict, w.request_id, "overlaps accepted window on " + w.shared.front()});
  }
  return out;
}

}  // namespace qnet::control
