#include "qnet/control/compiler.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

namespace qnet::control {

using topology::Arm;
using topology::Bundle;
using topology::SwitchId;
using topology::SwitchRole;
namespace ports = topology::ports;

namespace {

[[noreturn]] void resource_error(const std::string& msg) { throw Error(ErrorCode::Resource, msg); }

struct PortUse {
  std::set<int> rows;
  std::set<int> cols;
};

/// Switch ports claimed so far, with an undo log for backtracking.
class Usage {
 public:
  bool row_free(const SwitchId& s, int r) const { return !has(s, true, r); }
  bool col_free(const SwitchId& s, int c) const { return !has(s, false, c); }
  bool free(const SwitchId& s, int r, int c) const { return row_free(s, r) && col_free(s, c); }

  void claim(const SwitchId& s, int r, int c) {
    use_[s].rows.insert(r);
    use_[s].cols.insert(c);
    log_.push_back({s, {r, c}});
  }
  std::size_t mark() const { return log_.size(); }
  void undo(std::size_t mark) {
    while (log_.size() > mark) {
      const auto& [s, rc] = log_.back();
      use_[s].rows.erase(rc.first);
      use_[s].cols.erase(rc.second);
      log_.pop_back();
    }
  }
  const std::vector<std::pair<SwitchId, std::pair<int, int>>>& log() const { return log_; }

 private:
  bool has(const SwitchId& s, bool row, int v) const {
    const auto it = use_.find(s);
    if (it == use_.end()) return false;
    return row ? it->second.rows.count(v) != 0 : it->second.cols.count(v) != 0;
  }
  std::map<SwitchId, PortUse> use_;
  std::vector<std::pair<SwitchId, std::pair<int, int>>> log_;
};

struct Edge {
  std::size_t source = 0;  // index into settings
  Arm arm = Arm::A;
  std::string endpoint;
};

struct Context {
  const topology::NetworkTopology& t;
  const std::vector<SourceSetting>& sources;
  const std::vector<EndpointSetting>& endpoints;
  Usage usage;
};

const EndpointSetting& endpoint_of(const Context& cx, const std::string& id) {
  for (const auto& e : cx.endpoints)
    if (e.id == id) return e;
  throw Error(ErrorCode::Schema, "unknown endpoint '" + id + "'");
}

std::optional<int> claim_hub_out(Context& cx, HubId h) {
  const SwitchId internal{h, SwitchRole::Internal}, ring{h, SwitchRole::Ring};
  for (int i = 0; i < topology::kHubLanes; ++i)
    if (cx.usage.col_free(internal, ports::internal_col_to_ring(i)) && cx.usage.col_free(ring, ports::ring_col_hub_out(i)))
      return i;
  return std::nullopt;
}

std::optional<int> claim_hub_in(Context& cx, HubId h) {
  const SwitchId internal{h, SwitchRole::Internal}, ring{h, SwitchRole::Ring};
  for (int i = 0; i < topology::kHubLanes; ++i)
    if (cx.usage.row_free(internal, ports::internal_row_from_ring(i)) && cx.usage.col_free(ring, ports::ring_col_hub_in(i)))
      return i;
  return std::nullopt;
}

std::optional<std::pair<int, int>> free_jumper(Context& cx, HubId h) {
  const SwitchId ring{h, SwitchRole::Ring};
  for (const auto& [x, y] : cx.t.hubs[h].ring_jumpers)
    if (cx.usage.col_free(ring, x) && cx.usage.col_free(ring, y)) return std::pair{x, y};
  return std::nullopt;
}

/// Claim every port of one arm's route; false leaves partial claims for
/// the caller to undo.
bool plan_route(Context& cx, const Edge& edge, int dir, Bundle b, int lane) {
  const auto& src = cx.sources[edge.source];
  const auto& ep = endpoint_of(cx, edge.endpoint);
  const HubId hs = src.hub;
  const HubId hd = ep.hub;
  const int prepared = ports::internal_row_prepared(src.slot, edge.arm);
  const SwitchId src_internal{hs, SwitchRole::Internal};
  if (!cx.usage.row_free(src_internal, prepared)) return false;

  if (!ep.node && hd == hs) {
    const int col = ports::internal_col_measure(ep.measure_lane);
    if (!cx.usage.col_free(src_internal, col)) return false;
    cx.usage.claim(src_internal, prepared, col);
    return true;
  }

  const auto out = claim_hub_out(cx, hs);
  if (!out) return false;
  cx.usage.claim(src_internal, prepared, ports::internal_col_to_ring(*out));
  const int n = static_cast<int>(cx.t.hub_count());
  const int out_row = dir > 0 ? ports::ring_row_next(b, lane) : ports::ring_row_prev(b, lane);
  const int in_row = dir > 0 ? ports::ring_row_prev(b, lane) : ports::ring_row_next(b, lane);
  const int spoke_row = ep.node ? ports::ring_row_spoke(cx.t.node(*ep.node).spoke, b, lane) : -1;

  const SwitchId src_ring{hs, SwitchRole::Ring};
  if (hd == hs) {
    if (!cx.usage.row_free(src_ring, spoke_row)) return false;
    cx.usage.claim(src_ring, spoke_row, ports::ring_col_hub_out(*out));
    return true;
  }
  if (!cx.usage.row_free(src_ring, out_row)) return false;
  cx.usage.claim(src_ring, out_row, ports::ring_col_hub_out(*out));

  for (HubId h = static_cast<HubId>((static_cast<int>(hs) + dir + n) % n);;
       h = static_cast<HubId>((static_cast<int>(h) + dir + n) % n)) {
    const SwitchId ring{h, SwitchRole::Ring};
    if (!cx.usage.row_free(ring, in_row)) return false;
    if (h != hd) {
      const auto j = free_jumper(cx, h);
      if (!j || !cx.usage.row_free(ring, out_row)) return false;
      cx.usage.claim(ring, in_row, j->first);
      cx.usage.claim(ring, out_row, j->second);
      continue;
    }
    if (ep.node) {
      const auto j = free_jumper(cx, h);
      if (!j || !cx.usage.row_free(ring, spoke_row)) return false;
      cx.usage.claim(ring, in_row, j->first);
      cx.usage.claim(ring, spoke_row, j->second);
      return true;
    }
    const auto k = claim_hub_in(cx, h);
    const SwitchId internal{h, SwitchRole::Internal};
    const int col = ports::internal_col_measure(ep.measure_lane);
    if (!k || !cx.usage.col_free(internal, col)) return false;
    cx.usage.claim(ring, in_row, ports::ring_col_hub_in(*k));
    cx.usage.claim(internal, ports::internal_row_from_ring(*k), col);
    return true;
  }
}

std::vector<int> directions(const topology::NetworkTopology& t, HubId from, HubId to) {
  const int n = static_cast<int>(t.hub_count());
  if (from == to) return {1};
  const int forward = (static_cast<int>(to) - static_cast<int>(from) + n) % n;
  if (forward <= n - forward) return {1, -1};
  return {-1, 1};
}

}  // namespace

topology::Endpoint path_endpoint(const EndpointSetting& e) {
  if (e.node) return topology::Endpoint::at_node(*e.node);
  return topology::Endpoint::measure(e.hub, e.measure_lane);
}

topology::SwitchStates config_switch_states(const topology::NetworkTopology& t, const CompiledConfig& c) {
  topology::SwitchStates states(t);
  for (const auto& [id, maps] : c.switches) {
    if (!states.contains(id)) throw Error(ErrorCode::UnknownDevice, "no switch " + topology::to_string(id));
    states.at(id) = topology::set_crossbar(states.at(id), maps);
  }
  return states;
}

topology::OpticalPath route_path(const topology::NetworkTopology& t, const topology::SwitchStates& states,
                                 const CompiledConfig& c, const RouteSetting& r) {
  const auto* ep = c.endpoint(r.endpoint);
  if (!ep) throw Error(ErrorCode::Path, "route names unknown endpoint '" + r.endpoint + "'");
  return topology::resolve_path(t, states, topology::Endpoint::source(r.source_hub, r.source_slot, r.arm),
                                path_endpoint(*ep), r.lane, r.bundle);
}

CompiledConfig compile_request(const NetworkConfigRequest& req, const topology::NetworkTopology& t) {
  CompiledConfig c;
  c.request_id = req.request_id;
  c.subscriber_id = req.subscriber_id;
  c.window_start_s = req.window_start_s;
  c.window_end_s = req.window_end_s;
  c.qkd = req.qkd;
  c.coincidence_window_ps = req.coincidence_window_ps;
  c.interval_ps = req.interval_ps;
  c.detector = req.detector;
  c.drift_rate = req.drift_rate;

  // Source slots.
  std::map<HubId, std::set<int>> slots;
  for (const auto& s : req.sources) {
    if (s.hub >= t.hub_count()) resource_error("source '" + s.id + "' names hub " + std::to_string(s.hub));
    auto& used = slots[s.hub];
    const int capacity = t.hubs[s.hub].sources;
    int slot = -1;
    if (s.slot) {
      if (*s.slot < 0 || *s.slot >= capacity || used.count(*s.slot))
        resource_error("source slot " + std::to_string(*s.slot) + " unavailable on H" + std::to_string(s.hub));
      slot = *s.slot;
    } else {
      for (int k = 0; k < capacity && slot < 0; ++k)
        if (!used.count(k)) slot = k;
    }
    if (slot < 0)
      resource_error("H" + std::to_string(s.hub) + " has only " + std::to_string(capacity) + " sources");
    used.insert(slot);
    SourceSetting ss;
    ss.design_id = s.id;
    ss.hub = s.hub;
    ss.slot = slot;
    ss.mode = s.mode;
    ss.pair_rate_hz = s.pair_rate_hz;
    ss.prepare_module = slot % t.hubs[s.hub].prepare_modules;
    c.sources.push_back(ss);
  }

  // Detectors, measure modules and measure lanes.
  std::map<HubId, std::vector<bool>> channels;
  std::map<HubId, int> modules, lanes;
  for (const auto& e : req.endpoints) {
    EndpointSetting es;
    es.id = e.id;
    es.node = e.node;
    es.hub = e.node ? t.node(*e.node).hub : e.measure_hub;
    es.receiver = e.receiver;
    es.angle = e.angle;
    es.basis_angle[0] = e.basis_angle[0];
    es.basis_angle[1] = e.basis_angle[1];
    es.tag = e.node ? static_cast<std::uint8_t>(*e.node) : hub_measure_tag(es.hub);
    const auto& hub = t.hubs[es.hub];
    es.measure_lane = -1;
    if (!e.node) {
      es.measure_lane = lanes[es.hub]++;
      if (es.measure_lane >= topology::kMeasureLanes)
        resource_error("H" + std::to_string(es.hub) + " has only " + std::to_string(topology::kMeasureLanes) + " measure lanes");
    }
    const int need = optics::receiver_channel_count(e.receiver);
    if (need > 0) {
      es.measure_module = modules[es.hub]++;
      if (es.measure_module >= hub.measure_modules)
        resource_error("H" + std::to_string(es.hub) + " has only " + std::to_string(hub.measure_modules) + " measure modules");
      auto& used = channels[es.hub];
      used.resize(static_cast<std::size_t>(hub.detector_channels), false);
      int base = -1;
      for (int k = 0; k + need <= hub.detector_channels && base < 0; ++k) {
        bool ok = true;
        for (int m = 0; m < need; ++m) ok = ok && !used[k + m];
        if (ok) base = k;
      }
      if (base < 0)
        resource_error("H" + std::to_string(es.hub) + " has only " + std::to_string(hub.detector_channels) + " detector channels");
      for (int m = 0; m < need; ++m) {
        used[base + m] = true;
        es.detector_channels.push_back(base + m);
      }
    }
    c.endpoints.push_back(es);
  }

  // Routes, with backtracking over bundle lanes.
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < req.sources.size(); ++i) {
    if (!req.sources[i].arm_a.empty()) edges.push_back({i, Arm::A, req.sources[i].arm_a});
    if (!req.sources[i].arm_b.empty()) edges.push_back({i, Arm::B, req.sources[i].arm_b});
  }
  Context cx{t, c.sources, c.endpoints, {}};
  std::vector<RouteSetting> chosen(edges.size());
  std::function<bool(std::size_t)> route = [&](std::size_t k) {
    if (k == edges.size()) return true;
    const auto& e = edges[k];
    const auto& src = c.sources[e.source];
    const auto& ep = endpoint_of(cx, e.endpoint);
    for (int dir : directions(t, src.hub, ep.hub))
      for (Bundle b : {Bundle::Primary, Bundle::Secondary})
        for (int lane = 0; lane < topology::kQubitLanes; ++lane) {
          const auto mark = cx.usage.mark();
          if (plan_route(cx, e, dir, b, lane)) {
            chosen[k] = {e.endpoint, src.hub, src.slot, e.arm, b, lane};
            if (route(k + 1)) return true;
          }
          cx.usage.undo(mark);
          // Same-hub measure routes do not use a lane.
          if (!ep.node && ep.hub == src.hub) return false;
        }
    return false;
  };
  if (!route(0)) throw Error(ErrorCode::Unroutable, "no lane assignment carries every source arm");
  c.routes = chosen;
  for (const auto& [sw, rc] : cx.usage.log()) c.switches[sw].push_back(rc);

  // Select switches.
  for (const auto& s : c.sources)
    c.switches[{s.hub, SwitchRole::PrepareSelect}].emplace_back(s.slot, s.prepare_module * 8 + s.slot);
  for (const auto& e : c.endpoints)
    for (std::size_t k = 0; k < e.detector_channels.size(); ++k)
      c.switches[{e.hub, SwitchRole::MeasureSelect}].emplace_back(e.detector_channels[k],
                                                                  e.measure_module * 8 + static_cast<int>(k));
  for (auto& [sw, maps] : c.switches) std::sort(maps.begin(), maps.end());

  // APC channels sit on the hub the corrected photon leaves from.
  std::map<HubId, int> apc_used;
  for (const auto& e : req.endpoints) {
    if (!e.apc) continue;
    HubId hub = c.endpoint(e.id)->hub;
    for (const auto& r : c.routes)
      if (r.endpoint == e.id) hub = r.source_hub;
    const int ch = apc_used[hub]++;
    if (ch >= t.hubs[hub].apc_channels)
      resource_error("H" + std::to_string(hub) + " has only " + std::to_string(t.hubs[hub].apc_channels) + " APC channels");
    c.apc.push_back({hub, ch, e.id});
  }

  // Timing pairs with offsets from the routed path latencies.
  const auto states = config_switch_states(t, c);
  std::map<std::string, TimePs> latency;
  for (const auto& r : c.routes)
    latency[r.endpoint] = optics::ChannelModel::from_path(route_path(t, states, c, r)).latency_ps;
  for (const auto& p : req.pairs) {
    const auto* a = c.endpoint(p.a);
    const auto* b = c.endpoint(p.b);
    if (p.channel_a < 0 || p.channel_a >= static_cast<int>(a->detector_channels.size()) || p.channel_b < 0 ||
        p.channel_b >= static_cast<int>(b->detector_channels.size()))
      throw Error(ErrorCode::Schema, "pair '" + p.id + "' names a channel its receiver does not have");
    TimingPairSetting tp;
    tp.id = p.id;
    tp.a = {a->tag, static_cast<std::uint8_t>(a->detector_channels[p.channel_a])};
    tp.b = {b->tag, static_cast<std::uint8_t>(b->detector_channels[p.channel_b])};
    tp.offset_ps = latency[p.a] - latency[p.b];
    c.timing_pairs.push_back(tp);
  }

  // Overrides go in unchecked; validation reports what they break.
  for (const auto& [sw, maps] : req.switch_overrides) {
    auto& dst = c.switches[sw];
    dst.insert(dst.end(), maps.begin(), maps.end());
    std::sort(dst.begin(), dst.end());
  }
  return c;
}

}  // namespace qnet::control
