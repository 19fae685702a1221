#pragma once

// design.v1 requests and config.v1 compiled device settings.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "qnet/link_sim.hpp"
#include "qnet/timing.hpp"
#include "qnet/topology.hpp"

namespace qnet::control {

using topology::HubId;
using topology::NodeId;
using TimePs = optics::TimePs;

inline constexpr const char* kDesignSchema = "design.v1";
inline constexpr const char* kConfigSchema = "config.v1";

struct DesignSource {
  std::string id;
  HubId hub = 0;
  std::optional<int> slot;
  optics::PrepareMode mode = optics::PrepareMode::Entangled;
  double pair_rate_hz = 1e5;
  /// Endpoint ids fed by arm A and arm B; empty when the arm is unused.
  std::string arm_a;
  std::string arm_b;
};

struct DesignEndpoint {
  std::string id;
  /// A Quantum Node, or a hub's own measure bank when `node` is unset.
  std::optional<NodeId> node;
  HubId measure_hub = 0;
  optics::ReceiverKind receiver = optics::ReceiverKind::Bucket;
  double angle = 0.0;
  double basis_angle[2] = {0.0, 0.7853981633974483};
  bool apc = false;
};

struct DesignPair {
  std::string id;
  std::string a;
  std::string b;
  int channel_a = 0;
  int channel_b = 0;
};

struct QkdRequest {
  std::string a;
  std::string b;
  std::uint64_t target_coincidences = 10000;
  double sample_fraction = 0.1;
};

struct NetworkConfigRequest {
  std::string request_id;
  std::string subscriber_id;
  int priority = 0;
  /// Requested wall-clock window, seconds, half open.
  std::int64_t window_start_s = 0;
  std::int64_t window_end_s = 3600;
  std::vector<DesignSource> sources;
  std::vector<DesignEndpoint> endpoints;
  std::vector<DesignPair> pairs;
  std::optional<QkdRequest> qkd;
  TimePs coincidence_window_ps = 1000;
  TimePs interval_ps = 100'000'000'000;
  optics::DetectorModel detector;
  double drift_rate = 0.0;
  /// Operator mappings appended verbatim to the compiled switch settings.
  std::map<topology::SwitchId, std::vector<std::pair<int, int>>> switch_overrides;

  const DesignEndpoint* endpoint(const std::string& id) const;
};

/// Throws E_SCHEMA.
NetworkConfigRequest design_from_json(const nlohmann::json& doc, const topology::NetworkTopology& t);
nlohmann::json to_json(const NetworkConfigRequest& req, const topology::NetworkTopology& t);

/// Node reference "H1.QN3" or a numeric id.
std::optional<NodeId> parse_node_ref(const std::string& ref, const topology::NetworkTopology& t);

// ---------------------------------------------------------------------------

struct SourceSetting {
  std::string design_id;
  HubId hub = 0;
  int slot = 0;
  bool enabled = true;
  optics::PrepareMode mode = optics::PrepareMode::Entangled;
  double pair_rate_hz = 1e5;
  int prepare_module = 0;
};

/// One routed arm: the photon leaves source (hub, slot, arm) and reaches the
/// endpoint on (bundle, lane).
struct RouteSetting {
  std::string endpoint;
  HubId source_hub = 0;
  int source_slot = 0;
  topology::Arm arm = topology::Arm::A;
  topology::Bundle bundle = topology::Bundle::Primary;
  int lane = 0;
};

struct EndpointSetting {
  std::string id;
  std::optional<NodeId> node;
  /// Hub holding the detectors for this endpoint.
  HubId hub = 0;
  int measure_lane = 0;
  int measure_module = 0;
  optics::ReceiverKind receiver = optics::ReceiverKind::Bucket;
  double angle = 0.0;
  double basis_angle[2] = {0.0, 0.7853981633974483};
  std::vector<int> detector_channels;
  /// Event tag: the node id, or 128 + hub for a hub measure bank.
  std::uint8_t tag = 0;
};

struct ApcSetting {
  HubId hub = 0;
  int channel = 0;
  std::string endpoint;
};

struct TimingPairSetting {
  std::string id;
  timing::ChannelKey a;
  timing::ChannelKey b;
  TimePs offset_ps = 0;
};

struct CompiledConfig {
  std::string request_id;
  std::string subscriber_id;
  std::int64_t window_start_s = 0;
  std::int64_t window_end_s = 0;
  /// Switch id -> (row, col) mappings this config adds.
  std::map<topology::SwitchId, std::vector<std::pair<int, int>>> switches;
  std::vector<SourceSetting> sources;
  std::vector<RouteSetting> routes;
  std::vector<EndpointSetting> endpoints;
  std::vector<ApcSetting> apc;
  std::vector<TimingPairSetting> timing_pairs;
  std::optional<QkdRequest> qkd;
  TimePs coincidence_window_ps = 1000;
  TimePs interval_ps = 100'000'000'000;
  optics::DetectorModel detector;
  double drift_rate = 0.0;

  bool empty() const { return sources.empty() && endpoints.empty() && switches.empty(); }
  const EndpointSetting* endpoint(const std::string& id) const;
  /// Every device, port and lane this config claims, as stable names.
  std::set<std::string> resources() const;
  /// Devices billed per hour.
  std::size_t device_count() const;
};

nlohmann::json to_json(const CompiledConfig& c);
/// Throws E_SCHEMA.
CompiledConfig config_from_json(const nlohmann::json& doc);

std::uint8_t hub_measure_tag(HubId hub);

}  // namespace qnet::control
