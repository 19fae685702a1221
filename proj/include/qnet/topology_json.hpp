#pragma once

#include <json.hpp>

#include "qnet/topology.hpp"

namespace qnet::topology {

inline constexpr const char* kTopologySchema = "topology.v1";

nlohmann::json to_json(const NetworkTopology& t);
/// Throws E_SCHEMA on a malformed document.
NetworkTopology topology_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const SwitchStates& states);
/// Applies the mappings in `doc` on top of a fresh SwitchStates for `t`.
/// Throws E_SCHEMA, E_UNKNOWN_DEVICE, E_PORT_RANGE or E_FANOUT.
SwitchStates switch_states_from_json(const NetworkTopology& t, const nlohmann::json& doc);

}  // namespace qnet::topology
