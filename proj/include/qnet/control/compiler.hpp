#pragma once

#include "qnet/control/design.hpp"

namespace qnet::control {

/// Route every source arm to its endpoint, allocate source slots, detector
/// channels, measure modules and APC channels, and derive timing pairs.
/// Deterministic. Throws E_RESOURCE when a hub runs out of devices and
/// E_UNROUTABLE when no lane assignment carries every arm.
CompiledConfig compile_request(const NetworkConfigRequest& req, const topology::NetworkTopology& t);

/// Endpoint of a compiled endpoint setting for path resolution.
topology::Endpoint path_endpoint(const EndpointSetting& e);

/// Fresh switch states for `t` with the config's mappings applied.
/// Throws E_UNKNOWN_DEVICE, E_PORT_RANGE or E_FANOUT.
topology::SwitchStates config_switch_states(const topology::NetworkTopology& t, const CompiledConfig& c);

/// The optical path of a route under `states`.
topology::OpticalPath route_path(const topology::NetworkTopology& t, const topology::SwitchStates& states,
                                 const CompiledConfig& c, const RouteSetting& r);

}  // namespace qnet::control
