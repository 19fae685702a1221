#pragma once

#include "qnet/control/design.hpp"

namespace qnet::control {

class Calendar;

/// Port ranges, injective switch mappings, endpoint-to-endpoint path
/// continuity, detector and APC capacity. With a calendar, also reports
/// E_CONFLICT against accepted windows. Empty iff instantiable.
Findings validate_config(const CompiledConfig& c, const topology::NetworkTopology& t, const Calendar* calendar = nullptr);

}  // namespace qnet::control
