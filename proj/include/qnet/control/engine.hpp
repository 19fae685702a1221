#pragma once

// Runs a compiled config on the simulator: one link per source, batched
// per counting interval, APC on the configured endpoints, and an optional
// BBM92 session between two endpoints.

#include <atomic>
#include <functional>
#include <optional>

#include "qnet/apc.hpp"
#include "qnet/control/design.hpp"
#include "qnet/qkd.hpp"
#include "qnet/timing.hpp"

namespace qnet::control {

struct RunSettings {
  double duration_s = 1.0;
  std::uint64_t seed = 1;
  double apc_threshold = 0.02;
  int apc_max_iters = 200;
  /// Rounds per interval once the initial lock is reached and drift is on.
  int apc_iters_per_interval = 3;
  double apc_sample_ms = 20.0;
  double qkd_timeout_s = 10.0;
};

/// A source link plus the route each arm took.
struct SourceLink {
  optics::LinkConfig link;
  /// Endpoint id per arm; empty when unused.
  std::string endpoint[2];
  Mat2 path_rotation[2] = {Mat2::Identity(), Mat2::Identity()};
};

/// Links for every source under `states`. Throws E_PATH when a route
/// does not resolve.
std::vector<SourceLink> build_links(const CompiledConfig& c, const topology::NetworkTopology& t,
                                    const topology::SwitchStates& states);

timing::CountingPlan counting_plan(const CompiledConfig& c, double duration_s);

struct ApcOutcome {
  ApcSetting setting;
  apc::ConvergenceReport initial;
  std::vector<double> interval_signals;
  /// Set when the endpoint cannot produce an error signal.
  std::string skipped;
};

struct EnvironmentSample {
  double time_s = 0.0;
  HubId hub = 0;
  double temperature_c = 0.0;
  double drift_rad = 0.0;
};

std::string environment_csv(const std::vector<EnvironmentSample>& samples);

struct RunResult {
  timing::CountingPlan plan;
  /// Every detection, time sorted.
  optics::EventStream events;
  std::vector<timing::CountRecord> counts;
  std::vector<ApcOutcome> apc;
  std::vector<EnvironmentSample> environment;
  std::optional<qkd::SessionReport> qkd;
  std::string qkd_error;
};

struct RunObserver {
  std::function<void(const timing::CountRecord&)> on_counts;
  /// Events in global time order, in chunks.
  std::function<void(const optics::EventStream&)> on_events;
};

/// Deterministic per seed. `stop` ends the run at the next interval.
RunResult run_config(const CompiledConfig& c, const topology::NetworkTopology& t,
                     const topology::SwitchStates& states, const RunSettings& settings,
                     const RunObserver& observer = {}, const std::atomic<bool>* stop = nullptr);

/// Bbm92 config for the endpoints named by the config's qkd request.
/// Throws E_PRECONDITION unless one source feeds both with Bbm92 receivers.
qkd::Bbm92Config qkd_config(const CompiledConfig& c, const std::vector<SourceLink>& links);

}  // namespace qnet::control
