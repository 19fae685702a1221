#include "qnet/control/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "qnet/control/compiler.hpp"

namespace qnet::control {

namespace {

enum Stream : std::uint64_t { kLinkBase = 100, kApcBase = 200, kEnvironment = 300, kQkd = 400, kDriftBase = 500 };

bool can_signal(optics::ReceiverKind k) {
  return k == optics::ReceiverKind::Linear || k == optics::ReceiverKind::Bbm92;
}

optics::LinkConfig swapped(const optics::LinkConfig& in) {
  optics::LinkConfig out = in;
  std::swap(out.channel[0], out.channel[1]);
  std::swap(out.receiver[0], out.receiver[1]);
  std::swap(out.detector[0], out.detector[1]);
  return out;
}

double rotation_angle(const Mat2& u) {
  const double half_trace = std::min(1.0, std::abs(u.trace()) / 2.0);
  return 2.0 * std::acos(half_trace);
}

struct ArmRef {
  std::size_t link = 0;
  int arm = 0;
};

std::optional<ArmRef> find_arm(const std::vector<SourceLink>& links, const std::string& endpoint) {
  for (std::size_t i = 0; i < links.size(); ++i)
    for (int k = 0; k < 2; ++k)
      if (links[i].endpoint[k] == endpoint) return ArmRef{i, k};
  return std::nullopt;
}

}  // namespace

std::vector<SourceLink> build_links(const CompiledConfig& c, const topology::NetworkTopology& t,
                                    const topology::SwitchStates& states) {
  std::vector<SourceLink> out;
  for (const auto& s : c.sources) {
    SourceLink sl;
    sl.link.source.pair_rate_hz = s.pair_rate_hz;
    sl.link.mode = s.mode;
    for (int k = 0; k < 2; ++k) {
      sl.link.receiver[k].kind = optics::ReceiverKind::None;
      sl.link.detector[k] = c.detector;
    }
    if (s.enabled) {
      for (const auto& r : c.routes) {
        if (r.source_hub != s.hub || r.source_slot != s.slot) continue;
        const int k = static_cast<int>(r.arm);
        const auto* ep = c.endpoint(r.endpoint);
        topology::OpticalPath path;
        try {
          path = route_path(t, states, c, r);
        } catch (const Error& e) {
          throw Error(ErrorCode::Path, "route to '" + r.endpoint + "': " + e.what());
        }
        sl.endpoint[k] = r.endpoint;
        sl.link.channel[k] = optics::ChannelModel::from_path(path);
        sl.path_rotation[k] = sl.link.channel[k].rotation;
        auto& rx = sl.link.receiver[k];
        rx.kind = ep->detector_channels.empty() ? optics::ReceiverKind::None : ep->receiver;
        rx.node = ep->tag;
        rx.base_channel = ep->detector_channels.empty() ? 0 : static_cast<std::uint8_t>(ep->detector_channels.front());
        rx.angle = ep->angle;
        rx.basis_angle[0] = ep->basis_angle[0];
        rx.basis_angle[1] = ep->basis_angle[1];
      }
    }
    out.push_back(sl);
  }
  return out;
}

timing::CountingPlan counting_plan(const CompiledConfig& c, double duration_s) {
  timing::CountingPlan plan;
  for (const auto& e : c.endpoints)
    for (int ch : e.detector_channels) plan.channels.push_back({e.tag, static_cast<std::uint8_t>(ch)});
  std::sort(plan.channels.begin(), plan.channels.end());
  for (const auto& p : c.timing_pairs) plan.pairs.push_back({p.id, p.a, p.b, p.offset_ps});
  plan.window_ps = c.coincidence_window_ps;
  plan.interval_ps = c.interval_ps;
  plan.start_ps = 0;
  plan.end_ps = static_cast<TimePs>(std::llround(duration_s * optics::kPsPerSecond));
  return plan;
}

std::string environment_csv(const std::vector<EnvironmentSample>& samples) {
  std::ostringstream out;
  out << "time_s,hub,temperature_c,drift_rad\n";
  out.precision(9);
  for (const auto& s : samples) out << s.time_s << ',' << s.hub << ',' << s.temperature_c << ',' << s.drift_rad << '\n';
  return out.str();
}

qkd::Bbm92Config qkd_config(const CompiledConfig& c, const std::vector<SourceLink>& links) {
  if (!c.qkd) throw Error(ErrorCode::Precondition, "config has no qkd request");
  const auto a = find_arm(links, c.qkd->a);
  const auto b = find_arm(links, c.qkd->b);
  if (!a || !b || a->link != b->link)
    throw Error(ErrorCode::Precondition, "qkd endpoints must be fed by the same source");
  optics::LinkConfig link = links[a->link].link;
  if (a->arm == 1) link = swapped(link);
  if (link.receiver[0].kind != optics::ReceiverKind::Bbm92 || link.receiver[1].kind != optics::ReceiverKind::Bbm92)
    throw Error(ErrorCode::Precondition, "qkd endpoints need bbm92 receivers");
  qkd::Bbm92Config cfg;
  cfg.link = link;
  cfg.target_coincidences = c.qkd->target_coincidences;
  cfg.window_ps = c.coincidence_window_ps;
  return cfg;
}

RunResult run_config(const CompiledConfig& c, const topology::NetworkTopology& t,
                     const topology::SwitchStates& states, const RunSettings& settings,
                     const RunObserver& observer, const std::atomic<bool>* stop) {
  if (!(settings.duration_s > 0)) throw Error(ErrorCode::Precondition, "duration must be positive");
  RunResult result;
  result.plan = counting_plan(c, settings.duration_s);
  auto links = build_links(c, t, states);

  // Per-arm drift and correction.
  const bool drifting = c.drift_rate > 0;
  std::vector<std::array<std::optional<apc::DriftProcess>, 2>> drift(links.size());
  std::vector<std::array<Mat2, 2>> correction(links.size(), {Mat2::Identity(), Mat2::Identity()});
  if (drifting)
    for (std::size_t i = 0; i < links.size(); ++i)
      for (int k = 0; k < 2; ++k)
        if (!links[i].endpoint[k].empty()) drift[i][k].emplace(c.drift_rate, derive_seed(settings.seed, kDriftBase + 2 * i + k));
  auto base_rotation = [&](std::size_t i, int k) {
    return drift[i][k] ? Mat2(drift[i][k]->current() * links[i].path_rotation[k]) : links[i].path_rotation[k];
  };
  auto refresh = [&] {
    for (std::size_t i = 0; i < links.size(); ++i)
      for (int k = 0; k < 2; ++k) links[i].link.channel[k].rotation = correction[i][k] * base_rotation(i, k);
  };

  struct Loop {
    ArmRef arm;
    apc::ApcState state;
    std::uint64_t calls = 0;
  };
  std::vector<std::optional<Loop>> loops;
  auto run_apc = [&](std::size_t j, int max_iters) {
    auto& loop = *loops[j];
    auto signal_link = links[loop.arm.link].link;
    signal_link.channel[loop.arm.arm].rotation = base_rotation(loop.arm.link, loop.arm.arm);
    if (loop.arm.arm == 0) signal_link = swapped(signal_link);
    apc::SimulatedSignal signal(signal_link, settings.apc_sample_ms,
                                derive_seed(derive_seed(settings.seed, kApcBase + j), loop.calls++),
                                c.coincidence_window_ps);
    auto report = apc::stabilize(loop.state, signal, settings.apc_threshold, max_iters);
    correction[loop.arm.link][loop.arm.arm] = apc::correction_unitary(loop.state);
    refresh();
    return report;
  };

  for (std::size_t j = 0; j < c.apc.size(); ++j) {
    ApcOutcome outcome;
    outcome.setting = c.apc[j];
    const auto arm = find_arm(links, c.apc[j].endpoint);
    loops.emplace_back();
    if (!arm) {
      outcome.skipped = "endpoint is not fed by any source";
    } else if (!can_signal(links[arm->link].link.receiver[0].kind) || !can_signal(links[arm->link].link.receiver[1].kind)) {
      outcome.skipped = "error signal needs linear or bbm92 receivers on both arms";
    } else {
      loops.back() = Loop{*arm, {}, 0};
      try {
        outcome.initial = run_apc(j, settings.apc_max_iters);
      } catch (const Error& e) {
        outcome.skipped = std::string(to_string(e.code())) + ": " + e.what();
        loops.back().reset();
      }
    }
    result.apc.push_back(std::move(outcome));
  }

  timing::CountAccumulator acc(result.plan);
  Rng env_rng(derive_seed(settings.seed, kEnvironment));
  const TimePs interval = c.interval_ps;
  const TimePs end = *result.plan.end_ps;
  auto emit = [&](std::vector<timing::CountRecord> records) {
    for (auto& r : records) {
      if (observer.on_counts) observer.on_counts(r);
      result.counts.push_back(std::move(r));
    }
  };

  // Later batches cannot reach back past the start of the current one, so
  // events before it are final and go out in time order.
  optics::EventStream pending;
  auto release = [&](TimePs watermark) {
    std::stable_sort(pending.begin(), pending.end(),
                     [](const auto& x, const auto& y) { return x.time_ps < y.time_ps; });
    const auto split = std::lower_bound(pending.begin(), pending.end(), watermark,
                                        [](const auto& e, TimePs t) { return e.time_ps < t; });
    optics::EventStream ready(pending.begin(), split);
    pending.erase(pending.begin(), split);
    if (ready.empty()) return;
    if (observer.on_events) observer.on_events(ready);
    result.events.insert(result.events.end(), ready.begin(), ready.end());
  };

  for (std::uint64_t k = 0; static_cast<TimePs>(k) * interval < end; ++k) {
    if (stop && stop->load()) break;
    const TimePs start = static_cast<TimePs>(k) * interval;
    const TimePs len = std::min(interval, end - start);
    const double len_s = static_cast<double>(len) / optics::kPsPerSecond;
    if (drifting && k > 0) {
      for (auto& arms : drift)
        for (auto& d : arms)
          if (d) d->step(static_cast<double>(interval) / optics::kPsPerSecond);
      refresh();
      for (std::size_t j = 0; j < loops.size(); ++j) {
        if (!loops[j]) continue;
        try {
          run_apc(j, settings.apc_iters_per_interval);
        } catch (const Error&) {
          // Starved sample; keep the last correction.
        }
      }
    }
    for (std::size_t j = 0; j < loops.size(); ++j)
      if (loops[j]) {
        const auto& l = *loops[j];
        result.apc[j].interval_signals.push_back(apc::analytic_error_signal(
            links[l.arm.link].link.channel[l.arm.arm == 0 ? 1 : 0].rotation,
            base_rotation(l.arm.link, l.arm.arm), correction[l.arm.link][l.arm.arm]));
      }

    optics::EventStream batch;
    for (std::size_t i = 0; i < links.size(); ++i) {
      auto link = links[i].link;
      if (link.receiver[0].kind == optics::ReceiverKind::None && link.receiver[1].kind == optics::ReceiverKind::None)
        continue;
      link.start_ps = start;
      link.duration_s = len_s;
      const auto run = optics::simulate_link(link, derive_seed(derive_seed(settings.seed, kLinkBase + i), k));
      batch.insert(batch.end(), run.events[0].begin(), run.events[0].end());
      batch.insert(batch.end(), run.events[1].begin(), run.events[1].end());
    }
    acc.append(batch);
    pending.insert(pending.end(), batch.begin(), batch.end());
    release(start);
    emit(acc.close_until(start));

    const double mid_s = (static_cast<double>(start) + 0.5 * static_cast<double>(len)) / optics::kPsPerSecond;
    for (HubId h = 0; h < t.hub_count(); ++h) {
      EnvironmentSample s;
      s.time_s = static_cast<double>(start) / optics::kPsPerSecond;
      s.hub = h;
      s.temperature_c = 21.0 + 0.3 * std::sin(2.0 * std::numbers::pi * mid_s / 900.0 + h) +
                        std::normal_distribution<double>(0.0, 0.02)(env_rng);
      for (std::size_t i = 0; i < links.size(); ++i)
        if (c.sources[i].hub == h)
          for (int a = 0; a < 2; ++a)
            if (drift[i][a]) s.drift_rad = std::max(s.drift_rad, rotation_angle(drift[i][a]->current()));
      result.environment.push_back(s);
    }
  }
  release(std::numeric_limits<TimePs>::max());
  emit(acc.finish(end));

  if (c.qkd) {
    try {
      auto cfg = qkd_config(c, links);
      cfg.timeout_s = settings.qkd_timeout_s;
      result.qkd = qkd::run_session(cfg, derive_seed(settings.seed, kQkd), {c.qkd->sample_fraction});
    } catch (const Error& e) {
      result.qkd_error = std::string(to_string(e.code())) + "\t" + e.what();
    }
  }
  return result;
}

}  // namespace qnet::control
