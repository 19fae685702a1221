#include "qnet/apc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "qnet/kernels.hpp"
#include "qnet/timing.hpp"

namespace qnet::apc {

namespace {

Vec3 random_axis(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(g(rng), g(rng), g(rng));
  } while (v.norm() < 1e-12);
  return v.normalized();
}

Mat2 drift_increment(double dt_s, double rate, Rng& rng) {
  if (dt_s <= 0.0 || rate <= 0.0) return Mat2::Identity();
  const Vec3 axis = random_axis(rng);
  const double angle = std::normal_distribution<double>(0.0, rate * std::sqrt(dt_s))(rng);
  return stokes_rotation(axis, angle);
}

}  // namespace

ChannelModel apply_drift(const ChannelModel& ch, double dt_s, double rate, Rng& rng) {
  if (dt_s < 0.0) throw Error(ErrorCode::Precondition, "dt must be non-negative");
  ChannelModel out = ch;
  out.rotation = drift_increment(dt_s, rate, rng) * ch.rotation;
  return out;
}

Mat2 DriftProcess::step(double dt_s) {
  const Mat2 inc = drift_increment(dt_s, rate_, rng_);
  current_ = inc * current_;
  return inc;
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a + std::numbers::pi, two_pi);
  if (w < 0) w += two_pi;
  w -= std::numbers::pi;
  return w >= std::numbers::pi ? -std::numbers::pi : w;
}

Mat2 random_unitary(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Vector4d q;
  do {
    q = Eigen::Vector4d(g(rng), g(rng), g(rng), g(rng));
  } while (q.norm() < 1e-12);
  q.normalize();
  Mat2 u;
  u << Complex(q(0), q(1)), Complex(q(2), q(3)), Complex(-q(2), q(3)), Complex(q(0), -q(1));
  return u;
}

void ApcState::wrap() {
  for (auto& a : stage_angles) a = wrap_angle(a);
  step_size = std::clamp(step_size, kMinStep, kMaxStep);
}

void ApcState::record(double signal) {
  history.push_back(signal);
  while (history.size() > 64) history.pop_front();
}

Mat2 correction_unitary(const StageAngles& a) {
  return rotation_s2(a[3]) * rotation_s1(a[2]) * rotation_s2(a[1]) * rotation_s1(a[0]);
}

double analytic_error_signal(const Mat2& channel_a, const Mat2& channel_b, const Mat2& correction,
                             SignalBasis basis) {
  const auto state = optics::TwoQubitState::psi_plus().rotated(channel_a, optics::Arm::A).rotated(correction * channel_b, optics::Arm::B);
  auto wrong = [&](double a, double b) {
    const auto p = optics::born_probabilities(state, a, b);
    return p[0][0] + p[1][1];
  };
  const double rect = wrong(0.0, 0.0);
  if (basis == SignalBasis::Rectilinear) return rect;
  return 0.5 * (rect + wrong(std::numbers::pi / 4, -std::numbers::pi / 4));
}

double AnalyticSignal::sample(const Mat2& correction) {
  return analytic_error_signal(a_, b_, correction, basis_);
}

double ShotNoiseSignal::sample(const Mat2& correction) {
  const double p = std::clamp(exact_.sample(correction), 0.0, 1.0);
  if (n_ < kStarvedBelow) throw Error(ErrorCode::Starved, "fewer than 20 coincidences per sample");
  const auto wrong = std::binomial_distribution<std::uint64_t>(n_, p)(rng_);
  return static_cast<double>(wrong) / static_cast<double>(n_);
}

double error_fraction(const PortCounts& c) {
  const std::uint64_t total = c.wrong + c.right;
  if (total < kStarvedBelow)
    throw Error(ErrorCode::Starved, "only " + std::to_string(total) + " coincidences in the sample");
  return static_cast<double>(c.wrong) / static_cast<double>(total);
}

SimulatedSignal::SimulatedSignal(optics::LinkConfig link, double sample_ms, std::uint64_t seed,
                                 optics::TimePs window_ps)
    : link_(std::move(link)), base_rotation_(link_.channel[1].rotation), sample_ms_(sample_ms), seed_(seed),
      window_ps_(window_ps) {
  link_.duration_s = sample_ms_ / 1000.0;
}

double SimulatedSignal::sample(const Mat2& correction) {
  link_.channel[1].rotation = correction * base_rotation_;
  const auto run = optics::simulate_link(link_, derive_seed(seed_, calls_++));
  const auto& ra = link_.receiver[0];
  const auto& rb = link_.receiver[1];
  const optics::TimePs offset = link_.channel[0].latency_ps - link_.channel[1].latency_ps;
  const int bases = ra.kind == optics::ReceiverKind::Bbm92 && rb.kind == optics::ReceiverKind::Bbm92 ? 2 : 1;
  PortCounts counts;
  for (int basis = 0; basis < bases; ++basis)
    for (int x = 0; x < 2; ++x)
      for (int y = 0; y < 2; ++y) {
        const timing::ChannelKey ka{ra.node, static_cast<std::uint8_t>(ra.base_channel + 2 * basis + x)};
        const timing::ChannelKey kb{rb.node, static_cast<std::uint8_t>(rb.base_channel + 2 * basis + y)};
        const auto ta = timing::channel_tags(run.events[0], ka);
        const auto tb = timing::channel_tags(run.events[1], kb);
        const auto n = count_coincidences(ta, tb, window_ps_, offset);
        (x == y ? counts.wrong : counts.right) += n;
      }
  last_total_ = counts.wrong + counts.right;
  return error_fraction(counts);
}

ConvergenceReport stabilize(ApcState& state, ErrorSignalSource& source, double threshold, int max_iters) {
  if (!(threshold > 0.0 && threshold < 0.5)) throw Error(ErrorCode::Precondition, "threshold must be in (0, 0.5)");
  ConvergenceReport report;
  state.wrap();
  if (max_iters <= 0) {
    report.final_signal = source.sample(correction_unitary(state));
    report.converged = false;
    return report;
  }
  double current = source.sample(correction_unitary(state));
  state.record(current);
  report.trace.push_back({0, state.stage_angles, current});
  auto settled = [&] {
    const auto n = source.last_sample_size();
    if (n == 0) return current <= threshold;
    const double p = std::max(current, 1.0 / static_cast<double>(n));
    return current + 2.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(n)) <= threshold;
  };
  while (!settled() && report.iters < max_iters) {
    ++report.iters;
    bool improved = false;
    for (int k = 0; k < kStages && !settled(); ++k) {
      StageAngles plus = state.stage_angles, minus = state.stage_angles;
      plus[k] = wrap_angle(plus[k] + state.step_size);
      minus[k] = wrap_angle(minus[k] - state.step_size);
      const double here = source.sample(correction_unitary(state.stage_angles));
      const double up = source.sample(correction_unitary(plus));
      const double down = source.sample(correction_unitary(minus));
      current = here;
      if (up < current && up <= down) {
        state.stage_angles = plus;
        current = up;
        improved = true;
      } else if (down < current) {
        state.stage_angles = minus;
        current = down;
        improved = true;
      }
    }
    state.step_size = std::clamp(improved ? state.step_size * 1.5 : state.step_size / 2.0, kMinStep, kMaxStep);
    state.record(current);
    report.trace.push_back({report.iters, state.stage_angles, current});
  }
  report.final_signal = source.sample(correction_unitary(state));
  report.converged = report.final_signal <= threshold;
  return report;
}

std::string to_jsonl(const ConvergenceReport& report) {
  std::ostringstream os;
  for (const auto& s : report.trace) {
    nlohmann::json j = {{"iteration", s.iteration},
                        {"angles", std::vector<double>(s.angles.begin(), s.angles.end())},
                        {"signal", s.signal}};
    os << j.dump() << '\n';
  }
  return os.str();
}

ClosedLoopResult run_closed_loop(const ClosedLoopConfig& cfg, std::uint64_t seed) {
  DriftProcess drift(cfg.drift_rate, derive_seed(seed, 1));
  Rng start_rng(derive_seed(seed, 3));
  const Mat2 start = cfg.random_start ? random_unitary(start_rng) : Mat2::Identity();
  ShotNoiseSignal signal(Mat2::Identity(), start, cfg.coincidences_per_sample, derive_seed(seed, 2),
                         cfg.basis);
  ApcState state;
  ClosedLoopResult result;
  const int periods = static_cast<int>(std::llround(cfg.duration_s / cfg.period_s));
  for (int i = 0; i < periods; ++i) {
    drift.step(cfg.period_s);
    signal.set_channel_b(drift.current() * start);
    const auto rep = stabilize(state, signal, cfg.threshold, cfg.iters_per_period);
    result.signals.push_back(rep.final_signal);
  }
  double sum = 0;
  for (double s : result.signals) sum += s;
  result.mean_signal = result.signals.empty() ? 0.0 : sum / static_cast<double>(result.signals.size());
  return result;
}

}  // namespace qnet::apc
