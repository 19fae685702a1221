#include "qnet/optics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qnet/kernels.hpp"

namespace qnet::optics {

TwoQubitState TwoQubitState::raw_pair() {
  TwoQubitState s;
  s.amplitudes(1) = 1.0;
  return s;
}

TwoQubitState TwoQubitState::psi_plus() {
  TwoQubitState s;
  s.amplitudes(1) = std::numbers::sqrt2 / 2.0;
  s.amplitudes(2) = std::numbers::sqrt2 / 2.0;
  return s;
}

TwoQubitState TwoQubitState::product(const Eigen::Vector2cd& a, const Eigen::Vector2cd& b) {
  TwoQubitState s;
  s.amplitudes << a(0) * b(0), a(0) * b(1), a(1) * b(0), a(1) * b(1);
  return s;
}

TwoQubitState TwoQubitState::rotated(const Mat2& u, Arm arm) const {
  Eigen::Matrix2cd m;
  m << amplitudes(0), amplitudes(1), amplitudes(2), amplitudes(3);
  // Rows index arm A, columns arm B.
  if (arm == Arm::A) m = u * m;
  else m = m * u.transpose();
  TwoQubitState out;
  out.amplitudes << m(0, 0), m(0, 1), m(1, 0), m(1, 1);
  return out;
}

std::vector<TimePs> generate_emission_times(const BiphotonSource& src, double duration_s,
                                            std::uint64_t seed) {
  if (!(duration_s > 0.0)) throw Error(ErrorCode::Precondition, "duration must be positive");
  if (!(src.pair_rate_hz > 0.0)) throw Error(ErrorCode::Precondition, "pair rate must be positive");
  return kernels::poisson_times(src.pair_rate_hz, duration_s, seed);
}

PairStream generate_pairs(const BiphotonSource& src, double duration_s, std::uint64_t seed) {
  const auto times = generate_emission_times(src, duration_s, seed);
  PairStream out(times.size());
  const TwoQubitState raw = TwoQubitState::raw_pair();
  for (std::size_t i = 0; i < times.size(); ++i) {
    out[i].emitted_ps = times[i];
    out[i].arrival_ps[0] = out[i].arrival_ps[1] = times[i];
    out[i].state = raw;
  }
  return out;
}

PairStream prepare(const PairStream& pairs, PrepareMode mode, Rng& rng, const PrepareOptions& opts) {
  PairStream out;
  out.reserve(mode == PrepareMode::Entangled ? pairs.size() / 2 + 1 : pairs.size());
  TwoQubitState heralded_state;
  heralded_state.amplitudes(2) = 1.0;  // |VH>: herald V on arm A, signal H on arm B
  const TwoQubitState entangled = TwoQubitState::psi_plus();
  for (const auto& p : pairs) {
    PhotonPair q = p;
    if (mode == PrepareMode::Entangled) {
      if (!bernoulli(rng, opts.postselect_probability)) continue;
      q.state = entangled;
    } else {
      q.state = heralded_state;
      q.heralded = true;
    }
    if (opts.heralding_efficiency < 1.0) {
      q.present[0] = q.present[0] && bernoulli(rng, opts.heralding_efficiency);
      q.present[1] = q.present[1] && bernoulli(rng, opts.heralding_efficiency);
    }
    out.push_back(q);
  }
  return out;
}

double db_to_transmittance(double loss_db) { return std::pow(10.0, -loss_db / 10.0); }

double ChannelModel::transmittance() const { return db_to_transmittance(loss_db); }

ChannelModel ChannelModel::from_path(const topology::OpticalPath& path) {
  ChannelModel ch;
  ch.loss_db = path.total_loss_db();
  ch.rotation = path.net_rotation();
  ch.latency_ps = static_cast<TimePs>(std::llround(path.total_length_km() * 1000.0 * kFiberPsPerMetre));
  return ch;
}

void propagate(PairStream& stream, const ChannelModel& ch, Arm arm, Rng& rng) {
  const int k = static_cast<int>(arm);
  const double t = ch.transmittance();
  const bool rotate = !ch.rotation.isIdentity(0.0);
  for (auto& p : stream) {
    if (!p.present[k]) continue;
    if (t < 1.0 && !bernoulli(rng, t)) {
      p.present[k] = false;
      continue;
    }
    if (rotate) p.state = p.state.rotated(ch.rotation, arm);
    p.arrival_ps[k] += ch.latency_ps;
  }
}

Eigen::Vector2cd analyzer_state(double angle, int bit) {
  const double c = std::cos(angle), s = std::sin(angle);
  return bit == 0 ? Eigen::Vector2cd(c, s) : Eigen::Vector2cd(-s, c);
}

std::array<std::array<double, 2>, 2> born_probabilities(const TwoQubitState& s, double angle_a,
                                                        double angle_b) {
  std::array<std::array<double, 2>, 2> p{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const Vec4 proj = TwoQubitState::product(analyzer_state(angle_a, i), analyzer_state(angle_b, j)).amplitudes;
      p[i][j] = std::norm(proj.dot(s.amplitudes));
    }
  return p;
}

double marginal_probability(const TwoQubitState& s, Arm arm, double angle, int bit) {
  double sum = 0.0;
  for (int other = 0; other < 2; ++other) {
    const auto pa = arm == Arm::A ? analyzer_state(angle, bit) : analyzer_state(0.0, other);
    const auto pb = arm == Arm::A ? analyzer_state(0.0, other) : analyzer_state(angle, bit);
    sum += std::norm(TwoQubitState::product(pa, pb).amplitudes.dot(s.amplitudes));
  }
  return sum;
}

namespace {

JointOutcome sample_outcome(const PhotonPair& p, double angle_a, double angle_b, Rng& rng) {
  JointOutcome o;
  if (p.present[0] && p.present[1]) {
    const auto pr = born_probabilities(p.state, angle_a, angle_b);
    const double u = uniform01(rng);
    double acc = 0.0;
    for (int k = 0; k < 4; ++k) {
      acc += pr[k / 2][k % 2];
      if (u < acc || k == 3) {
        o.bit[0] = static_cast<std::int8_t>(k / 2);
        o.bit[1] = static_cast<std::int8_t>(k % 2);
        break;
      }
    }
  } else if (p.present[0]) {
    o.bit[0] = uniform01(rng) < marginal_probability(p.state, Arm::A, angle_a, 0) ? 0 : 1;
  } else if (p.present[1]) {
    o.bit[1] = uniform01(rng) < marginal_probability(p.state, Arm::B, angle_b, 0) ? 0 : 1;
  }
  return o;
}

}  // namespace

std::vector<JointOutcome> measure(const PairStream& stream, double angle_a, double angle_b, Rng& rng) {
  std::vector<JointOutcome> out;
  out.reserve(stream.size());
  for (const auto& p : stream) out.push_back(sample_outcome(p, angle_a, angle_b, rng));
  return out;
}

std::vector<JointOutcome> measure(const PairStream& stream, std::span<const double> angles_a,
                                  std::span<const double> angles_b, Rng& rng) {
  if (angles_a.size() != stream.size() || angles_b.size() != stream.size())
    throw Error(ErrorCode::Precondition, "one analyzer angle per pair is required");
  std::vector<JointOutcome> out;
  out.reserve(stream.size());
  for (std::size_t i = 0; i < stream.size(); ++i)
    out.push_back(sample_outcome(stream[i], angles_a[i], angles_b[i], rng));
  return out;
}

namespace {

bool event_less(const DetectionEvent& x, const DetectionEvent& y) {
  if (x.time_ps != y.time_ps) return x.time_ps < y.time_ps;
  if (x.node != y.node) return x.node < y.node;
  return x.channel < y.channel;
}

}  // namespace

EventStream apply_dead_time(const EventStream& events, double dead_time_ps) {
  if (dead_time_ps <= 0.0) return events;
  EventStream out;
  out.reserve(events.size());
  std::map<std::pair<int, int>, TimePs> last;
  for (const auto& e : events) {
    const auto key = std::pair{int(e.node), int(e.channel)};
    auto it = last.find(key);
    if (it != last.end() && static_cast<double>(e.time_ps - it->second) < dead_time_ps) continue;
    last[key] = e.time_ps;
    out.push_back(e);
  }
  return out;
}

EventStream detect(const EventStream& arrivals, const DetectorModel& det, double duration_s,
                   std::span<const DarkChannel> dark_channels, Rng& rng, TimePs window_start_ps) {
  EventStream out;
  out.reserve(arrivals.size() + 16);
  std::normal_distribution<double> jitter(0.0, det.jitter_sigma_ps > 0 ? det.jitter_sigma_ps : 1.0);
  for (const auto& a : arrivals) {
    if (det.efficiency < 1.0 && !bernoulli(rng, det.efficiency)) continue;
    DetectionEvent e = a;
    if (det.jitter_sigma_ps > 0.0) {
      e.time_ps += static_cast<TimePs>(std::nearbyint(jitter(rng)));
      if (e.time_ps < 0) e.time_ps = 0;
    }
    out.push_back(e);
  }
  if (det.dark_count_hz > 0.0 && duration_s > 0.0) {
    const double duration_ps = duration_s * kPsPerSecond;
    for (const auto& ch : dark_channels) {
      const auto n = std::poisson_distribution<std::int64_t>(det.dark_count_hz * duration_s)(rng);
      for (std::int64_t k = 0; k < n; ++k)
        out.push_back({ch.node, ch.channel, Origin::Dark,
                       window_start_ps + static_cast<TimePs>(uniform01(rng) * duration_ps)});
    }
  }
  std::stable_sort(out.begin(), out.end(), event_less);
  return apply_dead_time(out, det.dead_time_ps);
}

ExpectedRates expected_rates(const RateConfig& cfg, double coincidence_window_ps) {
  ExpectedRates r;
  const double post = cfg.mode == PrepareMode::Entangled ? cfg.postselect_probability : 1.0;
  const double h = cfg.source.heralding_efficiency;
  const double base = cfg.source.pair_rate_hz * post;
  double arm_eff[2];
  double ratio[2];
  for (int k = 0; k < 2; ++k) {
    arm_eff[k] = h * db_to_transmittance(cfg.loss_db[k]) * cfg.detector[k].efficiency;
    const double raw = base * arm_eff[k] + cfg.detector[k].dark_count_hz * cfg.dark_channels[k];
    const double tau = cfg.detector[k].dead_time_ps / kPsPerSecond;
    r.singles_hz[k] = raw / (1.0 + raw * tau);
    ratio[k] = raw > 0 ? r.singles_hz[k] / raw : 1.0;
  }
  const double sigma = std::hypot(cfg.detector[0].jitter_sigma_ps, cfg.detector[1].jitter_sigma_ps);
  const double within =
      sigma > 0 ? std::erf(coincidence_window_ps / 2.0 / (sigma * std::numbers::sqrt2)) : 1.0;
  r.coincidences_hz = base * arm_eff[0] * arm_eff[1] * ratio[0] * ratio[1] * within;
  r.accidentals_hz = r.singles_hz[0] * r.singles_hz[1] * coincidence_window_ps / kPsPerSecond;
  return r;
}

}  // namespace qnet::optics
