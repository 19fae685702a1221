#include <doctest.h>

#include <cmath>
#include <numbers>

#include <omp.h>

#include "oracles.hpp"
#include "qnet/kernels.hpp"
#include "qnet/link_sim.hpp"
#include "qnet/optics.hpp"
#include "qnet/tagio.hpp"

using namespace qnet;
using namespace qnet::optics;

namespace {

constexpr double kPi = std::numbers::pi;

PairStream pairs_with_state(std::size_t n, const TwoQubitState& s) {
  PairStream out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].emitted_ps = static_cast<TimePs>(i) * 1000;
    out[i].arrival_ps[0] = out[i].arrival_ps[1] = out[i].emitted_ps;
    out[i].state = s;
  }
  return out;
}

}  // namespace

TEST_CASE("pair emission count follows Poisson statistics") {
  BiphotonSource src;
  src.pair_rate_hz = 1e5;
  const auto pairs = generate_pairs(src, 1.0, 11);
  CHECK(oracle::within_sigma(double(pairs.size()), 1e5, std::sqrt(1e5), 3.0));
  for (const auto& p : pairs) CHECK_MESSAGE(p.state.amplitudes(1) == Complex(1.0), "raw pairs are |HV>");
  CHECK(std::is_sorted(pairs.begin(), pairs.end(),
                       [](const PhotonPair& x, const PhotonPair& y) { return x.emitted_ps < y.emitted_ps; }));
}

TEST_CASE("emission rejects a non-positive duration") {
  CHECK_THROWS_AS(generate_pairs(BiphotonSource{}, 0.0, 1), Error);
}

TEST_CASE("emission is deterministic and independent of thread count") {
  const auto a = kernels::poisson_times(3e5, 0.5, 99);
  omp_set_num_threads(1);
  const auto b = kernels::poisson_times(3e5, 0.5, 99);
  omp_set_num_threads(4);
  const auto c = kernels::poisson_times(3e5, 0.5, 99);
  CHECK(a == b);
  CHECK(a == c);
  CHECK(a == serial::poisson_times(3e5, 0.5, 99));
  CHECK(a != kernels::poisson_times(3e5, 0.5, 100));
}

TEST_CASE("emission interarrival times are exponential") {
  const auto t = kernels::poisson_times(1e5, 1.0, 5);
  // Fraction of gaps longer than the mean gap should be exp(-1).
  std::size_t longer = 0;
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] - t[i - 1] > 10'000'000) ++longer;
  const double n = double(t.size() - 1);
  const double p = std::exp(-1.0);
  CHECK(oracle::within_sigma(double(longer), n * p, std::sqrt(n * p * (1 - p)), 4.0));
}

TEST_CASE("entangled preparation keeps the split cases") {
  // Two photons each leave one of two beamsplitter ports: four equally likely
  // cases, two of which put one photon on each arm.
  int kept_cases = 0;
  for (int pa = 0; pa < 2; ++pa)
    for (int pb = 0; pb < 2; ++pb) kept_cases += pa != pb;
  const double p_keep = kept_cases / 4.0;

  const std::size_t n = 100000;
  const auto pairs = pairs_with_state(n, TwoQubitState::raw_pair());
  Rng rng(3);
  const auto out = prepare(pairs, PrepareMode::Entangled, rng);
  CHECK(oracle::within_sigma(double(out.size()), n * p_keep, std::sqrt(n * p_keep * (1 - p_keep)), 4.0));
  const double r = 1.0 / std::sqrt(2.0);
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(std::abs(out[i].state.amplitudes(0)) < 1e-15);
    CHECK(std::abs(out[i].state.amplitudes(1) - r) < 1e-15);
    CHECK(std::abs(out[i].state.amplitudes(2) - r) < 1e-15);
    CHECK(std::abs(out[i].state.amplitudes(3)) < 1e-15);
  }
}

TEST_CASE("heralded preparation keeps every pair") {
  const auto pairs = pairs_with_state(1000, TwoQubitState::raw_pair());
  Rng rng(4);
  const auto out = prepare(pairs, PrepareMode::Heralded, rng);
  CHECK(out.size() == 1000);
  for (const auto& p : out) {
    CHECK(p.heralded);
    CHECK(std::abs(p.state.amplitudes(2)) == doctest::Approx(1.0));
  }
  CHECK(prepare(PairStream{}, PrepareMode::Entangled, rng).empty());
}

TEST_CASE("propagation loss thins by the transmittance") {
  const std::size_t n = 100000;
  auto pairs = pairs_with_state(n, TwoQubitState::psi_plus());
  ChannelModel ch;
  ch.loss_db = 3.0103;
  Rng rng(5);
  propagate(pairs, ch, Arm::A, rng);
  std::size_t alive = 0;
  for (const auto& p : pairs) alive += p.present[0];
  const double t = std::pow(10.0, -0.30103);
  CHECK(oracle::within_sigma(double(alive), n * t, std::sqrt(n * t * (1 - t)), 3.0));
}

TEST_CASE("lossless identity channel changes nothing") {
  auto pairs = pairs_with_state(100, TwoQubitState::psi_plus());
  const auto before = pairs;
  Rng rng(6);
  propagate(pairs, ChannelModel{}, Arm::B, rng);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(pairs[i].present[1]);
    CHECK(pairs[i].state.amplitudes == before[i].state.amplitudes);
    CHECK(pairs[i].arrival_ps[1] == before[i].arrival_ps[1]);
  }
}

TEST_CASE("a quarter-turn rotator on arm A maps psi-plus as expected") {
  // |H> -> |V>, |V> -> -|H>, so (HV + VH)/sqrt2 -> (VV - HH)/sqrt2.
  Mat2 r;
  r << 0, -1, 1, 0;
  const auto out = TwoQubitState::psi_plus().rotated(r, Arm::A);
  Vec4 expected;
  expected << -1 / std::sqrt(2.0), 0, 0, 1 / std::sqrt(2.0);
  CHECK(std::abs(std::abs(expected.dot(out.amplitudes)) - 1.0) < 1e-12);
  CHECK((polarization_rotator(kPi / 2) - r).norm() < 1e-12);
}

TEST_CASE("rotations preserve the state norm") {
  oracle::Rng rng(8);
  std::normal_distribution<double> g(0.0, 2.0);
  auto s = TwoQubitState::psi_plus();
  for (int i = 0; i < 2000; ++i) {
    s = s.rotated(stokes_rotation(Vec3(g(rng), g(rng), g(rng))), i % 2 ? Arm::A : Arm::B);
    CHECK(std::abs(s.norm() - 1.0) < 1e-9);
  }
}

TEST_CASE("Born probabilities agree with the closed form for psi-plus") {
  oracle::Rng rng(9);
  std::uniform_real_distribution<double> ang(-kPi, kPi);
  for (int i = 0; i < 200; ++i) {
    const double a = ang(rng), b = ang(rng);
    const auto p = born_probabilities(TwoQubitState::psi_plus(), a, b);
    for (int x = 0; x < 2; ++x)
      for (int y = 0; y < 2; ++y) CHECK(p[x][y] == doctest::Approx(oracle::psi_plus_joint(a, b, x, y)).epsilon(1e-12));
  }
}

TEST_CASE("psi-plus is anticorrelated at equal rectilinear analyzers") {
  const auto pairs = pairs_with_state(20000, TwoQubitState::psi_plus());
  Rng rng(10);
  for (const auto& o : measure(pairs, 0.0, 0.0, rng)) CHECK(o.bit[0] != o.bit[1]);
}

TEST_CASE("psi-plus at bases (0, pi/4) agrees half the time") {
  const std::size_t n = 40000;
  const auto pairs = pairs_with_state(n, TwoQubitState::psi_plus());
  Rng rng(11);
  std::size_t equal = 0;
  std::size_t counts[2][2] = {};
  for (const auto& o : measure(pairs, 0.0, kPi / 4, rng)) {
    equal += o.bit[0] == o.bit[1];
    ++counts[o.bit[0]][o.bit[1]];
  }
  CHECK(oracle::within_sigma(double(equal), n / 2.0, std::sqrt(n * 0.25), 4.0));
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y) {
      const double p = oracle::psi_plus_joint(0.0, kPi / 4, x, y);
      CHECK(oracle::within_sigma(double(counts[x][y]), n * p, std::sqrt(n * p * (1 - p)), 4.0));
    }
}

TEST_CASE("a product state gives a fixed outcome") {
  const auto hh = TwoQubitState::product(Eigen::Vector2cd(1, 0), Eigen::Vector2cd(1, 0));
  const auto pairs = pairs_with_state(500, hh);
  Rng rng(12);
  for (const auto& o : measure(pairs, 0.0, 0.0, rng)) {
    CHECK(o.bit[0] == 0);
    CHECK(o.bit[1] == 0);
  }
}

TEST_CASE("noiseless fringe visibility") {
  const std::size_t n = 20000;
  const auto pairs = pairs_with_state(n, TwoQubitState::psi_plus());
  Rng rng(13);
  double lo = 1e300, hi = 0;
  for (int step = 0; step <= 8; ++step) {
    const double b = step * kPi / 8;
    std::size_t both_zero = 0;
    for (const auto& o : measure(pairs, 0.0, b, rng)) both_zero += o.bit[0] == 0 && o.bit[1] == 0;
    lo = std::min(lo, double(both_zero));
    hi = std::max(hi, double(both_zero));
  }
  CHECK((hi - lo) / (hi + lo) >= 0.99);
}

TEST_CASE("detector efficiency thins arrivals") {
  EventStream arrivals;
  for (int i = 0; i < 100000; ++i) arrivals.push_back({0, 0, Origin::Photon, TimePs(i) * 10'000'000});
  DetectorModel det;
  det.efficiency = 0.8;
  Rng rng(14);
  const auto ev = detect(arrivals, det, 1.0, {}, rng);
  CHECK(oracle::within_sigma(double(ev.size()), 8e4, std::sqrt(1e5 * 0.8 * 0.2), 3.0));
}

TEST_CASE("dark counts follow Poisson statistics") {
  DetectorModel det;
  det.dark_count_hz = 1000;
  const DarkChannel ch[] = {{2, 5}};
  Rng rng(15);
  const auto ev = detect({}, det, 1.0, ch, rng);
  CHECK(oracle::within_sigma(double(ev.size()), 1000, std::sqrt(1000.0), 3.0));
  for (const auto& e : ev) {
    CHECK(e.origin == Origin::Dark);
    CHECK(e.node == 2);
    CHECK(e.channel == 5);
  }
}

TEST_CASE("dead time suppresses the second of two close arrivals") {
  DetectorModel det;
  det.dead_time_ps = 100'000;
  const EventStream arrivals{{0, 0, Origin::Photon, 1'000'000}, {0, 0, Origin::Photon, 1'010'000}};
  Rng rng(16);
  const auto ev = detect(arrivals, det, 1.0, {}, rng);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].time_ps == 1'000'000);
}

TEST_CASE("detector output respects dead time and ordering") {
  DetectorModel det;
  det.dead_time_ps = 50'000;
  det.jitter_sigma_ps = 40;
  det.dark_count_hz = 2e4;
  EventStream arrivals;
  oracle::Rng r(17);
  std::uniform_int_distribution<TimePs> gap(1, 200'000);
  TimePs t = 0;
  for (int i = 0; i < 20000; ++i) arrivals.push_back({0, std::uint8_t(i % 3), Origin::Photon, t += gap(r)});
  const DarkChannel dark[] = {{0, 0}, {0, 1}, {0, 2}};
  Rng rng(18);
  const auto ev = detect(arrivals, det, 1.0, dark, rng);
  std::map<int, TimePs> last;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    if (i) CHECK(ev[i - 1].time_ps <= ev[i].time_ps);
    auto it = last.find(ev[i].channel);
    if (it != last.end()) CHECK(ev[i].time_ps - it->second >= 50'000);
    last[ev[i].channel] = ev[i].time_ps;
  }
}

TEST_CASE("expected rate examples") {
  RateConfig cfg;
  cfg.mode = PrepareMode::Heralded;
  cfg.source.pair_rate_hz = 1e5;
  cfg.loss_db[0] = cfg.loss_db[1] = 3.0;
  cfg.detector[0].efficiency = cfg.detector[1].efficiency = 0.8;
  const double arm = std::pow(10.0, -0.3) * 0.8;
  const auto r = expected_rates(cfg, 1000);
  CHECK(r.coincidences_hz == doctest::Approx(1e5 * arm * arm).epsilon(1e-12));
  CHECK(r.coincidences_hz == doctest::Approx(1.607e4).epsilon(1e-3));

  RateConfig unity;
  unity.mode = PrepareMode::Heralded;
  unity.source.pair_rate_hz = 12345;
  CHECK(expected_rates(unity, 1000).coincidences_hz == doctest::Approx(12345));

  RateConfig dark;
  dark.source.pair_rate_hz = 1e-300;
  dark.detector[0].dark_count_hz = dark.detector[1].dark_count_hz = 1e4;
  CHECK(expected_rates(dark, 1000).accidentals_hz == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("expected coincidences never grow with loss") {
  RateConfig cfg;
  double prev = 1e300;
  for (double loss = 0; loss <= 30; loss += 0.25) {
    cfg.loss_db[0] = loss;
    cfg.loss_db[1] = loss / 2;
    const double c = expected_rates(cfg, 1000).coincidences_hz;
    CHECK(c <= prev);
    prev = c;
  }
}

TEST_CASE("simulated link rates agree with the closed form") {
  LinkConfig cfg;
  cfg.source.pair_rate_hz = 2e5;
  cfg.mode = PrepareMode::Entangled;
  cfg.channel[0].loss_db = 2.0;
  cfg.channel[1].loss_db = 5.0;
  cfg.detector[0].efficiency = 0.8;
  cfg.detector[1].efficiency = 0.5;
  cfg.detector[0].dark_count_hz = cfg.detector[1].dark_count_hz = 500;
  cfg.receiver[0] = {ReceiverKind::Bucket, 0, 0};
  cfg.receiver[1] = {ReceiverKind::Bucket, 1, 0};
  cfg.duration_s = 1.0;
  const auto run = simulate_link(cfg, 21);
  const auto exp = expected_rates(rate_config(cfg), 1000);
  for (int k = 0; k < 2; ++k)
    CHECK(oracle::within_sigma(double(run.events[k].size()), exp.singles_hz[k], std::sqrt(exp.singles_hz[k]), 4.0));
  std::vector<TimePs> a, b;
  for (const auto& e : run.events[0]) a.push_back(e.time_ps);
  for (const auto& e : run.events[1]) b.push_back(e.time_ps);
  const double coinc = double(count_coincidences(a, b, 1000, 0));
  const double expect = exp.coincidences_hz + exp.accidentals_hz;
  CHECK(oracle::within_sigma(coinc, expect, std::sqrt(expect), 4.0));
}

TEST_CASE("link simulation is reproducible") {
  LinkConfig cfg;
  cfg.receiver[0] = {ReceiverKind::Bbm92, 0, 0};
  cfg.receiver[1] = {ReceiverKind::Bbm92, 1, 0};
  cfg.detector[0].jitter_sigma_ps = 30;
  cfg.duration_s = 0.1;
  const auto x = simulate_link(cfg, 77);
  const auto y = simulate_link(cfg, 77);
  CHECK(x.events[0] == y.events[0]);
  CHECK(x.events[1] == y.events[1]);
}

TEST_CASE("binary tag records round trip") {
  const EventStream ev{{1, 2, Origin::Photon, 0}, {255, 7, Origin::Dark, 0x0102030405060708LL}};
  const auto bytes = tagio::encode_tags(ev);
  REQUIRE(bytes.size() == 22);
  CHECK(bytes[11] == 255);
  CHECK(bytes[13] == 1);
  CHECK(bytes[14] == 0x08);
  CHECK(bytes[21] == 0x01);
  CHECK(tagio::decode_tags(bytes) == ev);
  CHECK(tagio::from_jsonl(tagio::to_jsonl(ev)) == ev);
  const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 1);
  CHECK_THROWS_AS(tagio::decode_tags(truncated), Error);
  const auto frame = tagio::encode_signal_frame(ev[0]);
  REQUIRE(frame.size() == 15);
  CHECK(frame[0] == 11);
  CHECK(frame[1] == 0);
}
