#include <doctest.h>

#include <cmath>
#include <numbers>

#include <json.hpp>

#include "oracles.hpp"
#include "qnet/apc.hpp"

using namespace qnet;
using namespace qnet::apc;

namespace {

using C = std::complex<double>;
constexpr double kPi = std::numbers::pi;

// Test-side rotations built from Pauli matrices: Z is S1, X is S2.
Mat2 rz(double a) {
  Mat2 m;
  m << std::exp(C(0, -a / 2)), 0, 0, std::exp(C(0, a / 2));
  return m;
}

Mat2 rx(double a) {
  Mat2 m;
  m << std::cos(a / 2), C(0, -std::sin(a / 2)), C(0, -std::sin(a / 2)), std::cos(a / 2);
  return m;
}

Mat2 haar(oracle::Rng& rng) {
  std::normal_distribution<double> g;
  double q[4];
  double n = 0;
  for (auto& x : q) {
    x = g(rng);
    n += x * x;
  }
  n = std::sqrt(n);
  Mat2 u;
  u << C(q[0], q[1]) / n, C(q[2], q[3]) / n, C(-q[2], q[3]) / n, C(q[0], -q[1]) / n;
  return u;
}

double distance_up_to_phase(const Mat2& a, const Mat2& b) {
  const C tr = (b.adjoint() * a).trace();
  const C phase = std::abs(tr) > 0 ? tr / std::abs(tr) : C(1, 0);
  return (a - phase * b).norm();
}

/// Z-X-Z Euler angles of U, as stage angles with the last X stage at zero.
StageAngles euler_zxz(const Mat2& u) {
  const Mat2 su = u / std::sqrt(u.determinant());
  const C a = su(0, 0), b = su(0, 1);
  const double beta = 2.0 * std::acos(std::min(1.0, std::abs(a)));
  const double sum = -2.0 * std::arg(a);
  const double diff = std::abs(b) > 1e-12 ? -2.0 * (std::arg(b) + kPi / 2) : 0.0;
  const double alpha = (sum + diff) / 2.0;
  const double gamma = (sum - diff) / 2.0;
  return {gamma, beta, alpha, 0.0};
}

double wrong_fraction_oracle(double misalignment) {
  const double s = std::sin(misalignment);
  return s * s;
}

optics::LinkConfig linear_link(double loss_db) {
  optics::LinkConfig cfg;
  cfg.source.pair_rate_hz = 1e5;
  cfg.channel[0].loss_db = cfg.channel[1].loss_db = loss_db;
  cfg.channel[0].latency_ps = 20'000;
  cfg.channel[1].latency_ps = 55'000;
  cfg.receiver[0] = {optics::ReceiverKind::Linear, 1, 0};
  cfg.receiver[1] = {optics::ReceiverKind::Linear, 2, 0};
  return cfg;
}

}  // namespace

TEST_CASE("drift with zero dt or zero rate leaves the channel unchanged") {
  Rng rng(1);
  ChannelModel ch;
  ch.rotation = rx(0.3) * rz(1.1);
  CHECK((apply_drift(ch, 0.0, 0.5, rng).rotation - ch.rotation).norm() == 0.0);
  CHECK((apply_drift(ch, 2.0, 0.0, rng).rotation - ch.rotation).norm() == 0.0);
  CHECK_THROWS_AS(apply_drift(ch, -1.0, 0.1, rng), Error);
}

TEST_CASE("drift angle magnitude follows the half-normal mean") {
  Rng rng(7);
  const double rate = 0.1;
  const int n = 1000;
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    const auto out = apply_drift(ChannelModel{}, 1.0, rate, rng);
    CHECK(is_unitary(out.rotation, 1e-9));
    // Rotation angle from the trace of an SU(2) element.
    const double c = std::clamp(std::abs(out.rotation.trace().real()) / 2.0, 0.0, 1.0);
    sum += 2.0 * std::acos(c);
  }
  const double expected = rate * std::sqrt(2.0 / kPi);
  CHECK(std::abs(sum / n - expected) <= 0.1 * expected);
}

TEST_CASE("drift process is deterministic per seed") {
  DriftProcess x(0.05, 99), y(0.05, 99);
  for (int i = 0; i < 20; ++i) {
    x.step(0.1);
    y.step(0.1);
  }
  CHECK((x.current() - y.current()).norm() == 0.0);
  CHECK(is_unitary(x.current(), 1e-9));
}

TEST_CASE("state wrapping keeps angles and step in range") {
  ApcState s;
  s.stage_angles = {4.0, -4.0, kPi, -kPi};
  s.step_size = 3.0;
  s.wrap();
  for (double a : s.stage_angles) {
    CHECK(a >= -kPi);
    CHECK(a < kPi);
  }
  CHECK(s.step_size == doctest::Approx(kMaxStep));
  s.step_size = 0.0;
  s.wrap();
  CHECK(s.step_size == doctest::Approx(kMinStep));
}

TEST_CASE("correction unitary matches the stage product") {
  CHECK((correction_unitary(StageAngles{}) - Mat2::Identity()).norm() < 1e-12);
  oracle::Rng rng(3);
  std::uniform_real_distribution<double> ang(-kPi, kPi);
  for (int i = 0; i < 500; ++i) {
    const StageAngles a{ang(rng), ang(rng), ang(rng), ang(rng)};
    const Mat2 u = correction_unitary(a);
    CHECK((u.adjoint() * u - Mat2::Identity()).norm() < 1e-9);
    CHECK((u - rx(a[3]) * rz(a[2]) * rx(a[1]) * rz(a[0])).norm() < 1e-12);
    CHECK((u * u.inverse() - Mat2::Identity()).norm() < 1e-9);
  }
}

TEST_CASE("every Haar target is reachable by the four stages") {
  oracle::Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const Mat2 target = haar(rng);
    CHECK(distance_up_to_phase(correction_unitary(euler_zxz(target)), target) < 1e-6);
  }
}

TEST_CASE("analytic error signal") {
  const Mat2 I = Mat2::Identity();
  CHECK(analytic_error_signal(I, I, I) == doctest::Approx(0.0).epsilon(1e-12));
  for (double deg : {10.0, 30.0, 45.0, 60.0}) {
    const double t = deg * kPi / 180.0;
    CHECK(analytic_error_signal(I, polarization_rotator(t), I) == doctest::Approx(wrong_fraction_oracle(t)));
  }
  // The two-basis variant vanishes only when the correction undoes the channel.
  const Mat2 ch = rx(0.4) * rz(0.9);
  CHECK(analytic_error_signal(I, ch, ch.adjoint(), SignalBasis::TwoBasis) < 1e-12);
  CHECK(analytic_error_signal(I, rz(0.8), I, SignalBasis::Rectilinear) < 1e-12);
  CHECK(analytic_error_signal(I, rz(0.8), I, SignalBasis::TwoBasis) > 0.05);
}

TEST_CASE("error fraction needs at least 20 coincidences") {
  CHECK(error_fraction({5, 15}) == doctest::Approx(0.25));
  CHECK_THROWS_AS(error_fraction({3, 16}), Error);
  try {
    error_fraction({0, 0});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Starved);
  }
}

TEST_CASE("simulated signal: aligned, 45 degrees, blocked") {
  SUBCASE("aligned") {
    SimulatedSignal sig(linear_link(0.0), 20.0, 5);
    const double s = sig.sample(Mat2::Identity());
    CHECK(sig.last_coincidences() >= 800);
    CHECK(s <= 0.02);
  }
  SUBCASE("45 degrees") {
    auto cfg = linear_link(0.0);
    cfg.channel[1].rotation = polarization_rotator(kPi / 4);
    SimulatedSignal sig(cfg, 20.0, 6);
    const double s = sig.sample(Mat2::Identity());
    const double n = double(sig.last_coincidences());
    const double p = wrong_fraction_oracle(kPi / 4);
    CHECK(oracle::within_sigma(s, p, std::sqrt(p * (1 - p) / n), 4.0));
  }
  SUBCASE("blocked") {
    SimulatedSignal sig(linear_link(200.0), 20.0, 7);
    try {
      sig.sample(Mat2::Identity());
      FAIL("expected E_STARVED");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Starved);
    }
  }
}

TEST_CASE("stabilize examples") {
  SUBCASE("30 degree start converges") {
    AnalyticSignal sig(Mat2::Identity(), polarization_rotator(kPi / 6));
    ApcState s;
    const auto rep = stabilize(s, sig, 0.02, 500);
    CHECK(rep.converged);
    CHECK(rep.final_signal <= 0.02);
  }
  SUBCASE("already aligned") {
    AnalyticSignal sig(Mat2::Identity(), Mat2::Identity());
    ApcState s;
    const auto rep = stabilize(s, sig, 0.02, 500);
    CHECK(rep.converged);
    CHECK(rep.iters <= 3);
  }
  SUBCASE("zero iterations") {
    AnalyticSignal sig(Mat2::Identity(), polarization_rotator(kPi / 6));
    ApcState s;
    const auto rep = stabilize(s, sig, 0.02, 0);
    CHECK_FALSE(rep.converged);
    CHECK(rep.iters == 0);
  }
  SUBCASE("threshold outside (0, 0.5)") {
    AnalyticSignal sig(Mat2::Identity(), Mat2::Identity());
    ApcState s;
    CHECK_THROWS_AS(stabilize(s, sig, 0.5, 10), Error);
    CHECK_THROWS_AS(stabilize(s, sig, 0.0, 10), Error);
  }
}

TEST_CASE("noiseless stabilize converges from Haar misalignments") {
  oracle::Rng rng(2024);
  int ok = 0;
  for (int i = 0; i < 100; ++i) {
    AnalyticSignal sig(Mat2::Identity(), haar(rng));
    ApcState s;
    const auto rep = stabilize(s, sig, 0.02, 500);
    ok += rep.converged && rep.iters <= 500;
  }
  CHECK(ok >= 99);
}

TEST_CASE("two-basis stabilize converges from Haar misalignments") {
  oracle::Rng rng(77);
  int ok = 0;
  for (int i = 0; i < 100; ++i) {
    AnalyticSignal sig(Mat2::Identity(), haar(rng), SignalBasis::TwoBasis);
    ApcState s;
    ok += stabilize(s, sig, 0.02, 500).converged;
  }
  CHECK(ok >= 99);
}

TEST_CASE("shot-noise stabilize at 1e3 coincidences per sample") {
  oracle::Rng rng(4242);
  int ok = 0;
  for (int i = 0; i < 100; ++i) {
    ShotNoiseSignal sig(Mat2::Identity(), haar(rng), 1000, 1000 + i);
    ApcState s;
    ok += stabilize(s, sig, 0.05, 500).final_signal <= 0.05;
  }
  CHECK(ok >= 95);
}

TEST_CASE("stabilize trace exports as JSON lines") {
  AnalyticSignal sig(Mat2::Identity(), polarization_rotator(0.4));
  ApcState s;
  const auto rep = stabilize(s, sig, 0.02, 500);
  const auto text = to_jsonl(rep);
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("angles").size() == 4);
    CHECK(j.at("iteration").get<int>() == n);
    ++n;
  }
  CHECK(n == static_cast<int>(rep.trace.size()));
}

TEST_CASE("closed loop under drift stays within twice the static residual") {
  ClosedLoopConfig cfg;
  const auto drifting = run_closed_loop(cfg, 5);
  cfg.drift_rate = 0.0;
  const auto still = run_closed_loop(cfg, 5);
  REQUIRE(drifting.signals.size() == 600);
  CHECK(drifting.mean_signal <= 2.0 * still.mean_signal);
}
