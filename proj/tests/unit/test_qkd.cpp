#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "qnet/qkd.hpp"

using namespace qnet;
using namespace qnet::qkd;

namespace {

constexpr double kPi = std::numbers::pi;

Bbm92Config session_config(std::uint64_t target, double rect_misalignment = 0.0) {
  optics::ChannelModel a, b;
  a.latency_ps = 30'000;
  b.latency_ps = 75'000;
  Bbm92Config cfg;
  cfg.link = bbm92_link(1, 7, a, b);
  cfg.link.receiver[1].basis_angle[0] = rect_misalignment;
  cfg.target_coincidences = target;
  return cfg;
}

Bits random_bits(oracle::Rng& rng, std::size_t n) {
  Bits v(n);
  for (auto& b : v) b = static_cast<std::uint8_t>(rng() & 1);
  return v;
}

/// Expected sifted error rate with B's rectilinear analyzer off by theta:
/// equal outcomes in the rectilinear basis, none in the diagonal one.
double born_qber(double theta) {
  const double rect = oracle::psi_plus_joint(0.0, theta, 0, 0) + oracle::psi_plus_joint(0.0, theta, 1, 1);
  const double diag = oracle::psi_plus_joint(kPi / 4, -kPi / 4, 0, 0) + oracle::psi_plus_joint(kPi / 4, -kPi / 4, 1, 1);
  return 0.5 * (rect + diag);
}

}  // namespace

TEST_CASE("noiseless aligned run is anticorrelated in matching bases") {
  const auto raw = run_bbm92(session_config(10000), 1);
  REQUIRE(raw.size() == 10000);
  std::size_t matching = 0, equal = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw.bases_a[i] != raw.bases_b[i]) continue;
    ++matching;
    equal += raw.bits_a[i] == raw.bits_b[i];
  }
  CHECK(equal == 0);
  CHECK(oracle::within_sigma(double(matching), 5000.0, std::sqrt(2500.0), 4.0));
}

TEST_CASE("blocked arm times out") {
  auto cfg = session_config(100);
  cfg.link.channel[1].loss_db = 300.0;
  cfg.timeout_s = 0.2;
  try {
    run_bbm92(cfg, 2);
    FAIL("expected E_TIMEOUT");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Timeout);
  }
}

TEST_CASE("same seed gives the same transcript") {
  const auto cfg = session_config(3000);
  const auto x = transcript(run_session(cfg, 42));
  const auto y = transcript(run_session(cfg, 42));
  CHECK(x.dump() == y.dump());
  CHECK(x != transcript(run_session(cfg, 43)));
}

TEST_CASE("sift examples") {
  const Bits same{0, 1, 1, 0, 1};
  const Bits bits_a{0, 1, 0, 1, 1}, bits_b{1, 0, 1, 0, 0};
  const auto all = sift(same, same, bits_a, bits_b);
  CHECK(all.key.size() == 5);
  CHECK(all.key.a == all.key.b);
  const Bits other{1, 0, 0, 1, 0};
  CHECK(sift(same, other, bits_a, bits_b).key.size() == 0);
  CHECK_THROWS_AS(sift(same, other, bits_a, Bits{1}), Error);

  oracle::Rng rng(5);
  const std::size_t n = 10000;
  const auto ba = random_bits(rng, n), bb = random_bits(rng, n), xa = random_bits(rng, n), xb = random_bits(rng, n);
  const auto r = sift(ba, bb, xa, xb);
  CHECK(oracle::within_sigma(double(r.key.size()) / n, 0.5, std::sqrt(0.25 / n), 4.0));
  std::size_t mask_ones = 0;
  for (auto m : r.mask) mask_ones += m;
  CHECK(mask_ones == r.key.size());
}

TEST_CASE("qber estimate") {
  oracle::Rng data(6);
  Rng rng(6);
  KeyPair same{random_bits(data, 2000), {}};
  same.b = same.a;
  const auto e = estimate_qber(same, 0.1, rng);
  CHECK(e.q == 0.0);
  CHECK(e.disclosed.size() == 200);
  CHECK(e.remaining.size() == 1800);

  KeyPair noise{random_bits(data, 20000), random_bits(data, 20000)};
  const auto r = estimate_qber(noise, 0.5, rng);
  CHECK(oracle::within_sigma(r.q, 0.5, std::sqrt(0.25 / 10000), 4.0));

  CHECK_THROWS_AS(estimate_qber(KeyPair{}, 0.1, rng), Error);
  CHECK_THROWS_AS(estimate_qber(same, 1.0, rng), Error);
}

TEST_CASE("misalignment in one basis follows the Born prediction") {
  for (double deg : {5.0, 10.0, 15.0}) {
    const double theta = deg * kPi / 180.0;
    const auto raw = run_bbm92(session_config(20000, theta), 100 + static_cast<int>(deg));
    const auto s = sift(raw.bases_a, raw.bases_b, raw.bits_a, raw.bits_b);
    std::size_t errors = 0;
    for (std::size_t i = 0; i < s.key.size(); ++i) errors += s.key.a[i] != s.key.b[i];
    const double n = double(s.key.size());
    const double q = double(errors) / n;
    const double p = born_qber(theta);
    CHECK(oracle::within_sigma(q, p, std::sqrt(p * (1 - p) / n), 4.0));
  }
  CHECK(born_qber(10.0 * kPi / 180.0) == doctest::Approx(0.0151).epsilon(0.01));
}

TEST_CASE("final key length formula") {
  const double h = oracle::binary_entropy(0.05);
  const auto expected = static_cast<std::size_t>(std::floor(1e4 * (1.0 - 2.0 * h)));
  CHECK(final_key_length(10000, 0.05) == expected);
  CHECK(final_key_length(10000, 0.05) == 4272);
  CHECK(final_key_length(10000, 0.0) == 10000);
  CHECK(final_key_length(10000, 0.111) == 0);
  CHECK(binary_entropy(0.11) == doctest::Approx(oracle::binary_entropy(0.11)));
  double prev = 2.0;
  for (int i = 0; i <= 100; ++i) {
    const double q = 0.001 * i;
    const double f = double(final_key_length(1'000'000, q)) / 1e6;
    CHECK(f <= prev);
    prev = f;
  }
}

TEST_CASE("distill examples") {
  oracle::Rng data(12);
  KeyPair clean{random_bits(data, 5000), {}};
  clean.b = clean.a;
  const auto r = distill(clean, 0.0, 1);
  CHECK(r.key_a == r.key_b);
  CHECK(r.n_ec == 5000 - r.reconcile.parity_bits);
  CHECK(r.key_a.size() == r.n_ec);
  CHECK(r.reconcile.corrected == 0);
  try {
    distill(clean, 0.12, 1);
    FAIL("expected E_ABORT_QBER");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AbortQber);
  }
  CHECK_THROWS_AS(distill(clean, 0.11, 1), Error);
}

TEST_CASE("distilled keys agree and look balanced") {
  oracle::Rng data(13);
  std::uniform_real_distribution<double> qd(0.0, 0.10);
  std::size_t ones = 0, total = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const double q = qd(data);
    KeyPair k{random_bits(data, 8000), {}};
    k.b = k.a;
    std::bernoulli_distribution flip(q);
    for (auto& b : k.b) b ^= flip(data) ? 1 : 0;
    const auto r = distill(k, q, 1000 + trial);
    REQUIRE(r.key_a == r.key_b);
    CHECK(r.key_a.size() == final_key_length(r.n_ec, q));
    for (auto b : r.key_a) ones += b;
    total += r.key_a.size();
  }
  REQUIRE(total > 0);
  CHECK(std::abs(double(ones) / double(total) - 0.5) <= 4.0 * std::sqrt(0.25 / double(total)));
}

TEST_CASE("end-to-end key fraction falls with misalignment") {
  double prev = 2.0;
  for (double deg : {0.0, 10.0, 20.0, 25.0}) {
    const auto rep = run_session(session_config(20000, deg * kPi / 180.0), 7);
    REQUIRE_FALSE(rep.aborted);
    CHECK(rep.distilled.key_a == rep.distilled.key_b);
    const double f = double(rep.distilled.key_a.size()) / double(rep.estimate.remaining.size());
    CHECK(f < prev);
    prev = f;
  }
}

TEST_CASE("trusted relay") {
  oracle::Rng rng(14);
  const auto k1 = random_bits(rng, 256), k2 = random_bits(rng, 256);
  const auto one = relay_key(k1, {}, k2);
  REQUIRE(one.published.size() == 1);
  for (std::size_t i = 0; i < k1.size(); ++i) CHECK(one.published[0][i] == (k1[i] ^ k2[i]));
  CHECK(one.key_at_b == k1);

  // Three hubs: A-H1, H1-H2, H2-H3, H3-B.
  const std::vector<Bits> chain{random_bits(rng, 256), random_bits(rng, 256)};
  const auto kb = random_bits(rng, 256);
  const auto three = relay_key(k1, chain, kb);
  CHECK(three.published.size() == 3);
  Bits oracle_b = kb;
  for (const auto& p : three.published)
    for (std::size_t i = 0; i < oracle_b.size(); ++i) oracle_b[i] ^= p[i];
  CHECK(oracle_b == k1);
  CHECK(three.key_at_a == three.key_at_b);
  for (const auto& p : three.published) CHECK(p != k1);

  const std::vector<Bits> short_chain{random_bits(rng, 100)};
  try {
    relay_key(k1, short_chain, kb);
    FAIL("expected E_LENGTH");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Length);
  }
}

TEST_CASE("ring relay path takes the shorter way") {
  CHECK(ring_relay_path(5, 0, 2) == std::vector<int>{0, 1, 2});
  CHECK(ring_relay_path(5, 0, 3) == std::vector<int>{0, 4, 3});
  CHECK(ring_relay_path(4, 1, 3) == std::vector<int>{1, 2, 3});
  CHECK(ring_relay_path(3, 2, 2) == std::vector<int>{2});
}

TEST_CASE("transcript carries the digest, not the key") {
  const auto rep = run_session(session_config(4000), 3);
  const auto j = transcript(rep);
  CHECK(j.at("keys_match").get<bool>());
  CHECK(j.at("key_digest_a") == key_digest(rep.distilled.key_a));
  CHECK(j.at("key_digest_a").get<std::string>().size() == 64);
  CHECK(j.at("sift_mask").get<std::string>().size() == 4000);
  CHECK(j.at("disclosed").size() == rep.estimate.disclosed.size());
  CHECK_FALSE(j.contains("key"));
}

TEST_CASE("rate table") {
  const std::vector<double> qs{0.0, 0.05, 0.12};
  const auto rows = key_rate_table(10000, qs);
  CHECK(rows[0].final_bits == 10000);
  CHECK(rows[1].final_bits == 4272);
  CHECK(rows[2].final_bits == 0);
  const auto text = format_rate_table(rows);
  CHECK(text.find("0.0500") != std::string::npos);
  CHECK(text.find("4272") != std::string::npos);
}
