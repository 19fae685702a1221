#include <doctest.h>

#include <numeric>
#include <set>

#include <omp.h>

#include "oracles.hpp"
#include "qnet/kernels.hpp"
#include "qnet/link_sim.hpp"
#include "qnet/timing.hpp"

using namespace qnet;
using namespace qnet::timing;

namespace {

std::vector<TimePs> poisson(double rate, double seconds, std::uint64_t seed) {
  return kernels::poisson_times(rate, seconds, seed);
}

std::vector<TimePs> random_sorted(oracle::Rng& rng, std::size_t n, TimePs span) {
  std::uniform_int_distribution<TimePs> d(0, span);
  std::vector<TimePs> v(n);
  for (auto& t : v) t = d(rng);
  std::sort(v.begin(), v.end());
  return v;
}

/// Correlated streams: `n` shared events, b shifted by `delay`, plus
/// independent background on both sides.
std::pair<std::vector<TimePs>, std::vector<TimePs>> correlated(double pair_rate, double noise_rate, double seconds,
                                                               TimePs delay, std::uint64_t seed) {
  auto shared = poisson(pair_rate, seconds, seed);
  auto a = shared;
  auto b = shared;
  for (auto& t : b) t += delay;
  const auto na = poisson(noise_rate, seconds, seed + 1000);
  const auto nb = poisson(noise_rate, seconds, seed + 2000);
  a.insert(a.end(), na.begin(), na.end());
  b.insert(b.end(), nb.begin(), nb.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {a, b};
}

}  // namespace

TEST_CASE("correlate small examples") {
  const std::vector<TimePs> a1{100}, b1{100};
  CHECK(correlate(a1, b1, 1000, 0).count == 1);
  const std::vector<TimePs> a2{0, 2000}, b2{10, 5000};
  const auto c = correlate(a2, b2, 1000, 0);
  REQUIRE(c.count == 1);
  CHECK(c.matches[0] == Match{0, 0});
  // Window edge is inclusive at exactly window/2.
  const std::vector<TimePs> a3{0}, b3{500};
  CHECK(correlate(a3, b3, 1000, 0).count == 1);
  CHECK(correlate(a3, b3, 998, 0).count == 0);
}

TEST_CASE("independent Poisson streams give the accidental rate") {
  const auto a = poisson(1e4, 10.0, 1);
  const auto b = poisson(1e4, 10.0, 2);
  const double expected = 1e4 * 1e4 * 1e-9 * 10.0;
  const double got = double(correlate(a, b, 1000, 0).count);
  CHECK(oracle::within_sigma(got, expected, std::sqrt(expected) + 1.0, 4.0));
}

TEST_CASE("correlate properties on random streams") {
  oracle::Rng rng(31);
  std::uniform_int_distribution<int> size(0, 300);
  std::uniform_int_distribution<TimePs> off(-5000, 5000);
  for (int trial = 0; trial < 400; ++trial) {
    const auto a = random_sorted(rng, size(rng), 200'000);
    const auto b = random_sorted(rng, size(rng), 200'000);
    const TimePs delta = off(rng);
    const TimePs w = 2 * std::uniform_int_distribution<TimePs>(0, 2000)(rng);
    const auto ab = correlate(a, b, w, delta);
    CHECK(ab.count == correlate(b, a, w, -delta).count);
    CHECK(ab.count == count_coincidences(a, b, w, delta));
    std::set<std::size_t> used_a, used_b;
    for (const auto& m : ab.matches) {
      CHECK(used_a.insert(m.index_a).second);
      CHECK(used_b.insert(m.index_b).second);
      CHECK(2 * std::abs(a[m.index_a] - (b[m.index_b] + delta)) <= w);
    }
    CHECK(correlate(a, b, w + 2 + 2 * std::uniform_int_distribution<TimePs>(0, 500)(rng), delta).count >= ab.count);
  }
}

TEST_CASE("delay histogram examples") {
  oracle::Rng rng(32);
  const auto a = random_sorted(rng, 1000, 1'000'000'000);
  auto b = a;
  for (auto& t : b) t += 500'000;
  const auto h = delay_histogram(a, b, 1'000'000, 1000);
  const auto peak = std::max_element(h.begin(), h.end()) - h.begin();
  CHECK(bin_center(peak, 1'000'000, 1000) == 500'000);
  CHECK(h[peak] == 1000);

  const std::vector<TimePs> empty;
  const auto z = delay_histogram(empty, b, 10'000, 1000);
  CHECK(z.size() == 21);
  CHECK(std::accumulate(z.begin(), z.end(), std::uint64_t{0}) == 0);
  CHECK_THROWS_AS(delay_histogram(a, b, 1500, 1000), Error);
}

TEST_CASE("delay histogram counts every in-range cross pair") {
  oracle::Rng rng(33);
  const auto a = random_sorted(rng, 400, 5'000'000);
  const auto b = random_sorted(rng, 400, 5'000'000);
  const TimePs range = 100'000, bin = 5000;
  std::uint64_t brute = 0;
  for (TimePs ta : a)
    for (TimePs tb : b) {
      const TimePs d = tb - ta;
      if (d >= -range - bin / 2 && d < range + bin / 2 + (bin % 2)) ++brute;
    }
  const auto h = delay_histogram(a, b, range, bin);
  CHECK(std::accumulate(h.begin(), h.end(), std::uint64_t{0}) == brute);
  CHECK(h == serial::delay_histogram(a, b, range, bin));
}

TEST_CASE("independent streams give a flat delay histogram") {
  const auto a = poisson(2e4, 5.0, 41);
  const auto b = poisson(2e4, 5.0, 42);
  const auto h = delay_histogram(a, b, 1'000'000, 20'000);
  const double mean = std::accumulate(h.begin(), h.end(), 0.0) / double(h.size());
  double chi2 = 0;
  for (auto c : h) chi2 += (double(c) - mean) * (double(c) - mean) / mean;
  CHECK(oracle::chi_square_p(chi2, int(h.size()) - 1) > 0.001);
}

TEST_CASE("offset recovery examples") {
  const auto [a, b] = correlated(1e3, 1e4, 1.0, 500'000, 51);
  const TimePs est = estimate_offset(a, b, 2'000'000, 100'000);
  CHECK(std::abs(est - (-500'000)) <= 500);
  CHECK(correlate(a, b, 1000, est).count >= 900);

  const auto [c, d] = correlated(1e3, 1e4, 1.0, 0, 52);
  CHECK(std::abs(estimate_offset(c, d, 2'000'000, 100'000)) <= 500);

  const auto x = poisson(1e4, 1.0, 53);
  const auto y = poisson(1e4, 1.0, 54);
  try {
    estimate_offset(x, y, 2'000'000, 100'000);
    FAIL("expected E_NO_PEAK");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoPeak);
  }
}

TEST_CASE("offset recovery over random injected offsets") {
  oracle::Rng rng(61);
  std::uniform_int_distribution<TimePs> inj(-2'000'000, 2'000'000);
  int good = 0;
  const int trials = 40;
  for (int i = 0; i < trials; ++i) {
    const TimePs truth = inj(rng);
    const auto [a, b] = correlated(300, 1e4, 1.0, truth, 100 + i);
    const TimePs est = estimate_offset(a, b, 2'100'000, 100'000);
    good += std::abs(est + truth) <= 500;
  }
  CHECK(good >= trials - 1);
}

TEST_CASE("clock model applies skew then offset") {
  ClockModel c{1000, 10.0};
  CHECK(c.apply(1'000'000'000'000) == 1'000'010'000'000 + 1000);
  CHECK_THROWS_AS((ClockModel{0, 100.0}.check()), Error);
  CHECK_NOTHROW((ClockModel{0, -99.9}.check()));
}

TEST_CASE("count records partition the singles") {
  optics::EventStream ev;
  for (int i = 0; i < 10; ++i) ev.push_back({0, std::uint8_t(i % 2), optics::Origin::Photon, TimePs(i) * 90'000'000'000});
  const auto one = accumulate_counts(ev, 1'000'000'000'000, {}, 1000);
  REQUIRE(one.size() == 1);
  CHECK(one[0].total_singles() == 10);
  CHECK(one[0].coincidences.empty());
  const auto two = accumulate_counts(ev, 500'000'000'000, {}, 1000);
  REQUIRE(two.size() == 2);
  CHECK(two[0].total_singles() + two[1].total_singles() == 10);
}

TEST_CASE("coincidences never exceed the pair's singles") {
  optics::LinkConfig cfg;
  cfg.source.pair_rate_hz = 5e4;
  cfg.receiver[0] = {optics::ReceiverKind::Linear, 0, 0};
  cfg.receiver[1] = {optics::ReceiverKind::Linear, 1, 0};
  cfg.detector[0].dark_count_hz = cfg.detector[1].dark_count_hz = 3e3;
  cfg.channel[1].loss_db = 6;
  cfg.duration_s = 0.5;
  const auto run = optics::simulate_link(cfg, 71);
  optics::EventStream merged = run.events[0];
  merged.insert(merged.end(), run.events[1].begin(), run.events[1].end());
  std::stable_sort(merged.begin(), merged.end(), [](auto& x, auto& y) { return x.time_ps < y.time_ps; });
  CountingPlan plan;
  for (std::uint8_t n = 0; n < 2; ++n)
    for (std::uint8_t c = 0; c < 2; ++c) plan.channels.push_back({n, c});
  for (std::uint8_t x = 0; x < 2; ++x)
    for (std::uint8_t y = 0; y < 2; ++y) plan.pairs.push_back({"p" + std::to_string(2 * x + y), {0, x}, {1, y}, 0});
  plan.interval_ps = 50'000'000'000;
  const auto records = accumulate_counts(merged, plan);
  CHECK(records.size() == 10);
  std::uint64_t singles = 0;
  for (const auto& r : records) {
    singles += r.total_singles();
    for (std::size_t i = 0; i < plan.pairs.size(); ++i)
      CHECK(r.coincidences[i] <= std::min(r.singles.at(plan.pairs[i].a), r.singles.at(plan.pairs[i].b)));
  }
  CHECK(singles == merged.size());

  // Live accumulation in chunks gives the same records.
  CountAccumulator acc(plan);
  std::vector<CountRecord> live;
  const std::size_t chunk = merged.size() / 7 + 1;
  for (std::size_t off = 0; off < merged.size(); off += chunk) {
    const optics::EventStream part(merged.begin() + off, merged.begin() + std::min(merged.size(), off + chunk));
    acc.append(part);
    for (auto& r : acc.close_until(part.back().time_ps)) live.push_back(r);
  }
  for (auto& r : acc.finish(records.back().interval_start_ps + plan.interval_ps)) live.push_back(r);
  CHECK(live == records);

  // Thread count does not change the records.
  omp_set_num_threads(1);
  const auto serial_records = accumulate_counts(merged, plan);
  omp_set_num_threads(4);
  CHECK(serial_records == records);
}

TEST_CASE("entangled run coincidences match the closed form") {
  optics::LinkConfig cfg;
  cfg.source.pair_rate_hz = 1e5;
  cfg.receiver[0] = {optics::ReceiverKind::Bucket, 0, 0};
  cfg.receiver[1] = {optics::ReceiverKind::Bucket, 1, 0};
  cfg.channel[0].loss_db = 1.0;
  cfg.channel[1].loss_db = 4.0;
  cfg.detector[0].efficiency = 0.9;
  cfg.duration_s = 1.0;
  const auto run = optics::simulate_link(cfg, 72);
  optics::EventStream merged = run.events[0];
  merged.insert(merged.end(), run.events[1].begin(), run.events[1].end());
  std::stable_sort(merged.begin(), merged.end(), [](auto& x, auto& y) { return x.time_ps < y.time_ps; });
  const auto rec = accumulate_counts(merged, 1'000'000'000'000, {{"ab", {0, 0}, {1, 0}, 0}}, 1000);
  REQUIRE(rec.size() == 1);
  const auto exp = optics::expected_rates(optics::rate_config(cfg), 1000);
  const double expect = exp.coincidences_hz + exp.accidentals_hz;
  CHECK(oracle::within_sigma(double(rec[0].coincidences[0]), expect, std::sqrt(expect), 4.0));
}

TEST_CASE("histogram csv export") {
  const std::vector<std::uint64_t> h{1, 2, 3};
  CHECK(histogram_csv(h, 10, 10) == "bin_center_ps,count\n-10,1\n0,2\n10,3\n");
}
