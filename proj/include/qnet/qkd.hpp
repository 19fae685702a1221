#pragma once

// BBM92 key distribution between two endpoints and trusted-relay key
// forwarding between hubs.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qnet/link_sim.hpp"

namespace qnet::qkd {

using Bits = std::vector<std::uint8_t>;
using optics::TimePs;

inline constexpr double kAbortQber = 0.11;

struct Bbm92Config {
  optics::LinkConfig link;
  std::uint64_t target_coincidences = 10000;
  /// Simulated time per batch and the limit before E_TIMEOUT.
  double batch_s = 0.05;
  double timeout_s = 10.0;
  TimePs window_ps = 1000;
};

/// Link with Bbm92 receivers on nodes a and b using channels 0-3.
optics::LinkConfig bbm92_link(std::uint8_t node_a, std::uint8_t node_b, const optics::ChannelModel& channel_a,
                              const optics::ChannelModel& channel_b);

/// One record per matched coincidence.
struct RawData {
  Bits bases_a, bases_b;
  Bits bits_a, bits_b;
  std::vector<TimePs> times_a;
  double elapsed_s = 0.0;

  std::size_t size() const { return bits_a.size(); }
};

/// Runs the link in batches and matches A and B detections with the
/// timing correlator until the target is reached. Throws E_TIMEOUT.
RawData run_bbm92(const Bbm92Config& cfg, std::uint64_t seed);

struct KeyPair {
  Bits a, b;
  std::size_t size() const { return a.size(); }
};

struct SiftResult {
  KeyPair key;
  std::vector<std::uint8_t> mask;
};

/// Keeps matching-basis positions and flips B's bits.
SiftResult sift(std::span<const std::uint8_t> bases_a, std::span<const std::uint8_t> bases_b,
                std::span<const std::uint8_t> bits_a, std::span<const std::uint8_t> bits_b);

struct QberEstimate {
  double q = 0.0;
  std::vector<std::size_t> disclosed;
  KeyPair remaining;
};

/// Throws E_EMPTY for an empty key and E_PRECONDITION unless
/// 0 < sample_fraction < 1.
QberEstimate estimate_qber(const KeyPair& sifted, double sample_fraction, Rng& rng);

double binary_entropy(double q);
/// floor(n_ec * (1 - 2 h2(q))), clamped at zero.
std::size_t final_key_length(std::size_t n_ec, double q);

struct ReconcileStats {
  std::size_t parity_bits = 0;
  std::size_t corrected = 0;
  int passes = 0;
};

/// Parity bisection over shuffled blocks, then 64 random-subset parity
/// checks. B's copy is corrected in place. Throws E_RECONCILE when the
/// checks still fail after the pass budget.
ReconcileStats reconcile(KeyPair& keys, double q, std::uint64_t seed, int max_passes = 16);

struct DistillResult {
  Bits key_a, key_b;
  std::size_t n_ec = 0;
  ReconcileStats reconcile;
};

/// Throws E_ABORT_QBER when q >= 0.11. n_ec is the key length after the
/// disclosed parity bits are deducted.
DistillResult distill(const KeyPair& sifted, double q, std::uint64_t seed);

struct RelayResult {
  std::vector<Bits> published;
  Bits key_at_a;
  Bits key_at_b;
};

/// key_a: endpoint A with the first hub; chain: consecutive hub-hub keys;
/// key_b: last hub with endpoint B. Each hub publishes left XOR right.
/// Throws E_LENGTH when the keys differ in length.
RelayResult relay_key(const Bits& key_a, std::span<const Bits> chain, const Bits& key_b);

/// Hubs visited from `from` to `to` around the ring, the shorter way,
/// ties going forward.
std::vector<int> ring_relay_path(int hub_count, int from, int to);

Bits xor_bits(const Bits& x, const Bits& y);
std::string key_digest(const Bits& key);

struct SessionOptions {
  double sample_fraction = 0.1;
};

struct SessionReport {
  RawData raw;
  SiftResult sifted;
  QberEstimate estimate;
  DistillResult distilled;
  bool aborted = false;
};

/// run_bbm92 -> sift -> estimate_qber -> distill. An abort is recorded,
/// not thrown.
SessionReport run_session(const Bbm92Config& cfg, std::uint64_t seed, const SessionOptions& opts = {});

/// Bases, sift mask, disclosed indices, q and the final-key digest.
nlohmann::json transcript(const SessionReport& report);

struct RateRow {
  double q = 0.0;
  std::size_t sifted = 0;
  std::size_t final_bits = 0;
  double fraction = 0.0;
};

std::vector<RateRow> key_rate_table(std::size_t sifted, std::span<const double> qs);
std::string format_rate_table(std::span<const RateRow> rows);

}  // namespace qnet::qkd
