#include "qnet/qkd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "qnet/digest.hpp"
#include "qnet/kernels.hpp"
#include "qnet/timing.hpp"

namespace qnet::qkd {

optics::LinkConfig bbm92_link(std::uint8_t node_a, std::uint8_t node_b, const optics::ChannelModel& channel_a,
                              const optics::ChannelModel& channel_b) {
  optics::LinkConfig cfg;
  cfg.mode = optics::PrepareMode::Entangled;
  cfg.channel[0] = channel_a;
  cfg.channel[1] = channel_b;
  cfg.receiver[0] = {optics::ReceiverKind::Bbm92, node_a, 0};
  cfg.receiver[1] = {optics::ReceiverKind::Bbm92, node_b, 0};
  // psi-plus is anticorrelated at analyzer angles (t, -t).
  cfg.receiver[1].basis_angle[1] = -std::numbers::pi / 4;
  return cfg;
}

namespace {

struct Tagged {
  std::vector<TimePs> times;
  std::vector<std::uint8_t> code;  // channel - base
};

Tagged receiver_events(const optics::EventStream& events, const optics::Receiver& r) {
  Tagged t;
  for (const auto& e : events) {
    if (e.node != r.node || e.channel < r.base_channel || e.channel >= r.base_channel + 4) continue;
    t.times.push_back(e.time_ps);
    t.code.push_back(static_cast<std::uint8_t>(e.channel - r.base_channel));
  }
  return t;
}

int parity(const Bits& bits, std::span<const std::size_t> idx, std::size_t lo, std::size_t hi) {
  int p = 0;
  for (std::size_t i = lo; i < hi; ++i) p ^= bits[idx[i]];
  return p;
}

}  // namespace

RawData run_bbm92(const Bbm92Config& cfg, std::uint64_t seed) {
  if (cfg.link.receiver[0].kind != optics::ReceiverKind::Bbm92 || cfg.link.receiver[1].kind != optics::ReceiverKind::Bbm92)
    throw Error(ErrorCode::Precondition, "both receivers must be bbm92");
  if (!(cfg.batch_s > 0.0)) throw Error(ErrorCode::Precondition, "batch length must be positive");
  RawData raw;
  auto link = cfg.link;
  link.duration_s = cfg.batch_s;
  const TimePs batch_ps = static_cast<TimePs>(std::llround(cfg.batch_s * optics::kPsPerSecond));
  const TimePs offset = link.channel[0].latency_ps - link.channel[1].latency_ps;
  const auto batches = static_cast<std::uint64_t>(std::ceil(cfg.timeout_s / cfg.batch_s - 1e-9));
  for (std::uint64_t k = 0; k < batches && raw.size() < cfg.target_coincidences; ++k) {
    link.start_ps = cfg.link.start_ps + static_cast<TimePs>(k) * batch_ps;
    const auto run = optics::simulate_link(link, derive_seed(seed, k));
    const auto a = receiver_events(run.events[0], link.receiver[0]);
    const auto b = receiver_events(run.events[1], link.receiver[1]);
    const auto corr = timing::correlate(a.times, b.times, cfg.window_ps, offset);
    for (const auto& m : corr.matches) {
      if (raw.size() >= cfg.target_coincidences) break;
      raw.bases_a.push_back(a.code[m.index_a] >> 1);
      raw.bits_a.push_back(a.code[m.index_a] & 1);
      raw.bases_b.push_back(b.code[m.index_b] >> 1);
      raw.bits_b.push_back(b.code[m.index_b] & 1);
      raw.times_a.push_back(a.times[m.index_a]);
    }
    raw.elapsed_s = static_cast<double>(k + 1) * cfg.batch_s;
  }
  if (raw.size() < cfg.target_coincidences)
    throw Error(ErrorCode::Timeout, "only " + std::to_string(raw.size()) + " of " +
                                        std::to_string(cfg.target_coincidences) + " coincidences before timeout");
  return raw;
}

SiftResult sift(std::span<const std::uint8_t> bases_a, std::span<const std::uint8_t> bases_b,
                std::span<const std::uint8_t> bits_a, std::span<const std::uint8_t> bits_b) {
  const std::size_t n = bases_a.size();
  if (bases_b.size() != n || bits_a.size() != n || bits_b.size() != n)
    throw Error(ErrorCode::Precondition, "sift inputs differ in length");
  SiftResult r;
  r.mask.resize(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (bases_a[i] != bases_b[i]) continue;
    r.mask[i] = 1;
    r.key.a.push_back(bits_a[i]);
    r.key.b.push_back(bits_b[i] ^ 1);
  }
  return r;
}

QberEstimate estimate_qber(const KeyPair& sifted, double sample_fraction, Rng& rng) {
  const std::size_t n = sifted.size();
  if (n == 0) throw Error(ErrorCode::Empty, "no sifted bits");
  if (!(sample_fraction > 0.0 && sample_fraction < 1.0))
    throw Error(ErrorCode::Precondition, "sample fraction must be in (0, 1)");
  const std::size_t m = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(sample_fraction * double(n))), 1, n);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + std::uniform_int_distribution<std::size_t>(0, n - 1 - i)(rng);
    std::swap(idx[i], idx[j]);
  }
  QberEstimate est;
  est.disclosed.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m));
  std::sort(est.disclosed.begin(), est.disclosed.end());
  std::size_t errors = 0;
  std::vector<std::uint8_t> taken(n, 0);
  for (auto i : est.disclosed) {
    errors += sifted.a[i] != sifted.b[i];
    taken[i] = 1;
  }
  est.q = static_cast<double>(errors) / static_cast<double>(m);
  for (std::size_t i = 0; i < n; ++i)
    if (!taken[i]) {
      est.remaining.a.push_back(sifted.a[i]);
      est.remaining.b.push_back(sifted.b[i]);
    }
  return est;
}

double binary_entropy(double q) {
  if (q <= 0.0 || q >= 1.0) return 0.0;
  return -q * std::log2(q) - (1.0 - q) * std::log2(1.0 - q);
}

std::size_t final_key_length(std::size_t n_ec, double q) {
  const double fraction = 1.0 - 2.0 * binary_entropy(q);
  if (fraction <= 0.0) return 0;
  return static_cast<std::size_t>(std::floor(static_cast<double>(n_ec) * fraction));
}

ReconcileStats reconcile(KeyPair& keys, double q, std::uint64_t seed, int max_passes) {
  const std::size_t n = keys.size();
  if (keys.b.size() != n) throw Error(ErrorCode::Length, "key halves differ in length");
  ReconcileStats st;
  if (n == 0) return st;
  Rng rng(seed);
  const std::size_t k1 =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(0.73 / std::max(q, 0.01))), 4, std::max<std::size_t>(n, 4));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;

  auto verified = [&] {
    bool same = true;
    for (int t = 0; t < 64; ++t) {
      int pa = 0, pb = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (rng() & 1) {
          pa ^= keys.a[i];
          pb ^= keys.b[i];
        }
      ++st.parity_bits;
      same = same && pa == pb;
    }
    return same;
  };

  for (int pass = 0; pass < max_passes; ++pass) {
    st.passes = pass + 1;
    const std::size_t block = std::min(k1 << std::min(pass, 3), n);
    if (pass > 0) std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t lo = 0; lo < n; lo += block) {
      std::size_t hi = std::min(lo + block, n);
      ++st.parity_bits;
      if (parity(keys.a, idx, lo, hi) == parity(keys.b, idx, lo, hi)) continue;
      while (hi - lo > 1) {
        const std::size_t mid = lo + (hi - lo) / 2;
        ++st.parity_bits;
        if (parity(keys.a, idx, lo, mid) != parity(keys.b, idx, lo, mid)) hi = mid;
        else lo = mid;
      }
      keys.b[idx[lo]] ^= 1;
      ++st.corrected;
    }
    if (pass >= 3 && verified()) return st;
  }
  throw Error(ErrorCode::Reconcile, "keys still differ after " + std::to_string(max_passes) + " passes");
}

DistillResult distill(const KeyPair& sifted, double q, std::uint64_t seed) {
  if (q >= kAbortQber) throw Error(ErrorCode::AbortQber, "q = " + std::to_string(q) + " is at or above 0.11");
  if (q < 0.0) throw Error(ErrorCode::Precondition, "q must be non-negative");
  DistillResult r;
  KeyPair keys = sifted;
  r.reconcile = reconcile(keys, q, derive_seed(seed, 1));
  const std::size_t n = keys.size();
  r.n_ec = n > r.reconcile.parity_bits ? n - r.reconcile.parity_bits : 0;
  const std::size_t len = final_key_length(r.n_ec, q);
  if (len == 0 || n == 0) return r;
  Rng rng(derive_seed(seed, 2));
  Bits diag(n + len - 1);
  for (auto& b : diag) b = static_cast<std::uint8_t>(rng() & 1);
  r.key_a = kernels::toeplitz_hash(keys.a, diag, len);
  r.key_b = kernels::toeplitz_hash(keys.b, diag, len);
  return r;
}

Bits xor_bits(const Bits& x, const Bits& y) {
  if (x.size() != y.size()) throw Error(ErrorCode::Length, "keys differ in length");
  Bits out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] ^ y[i];
  return out;
}

RelayResult relay_key(const Bits& key_a, std::span<const Bits> chain, const Bits& key_b) {
  std::vector<const Bits*> keys{&key_a};
  for (const auto& k : chain) keys.push_back(&k);
  keys.push_back(&key_b);
  for (const auto* k : keys)
    if (k->size() != key_a.size()) throw Error(ErrorCode::Length, "relay keys differ in length");
  RelayResult r;
  // Hub i holds keys[i] on its left and keys[i + 1] on its right.
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) r.published.push_back(xor_bits(*keys[i], *keys[i + 1]));
  r.key_at_a = key_a;
  Bits acc = key_b;
  for (auto it = r.published.rbegin(); it != r.published.rend(); ++it) acc = xor_bits(acc, *it);
  r.key_at_b = acc;
  return r;
}

std::vector<int> ring_relay_path(int hub_count, int from, int to) {
  if (hub_count <= 0 || from < 0 || to < 0 || from >= hub_count || to >= hub_count)
    throw Error(ErrorCode::Precondition, "hub index out of range");
  const int forward = (to - from + hub_count) % hub_count;
  const int step = forward <= hub_count - forward ? 1 : -1;
  std::vector<int> path{from};
  for (int h = from; h != to;) {
    h = (h + step + hub_count) % hub_count;
    path.push_back(h);
  }
  return path;
}

std::string key_digest(const Bits& key) {
  std::vector<unsigned char> bytes((key.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < key.size(); ++i)
    if (key[i]) bytes[i / 8] |= static_cast<unsigned char>(0x80 >> (i % 8));
  return sha256_hex(bytes);
}

SessionReport run_session(const Bbm92Config& cfg, std::uint64_t seed, const SessionOptions& opts) {
  SessionReport rep;
  rep.raw = run_bbm92(cfg, derive_seed(seed, 1));
  rep.sifted = sift(rep.raw.bases_a, rep.raw.bases_b, rep.raw.bits_a, rep.raw.bits_b);
  Rng rng(derive_seed(seed, 2));
  rep.estimate = estimate_qber(rep.sifted.key, opts.sample_fraction, rng);
  if (rep.estimate.q >= kAbortQber) {
    rep.aborted = true;
    return rep;
  }
  rep.distilled = distill(rep.estimate.remaining, rep.estimate.q, derive_seed(seed, 3));
  return rep;
}

namespace {

std::string bit_text(std::span<const std::uint8_t> bits) {
  std::string s(bits.size(), '0');
  for (std::size_t i = 0; i < bits.size(); ++i) s[i] = bits[i] ? '1' : '0';
  return s;
}

}  // namespace

nlohmann::json transcript(const SessionReport& r) {
  nlohmann::json j;
  j["raw_coincidences"] = r.raw.size();
  j["elapsed_s"] = r.raw.elapsed_s;
  j["bases_a"] = bit_text(r.raw.bases_a);
  j["bases_b"] = bit_text(r.raw.bases_b);
  j["sift_mask"] = bit_text(r.sifted.mask);
  j["sifted"] = r.sifted.key.size();
  j["disclosed"] = r.estimate.disclosed;
  j["q"] = r.estimate.q;
  j["aborted"] = r.aborted;
  j["parity_bits"] = r.distilled.reconcile.parity_bits;
  j["corrected"] = r.distilled.reconcile.corrected;
  j["n_ec"] = r.distilled.n_ec;
  j["final_length"] = r.distilled.key_a.size();
  j["key_digest_a"] = key_digest(r.distilled.key_a);
  j["key_digest_b"] = key_digest(r.distilled.key_b);
  j["keys_match"] = r.distilled.key_a == r.distilled.key_b;
  return j;
}

std::vector<RateRow> key_rate_table(std::size_t sifted, std::span<const double> qs) {
  std::vector<RateRow> rows;
  for (double q : qs) {
    RateRow row;
    row.q = q;
    row.sifted = sifted;
    row.final_bits = q >= kAbortQber ? 0 : final_key_length(sifted, q);
    row.fraction = sifted ? static_cast<double>(row.final_bits) / static_cast<double>(sifted) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

std::string format_rate_table(std::span<const RateRow> rows) {
  std::ostringstream os;
  os << "q        sifted     final      fraction\n";
  char line[96];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-8.4f %-10zu %-10zu %.5f\n", r.q, r.sifted, r.final_bits, r.fraction);
    os << line;
  }
  return os.str();
}

}  // namespace qnet::qkd
