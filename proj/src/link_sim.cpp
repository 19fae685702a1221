#include "qnet/link_sim.hpp"

#include <algorithm>

namespace qnet::optics {

const char* to_string(ReceiverKind kind) {
  switch (kind) {
    case ReceiverKind::None: return "none";
    case ReceiverKind::Bucket: return "bucket";
    case ReceiverKind::Linear: return "linear";
    case ReceiverKind::Bbm92: return "bbm92";
  }
  return "?";
}

ReceiverKind parse_receiver_kind(const std::string& text) {
  for (ReceiverKind k : {ReceiverKind::None, ReceiverKind::Bucket, ReceiverKind::Linear, ReceiverKind::Bbm92})
    if (text == to_string(k)) return k;
  throw Error(ErrorCode::Schema, "unknown measure kind '" + text + "'");
}

int receiver_channel_count(ReceiverKind kind) {
  switch (kind) {
    case ReceiverKind::None: return 0;
    case ReceiverKind::Bucket: return 1;
    case ReceiverKind::Linear: return 2;
    case ReceiverKind::Bbm92: return 4;
  }
  return 0;
}

namespace {

enum Stream : std::uint64_t { kEmit = 1, kPrepare, kPropagateA, kPropagateB, kBasis, kMeasure, kDetectA, kDetectB };

double receiver_angle(const Receiver& r, int basis) {
  return r.kind == ReceiverKind::Bbm92 ? r.basis_angle[basis] : r.angle;
}

std::uint8_t receiver_channel(const Receiver& r, int basis, int bit) {
  switch (r.kind) {
    case ReceiverKind::Linear: return static_cast<std::uint8_t>(r.base_channel + bit);
    case ReceiverKind::Bbm92: return static_cast<std::uint8_t>(r.base_channel + 2 * basis + bit);
    default: return r.base_channel;
  }
}

}  // namespace

LinkRun simulate_link(const LinkConfig& cfg, std::uint64_t seed) {
  LinkRun run;
  PairStream pairs = generate_pairs(cfg.source, cfg.duration_s, derive_seed(seed, kEmit));
  run.emitted = pairs.size();
  for (auto& p : pairs) {
    p.emitted_ps += cfg.start_ps;
    p.arrival_ps[0] = p.arrival_ps[1] = p.emitted_ps;
  }
  {
    Rng rng(derive_seed(seed, kPrepare));
    PrepareOptions opts = cfg.prepare;
    opts.heralding_efficiency = cfg.source.heralding_efficiency;
    pairs = prepare(pairs, cfg.mode, rng, opts);
  }
  run.prepared = pairs.size();
  {
    Rng ra(derive_seed(seed, kPropagateA));
    propagate(pairs, cfg.channel[0], Arm::A, ra);
    Rng rb(derive_seed(seed, kPropagateB));
    propagate(pairs, cfg.channel[1], Arm::B, rb);
  }

  std::vector<std::int8_t> basis[2];
  std::vector<double> angles[2];
  {
    Rng rng(derive_seed(seed, kBasis));
    for (int k = 0; k < 2; ++k) {
      basis[k].resize(pairs.size(), 0);
      angles[k].resize(pairs.size(), 0.0);
    }
    for (std::size_t i = 0; i < pairs.size(); ++i)
      for (int k = 0; k < 2; ++k) {
        const Receiver& r = cfg.receiver[k];
        if (r.kind == ReceiverKind::Bbm92) basis[k][i] = bernoulli(rng, 0.5) ? 1 : 0;
        angles[k][i] = receiver_angle(r, basis[k][i]);
      }
  }
  Rng mrng(derive_seed(seed, kMeasure));
  const auto outcomes = measure(pairs, angles[0], angles[1], mrng);

  for (int k = 0; k < 2; ++k) {
    const Receiver& r = cfg.receiver[k];
    if (r.kind == ReceiverKind::None) continue;
    EventStream arrivals;
    arrivals.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (outcomes[i].bit[k] < 0) continue;
      arrivals.push_back({r.node, receiver_channel(r, basis[k][i], outcomes[i].bit[k]), Origin::Photon,
                          pairs[i].arrival_ps[k]});
    }
    std::stable_sort(arrivals.begin(), arrivals.end(),
                     [](const DetectionEvent& x, const DetectionEvent& y) { return x.time_ps < y.time_ps; });
    std::vector<DarkChannel> dark;
    for (int c = 0; c < receiver_channel_count(r.kind); ++c)
      dark.push_back({r.node, static_cast<std::uint8_t>(r.base_channel + c)});
    Rng drng(derive_seed(seed, k == 0 ? kDetectA : kDetectB));
    run.events[k] = detect(arrivals, cfg.detector[k], cfg.duration_s, dark, drng, cfg.start_ps);
  }
  return run;
}

RateConfig rate_config(const LinkConfig& cfg) {
  RateConfig rc;
  rc.source = cfg.source;
  rc.mode = cfg.mode;
  rc.postselect_probability = cfg.prepare.postselect_probability;
  for (int k = 0; k < 2; ++k) {
    rc.loss_db[k] = cfg.channel[k].loss_db;
    rc.detector[k] = cfg.detector[k];
    rc.dark_channels[k] = receiver_channel_count(cfg.receiver[k].kind);
  }
  return rc;
}

}  // namespace qnet::optics
