#pragma once

// One source feeding two receivers: the full emission-to-detection chain
// used by the engine, the QKD runner and the rate checks.

#include <numbers>

#include "qnet/optics.hpp"

namespace qnet::optics {

enum class ReceiverKind { None, Bucket, Linear, Bbm92 };

const char* to_string(ReceiverKind kind);
ReceiverKind parse_receiver_kind(const std::string& text);

/// Detector channels used by a receiver: Bucket 1, Linear 2 (base + bit),
/// Bbm92 4 (base + 2*basis + bit).
int receiver_channel_count(ReceiverKind kind);

struct Receiver {
  ReceiverKind kind = ReceiverKind::Bucket;
  std::uint8_t node = 0;
  std::uint8_t base_channel = 0;
  /// Analyzer angle of a Linear receiver.
  double angle = 0.0;
  /// Basis angles of a Bbm92 receiver (rectilinear, diagonal).
  double basis_angle[2] = {0.0, std::numbers::pi / 4};
};

struct LinkConfig {
  BiphotonSource source;
  PrepareMode mode = PrepareMode::Entangled;
  PrepareOptions prepare;
  ChannelModel channel[2];
  Receiver receiver[2];
  DetectorModel detector[2];
  double duration_s = 1.0;
  TimePs start_ps = 0;
};

struct LinkRun {
  EventStream events[2];
  std::size_t emitted = 0;
  std::size_t prepared = 0;
};

LinkRun simulate_link(const LinkConfig& cfg, std::uint64_t seed);

/// Rate model matching a link configuration.
RateConfig rate_config(const LinkConfig& cfg);

}  // namespace qnet::optics
