#pragma once

// Photon-pair generation, preparation, propagation, polarization
// measurement and single-photon detection, plus closed-form rates.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qnet/linalg.hpp"
#include "qnet/random.hpp"
#include "qnet/topology.hpp"

namespace qnet::optics {

using TimePs = std::int64_t;
using Vec4 = Eigen::Vector4cd;
using topology::Arm;

inline constexpr double kPsPerSecond = 1e12;
inline constexpr double kFiberPsPerMetre = 5000.0;

struct BiphotonSource {
  double pair_rate_hz = 1e5;
  double center_wavelength_nm = 1570.0;
  double bandwidth_nm = 2.0;
  double heralding_efficiency = 1.0;
};

/// Polarization state of a photon pair over {HH, HV, VH, VV}; the first
/// letter is arm A.
struct TwoQubitState {
  Vec4 amplitudes = Vec4::Zero();

  static TwoQubitState raw_pair();   // |HV>
  static TwoQubitState psi_plus();   // (|HV> + |VH>)/sqrt2
  static TwoQubitState product(const Eigen::Vector2cd& a, const Eigen::Vector2cd& b);

  double norm() const { return amplitudes.norm(); }
  /// Apply a single-photon unitary to one arm.
  TwoQubitState rotated(const Mat2& u, Arm arm) const;
};

enum class PrepareMode { Entangled, Heralded };

/// One emitted pair followed through the optical layer.
struct PhotonPair {
  TimePs emitted_ps = 0;
  TwoQubitState state;
  bool present[2] = {true, true};
  TimePs arrival_ps[2] = {0, 0};
  bool heralded = false;
};

using PairStream = std::vector<PhotonPair>;

/// Poisson emission times in [0, duration). Throws E_PRECONDITION when
/// duration_s <= 0. Deterministic per seed and independent of thread count.
std::vector<TimePs> generate_emission_times(const BiphotonSource& src, double duration_s,
                                            std::uint64_t seed);
PairStream generate_pairs(const BiphotonSource& src, double duration_s, std::uint64_t seed);

struct PrepareOptions {
  double postselect_probability = 0.5;
  double heralding_efficiency = 1.0;
};

PairStream prepare(const PairStream& pairs, PrepareMode mode, Rng& rng,
                   const PrepareOptions& opts = {});

struct ChannelModel {
  double loss_db = 0.0;
  Mat2 rotation = Mat2::Identity();
  TimePs latency_ps = 0;

  double transmittance() const;
  static ChannelModel from_path(const topology::OpticalPath& path);
};

void propagate(PairStream& stream, const ChannelModel& ch, Arm arm, Rng& rng);

/// Analyzer projecting on cos(t)|H> + sin(t)|V> (bit 0) and its orthogonal
/// complement (bit 1).
Eigen::Vector2cd analyzer_state(double angle, int bit);

struct JointOutcome {
  std::int8_t bit[2] = {-1, -1};
};

/// Joint Born probabilities P[bit_a][bit_b] at analyzer angles (a, b).
std::array<std::array<double, 2>, 2> born_probabilities(const TwoQubitState& s, double angle_a,
                                                        double angle_b);
/// Born probability of a bit on one arm when the other photon is not
/// observed.
double marginal_probability(const TwoQubitState& s, Arm arm, double angle, int bit);

/// Sample outcomes for every pair. A lost photon gets bit -1 and the
/// surviving arm is drawn from its marginal.
std::vector<JointOutcome> measure(const PairStream& stream, double angle_a, double angle_b, Rng& rng);
std::vector<JointOutcome> measure(const PairStream& stream, std::span<const double> angles_a,
                                  std::span<const double> angles_b, Rng& rng);

enum class Origin : std::uint8_t { Photon = 0, Dark = 1 };

struct DetectionEvent {
  std::uint8_t node = 0;
  std::uint8_t channel = 0;
  Origin origin = Origin::Photon;
  TimePs time_ps = 0;

  bool operator==(const DetectionEvent&) const = default;
};

using EventStream = std::vector<DetectionEvent>;

struct DetectorModel {
  double efficiency = 1.0;
  double dark_count_hz = 0.0;
  double jitter_sigma_ps = 0.0;
  double dead_time_ps = 0.0;
  int channel_count = 8;
};

struct DarkChannel {
  std::uint8_t node = 0;
  std::uint8_t channel = 0;
};

/// Efficiency thinning, Gaussian jitter, dark counts on `dark_channels`
/// over [window_start, window_start + duration), non-paralyzable dead time
/// per (node, channel). Output is time sorted.
EventStream detect(const EventStream& arrivals, const DetectorModel& det, double duration_s,
                   std::span<const DarkChannel> dark_channels, Rng& rng, TimePs window_start_ps = 0);

/// Drop events closer than dead_time to the last kept event on the same
/// (node, channel). Input must be time sorted.
EventStream apply_dead_time(const EventStream& events, double dead_time_ps);

struct RateConfig {
  BiphotonSource source;
  PrepareMode mode = PrepareMode::Entangled;
  double postselect_probability = 0.5;
  double loss_db[2] = {0.0, 0.0};
  DetectorModel detector[2];
  /// Number of detector channels receiving dark counts per arm.
  int dark_channels[2] = {1, 1};
};

struct ExpectedRates {
  double singles_hz[2] = {0.0, 0.0};
  double coincidences_hz = 0.0;
  double accidentals_hz = 0.0;
};

ExpectedRates expected_rates(const RateConfig& cfg, double coincidence_window_ps);

double db_to_transmittance(double loss_db);

}  // namespace qnet::optics
