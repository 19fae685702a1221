#pragma once

// Automatic polarization control: fiber drift, the four-stage correction
// unitary, coincidence-derived error signals and the coordinate-descent
// controller.

#include <array>
#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "qnet/link_sim.hpp"

namespace qnet::apc {

using optics::ChannelModel;

inline constexpr int kStages = 4;
inline constexpr double kMinStep = 1e-4;
inline constexpr double kMaxStep = 0.5;
inline constexpr std::uint64_t kStarvedBelow = 20;

using StageAngles = std::array<double, kStages>;

/// Multiply the channel rotation by a random rotation whose angle is
/// Normal(0, rate*sqrt(dt)) about a uniformly random axis.
ChannelModel apply_drift(const ChannelModel& ch, double dt_s, double rate, Rng& rng);

class DriftProcess {
 public:
  DriftProcess(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {}

  /// Advance by dt and return the increment.
  Mat2 step(double dt_s);
  const Mat2& current() const { return current_; }
  double rate() const { return rate_; }

 private:
  double rate_;
  Rng rng_;
  Mat2 current_ = Mat2::Identity();
};

struct ApcState {
  StageAngles stage_angles{};
  double step_size = 0.25;
  std::deque<double> history;

  void wrap();
  void record(double signal);
};

double wrap_angle(double a);

/// Haar-random SU(2) element.
Mat2 random_unitary(Rng& rng);

/// R_X(a3) R_Z(a2) R_X(a1) R_Z(a0), with Z the S1 axis and X the S2 axis.
Mat2 correction_unitary(const StageAngles& angles);
inline Mat2 correction_unitary(const ApcState& s) { return correction_unitary(s.stage_angles); }

enum class SignalBasis { Rectilinear, TwoBasis };

/// Wrong-port coincidence fraction for psi-plus sent through channel_a on
/// arm A and correction * channel_b on arm B.
double analytic_error_signal(const Mat2& channel_a, const Mat2& channel_b, const Mat2& correction,
                             SignalBasis basis = SignalBasis::Rectilinear);

class ErrorSignalSource {
 public:
  virtual ~ErrorSignalSource() = default;
  /// Throws E_STARVED when too few coincidences were seen.
  virtual double sample(const Mat2& correction) = 0;
  /// Coincidences behind the last sample, 0 for an exact signal.
  virtual std::uint64_t last_sample_size() const { return 0; }
};

class AnalyticSignal : public ErrorSignalSource {
 public:
  AnalyticSignal(Mat2 channel_a, Mat2 channel_b, SignalBasis basis = SignalBasis::Rectilinear)
      : a_(std::move(channel_a)), b_(std::move(channel_b)), basis_(basis) {}
  double sample(const Mat2& correction) override;
  void set_channel_b(const Mat2& b) { b_ = b; }

 private:
  Mat2 a_, b_;
  SignalBasis basis_;
};

/// Binomial shot noise around the analytic value at a fixed number of
/// coincidences per sample.
class ShotNoiseSignal : public ErrorSignalSource {
 public:
  ShotNoiseSignal(Mat2 channel_a, Mat2 channel_b, std::uint64_t coincidences, std::uint64_t seed,
                  SignalBasis basis = SignalBasis::Rectilinear)
      : exact_(std::move(channel_a), std::move(channel_b), basis), n_(coincidences), rng_(seed) {}
  double sample(const Mat2& correction) override;
  void set_channel_b(const Mat2& b) { exact_.set_channel_b(b); }
  std::uint64_t last_sample_size() const override { return n_; }

 private:
  AnalyticSignal exact_;
  std::uint64_t n_;
  Rng rng_;
};

/// Runs the photon-level link simulation for each sample. Linear receivers
/// give the rectilinear signal, Bbm92 receivers the two-basis signal.
class SimulatedSignal : public ErrorSignalSource {
 public:
  SimulatedSignal(optics::LinkConfig link, double sample_ms, std::uint64_t seed,
                  optics::TimePs window_ps = 1000);
  double sample(const Mat2& correction) override;
  std::uint64_t last_coincidences() const { return last_total_; }
  std::uint64_t last_sample_size() const override { return last_total_; }

 private:
  optics::LinkConfig link_;
  Mat2 base_rotation_;
  double sample_ms_;
  std::uint64_t seed_;
  std::uint64_t calls_ = 0;
  optics::TimePs window_ps_;
  std::uint64_t last_total_ = 0;
};

/// Wrong / (wrong + right) from per-channel-pair coincidence counts.
struct PortCounts {
  std::uint64_t wrong = 0;
  std::uint64_t right = 0;
};
double error_fraction(const PortCounts& c);

struct ConvergenceStep {
  int iteration = 0;
  StageAngles angles{};
  double signal = 0.0;
};

struct ConvergenceReport {
  int iters = 0;
  double final_signal = 1.0;
  bool converged = false;
  std::vector<ConvergenceStep> trace;
};

/// Coordinate descent: each round tries +-step on every stage and keeps the
/// best of the three evaluations; the step halves after a round without
/// improvement and grows after an improving one. Stops at signal <= threshold
/// or max_iters rounds; a noisy signal must clear the threshold by two
/// binomial standard deviations.
ConvergenceReport stabilize(ApcState& state, ErrorSignalSource& source, double threshold, int max_iters);

std::string to_jsonl(const ConvergenceReport& report);

struct ClosedLoopConfig {
  double drift_rate = 0.01;
  double period_s = 0.1;
  double duration_s = 60.0;
  double threshold = 0.02;
  int iters_per_period = 3;
  std::uint64_t coincidences_per_sample = 1000;
  SignalBasis basis = SignalBasis::Rectilinear;
  /// Start from a Haar-random misalignment drawn from the seed.
  bool random_start = true;
};

struct ClosedLoopResult {
  double mean_signal = 0.0;
  std::vector<double> signals;
};

/// Drift on arm B with feedback every period; the signal is sampled with
/// shot noise.
ClosedLoopResult run_closed_loop(const ClosedLoopConfig& cfg, std::uint64_t seed);

}  // namespace qnet::apc
