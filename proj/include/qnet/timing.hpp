#pragma once

// Time-tag correlation, coincidence counting, delay histograms and clock
// offset recovery.

#include <compare>
#include <cstdint>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "qnet/optics.hpp"

namespace qnet::timing {

using optics::EventStream;
using optics::TimePs;

inline constexpr TimePs kDefaultWindowPs = 1000;

struct ChannelKey {
  std::uint8_t node = 0;
  std::uint8_t channel = 0;
  auto operator<=>(const ChannelKey&) const = default;
};

std::string to_string(ChannelKey key);

struct TimeTagStream {
  ChannelKey key;
  std::vector<TimePs> tags;
};

/// Tags of one channel, in stream order.
std::vector<TimePs> channel_tags(const EventStream& events, ChannelKey key);

struct Match {
  std::size_t index_a = 0;
  std::size_t index_b = 0;
  bool operator==(const Match&) const = default;
};

struct Correlation {
  std::uint64_t count = 0;
  std::vector<Match> matches;
};

/// Greedy earliest-first one-to-one matching of tags with
/// |ta - (tb + offset)| <= window/2.
Correlation correlate(std::span<const TimePs> a, std::span<const TimePs> b, TimePs window_ps,
                      TimePs offset_ps);

/// Bin k holds delays tb - ta nearest to -range + k*bin. Throws
/// E_PRECONDITION unless bin > 0 and range is a multiple of bin.
std::vector<std::uint64_t> delay_histogram(std::span<const TimePs> a, std::span<const TimePs> b,
                                           TimePs range_ps, TimePs bin_ps);
TimePs bin_center(std::size_t k, TimePs range_ps, TimePs bin_ps);
std::string histogram_csv(std::span<const std::uint64_t> hist, TimePs range_ps, TimePs bin_ps);

/// Offset to pass to correlate(a, b, ...): the coarse histogram peak refined
/// by one pass at window/4. Throws E_NO_PEAK when the coarse peak is below
/// five times the median bin.
TimePs estimate_offset(std::span<const TimePs> a, std::span<const TimePs> b, TimePs search_range_ps,
                       TimePs coarse_bin_ps, TimePs window_ps = kDefaultWindowPs);

struct ClockModel {
  TimePs offset_ps = 0;
  double drift_ppm = 0.0;

  /// Throws E_PRECONDITION when |drift_ppm| >= 100.
  void check() const;
  TimePs apply(TimePs t) const;
  std::vector<TimePs> apply(std::span<const TimePs> tags) const;
  EventStream apply(const EventStream& events) const;
};

struct CoincidencePair {
  std::string id;
  ChannelKey a;
  ChannelKey b;
  TimePs offset_ps = 0;
};

struct CountRecord {
  TimePs interval_start_ps = 0;
  TimePs interval_len_ps = 0;
  std::map<ChannelKey, std::uint64_t> singles;
  /// One entry per configured pair, same order.
  std::vector<std::uint64_t> coincidences;

  std::uint64_t total_singles() const;
  bool operator==(const CountRecord&) const = default;
};

struct CountingPlan {
  std::vector<ChannelKey> channels;
  std::vector<CoincidencePair> pairs;
  TimePs window_ps = kDefaultWindowPs;
  TimePs interval_ps = 1'000'000'000'000;
  TimePs start_ps = 0;
  /// Exclusive end; when not set the last event decides.
  std::optional<TimePs> end_ps;
};

/// One record per interval. Events are partitioned by their own time;
/// coincidences use correlate per pair inside each interval.
std::vector<CountRecord> accumulate_counts(const EventStream& events, const CountingPlan& plan);
std::vector<CountRecord> accumulate_counts(const EventStream& events, TimePs interval_len_ps,
                                           const std::vector<CoincidencePair>& pairs, TimePs window_ps);

std::string counts_csv_header(const CountingPlan& plan);
std::string counts_csv_row(const CountingPlan& plan, const CountRecord& r);

/// Incremental accumulator used while an instantiation runs. Appends are
/// serialized; records are released once their interval is closed.
class CountAccumulator {
 public:
  explicit CountAccumulator(CountingPlan plan);

  void append(const EventStream& events);
  /// Close every interval ending at or before `time_ps`.
  std::vector<CountRecord> close_until(TimePs time_ps);
  std::vector<CountRecord> finish(TimePs end_ps);
  const CountingPlan& plan() const { return plan_; }

 private:
  CountingPlan plan_;
  std::mutex mu_;
  EventStream pending_;
  TimePs next_start_;
};

}  // namespace qnet::timing
