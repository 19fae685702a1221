#include "qnet/timing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qnet/kernels.hpp"

namespace qnet::timing {

std::string to_string(ChannelKey key) {
  return "n" + std::to_string(key.node) + "c" + std::to_string(key.channel);
}

std::vector<TimePs> channel_tags(const EventStream& events, ChannelKey key) {
  std::vector<TimePs> out;
  for (const auto& e : events)
    if (e.node == key.node && e.channel == key.channel) out.push_back(e.time_ps);
  return out;
}

Correlation correlate(std::span<const TimePs> a, std::span<const TimePs> b, TimePs window_ps,
                      TimePs offset_ps) {
  Correlation c;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const TimePs d = a[i] - (b[j] + offset_ps);
    if (2 * d > window_ps) ++j;
    else if (-2 * d > window_ps) ++i;
    else {
      c.matches.push_back({i, j});
      ++i;
      ++j;
    }
  }
  c.count = c.matches.size();
  return c;
}

namespace {

void check_histogram(TimePs range_ps, TimePs bin_ps) {
  if (bin_ps <= 0 || range_ps < 0 || range_ps % bin_ps != 0)
    throw Error(ErrorCode::Precondition, "histogram range must be a non-negative multiple of a positive bin");
}

std::size_t argmax(std::span<const std::uint64_t> h) {
  return static_cast<std::size_t>(std::max_element(h.begin(), h.end()) - h.begin());
}

double median(std::vector<std::uint64_t> h) {
  if (h.empty()) return 0.0;
  const std::size_t mid = h.size() / 2;
  std::nth_element(h.begin(), h.begin() + mid, h.end());
  return static_cast<double>(h[mid]);
}

}  // namespace

std::vector<std::uint64_t> delay_histogram(std::span<const TimePs> a, std::span<const TimePs> b,
                                           TimePs range_ps, TimePs bin_ps) {
  check_histogram(range_ps, bin_ps);
  return kernels::delay_histogram(a, b, range_ps, bin_ps);
}

TimePs bin_center(std::size_t k, TimePs range_ps, TimePs bin_ps) {
  return -range_ps + static_cast<TimePs>(k) * bin_ps;
}

std::string histogram_csv(std::span<const std::uint64_t> hist, TimePs range_ps, TimePs bin_ps) {
  std::ostringstream os;
  os << "bin_center_ps,count\n";
  for (std::size_t k = 0; k < hist.size(); ++k) os << bin_center(k, range_ps, bin_ps) << ',' << hist[k] << '\n';
  return os.str();
}

TimePs estimate_offset(std::span<const TimePs> a, std::span<const TimePs> b, TimePs search_range_ps,
                       TimePs coarse_bin_ps, TimePs window_ps) {
  if (window_ps < 4) throw Error(ErrorCode::Precondition, "window too small for refinement");
  const auto coarse = delay_histogram(a, b, search_range_ps, coarse_bin_ps);
  const std::size_t peak = argmax(coarse);
  const double floor_level = std::max(median(coarse), 1.0);
  if (static_cast<double>(coarse[peak]) < 5.0 * floor_level)
    throw Error(ErrorCode::NoPeak, "delay histogram has no peak above 5x the median bin");
  const TimePs coarse_delay = bin_center(peak, search_range_ps, coarse_bin_ps);

  // Fine pass centred on the coarse peak.
  const TimePs fine_bin = window_ps / 4;
  const TimePs fine_range = (coarse_bin_ps / fine_bin + 1) * fine_bin;
  std::vector<TimePs> shifted(b.begin(), b.end());
  for (auto& t : shifted) t -= coarse_delay;
  const auto fine = delay_histogram(a, shifted, fine_range, fine_bin);
  const std::size_t fpeak = argmax(fine);
  double weight = 0.0, moment = 0.0;
  for (std::size_t k = fpeak > 0 ? fpeak - 1 : 0; k <= std::min(fpeak + 1, fine.size() - 1); ++k) {
    weight += static_cast<double>(fine[k]);
    moment += static_cast<double>(fine[k]) * static_cast<double>(bin_center(k, fine_range, fine_bin));
  }
  const double refined = weight > 0 ? moment / weight : static_cast<double>(bin_center(fpeak, fine_range, fine_bin));
  const double delay = static_cast<double>(coarse_delay) + refined;
  return -static_cast<TimePs>(std::llround(delay));
}

void ClockModel::check() const {
  if (!(std::abs(drift_ppm) < 100.0)) throw Error(ErrorCode::Precondition, "clock drift must be below 100 ppm");
}

TimePs ClockModel::apply(TimePs t) const {
  return static_cast<TimePs>(std::llround(static_cast<double>(t) * (1.0 + drift_ppm * 1e-6))) + offset_ps;
}

std::vector<TimePs> ClockModel::apply(std::span<const TimePs> tags) const {
  std::vector<TimePs> out;
  out.reserve(tags.size());
  for (TimePs t : tags) out.push_back(apply(t));
  return out;
}

EventStream ClockModel::apply(const EventStream& events) const {
  EventStream out = events;
  for (auto& e : out) e.time_ps = apply(e.time_ps);
  return out;
}

std::uint64_t CountRecord::total_singles() const {
  std::uint64_t n = 0;
  for (const auto& [k, v] : singles) n += v;
  return n;
}

namespace {

using TagIndex = std::map<ChannelKey, std::vector<TimePs>>;

TagIndex index_events(const EventStream& events, std::span<const ChannelKey> always) {
  TagIndex idx;
  for (const auto& k : always) idx[k];
  for (const auto& e : events) idx[{e.node, e.channel}].push_back(e.time_ps);
  return idx;
}

std::span<const TimePs> slice(const std::vector<TimePs>& tags, TimePs lo, TimePs hi) {
  auto b = std::lower_bound(tags.begin(), tags.end(), lo);
  auto e = std::lower_bound(b, tags.end(), hi);
  return {b, e};
}

std::vector<CountRecord> count_intervals(const TagIndex& idx, const CountingPlan& plan, TimePs start,
                                         TimePs end) {
  std::vector<CountRecord> out;
  if (plan.interval_ps <= 0) throw Error(ErrorCode::Precondition, "interval must be positive");
  static const std::vector<TimePs> empty;
  std::vector<TimePs> offsets;
  for (const auto& p : plan.pairs) offsets.push_back(p.offset_ps);
  for (TimePs lo = start; lo < end; lo += plan.interval_ps) {
    const TimePs hi = lo + plan.interval_ps;
    CountRecord r;
    r.interval_start_ps = lo;
    r.interval_len_ps = plan.interval_ps;
    for (const auto& [key, tags] : idx) r.singles[key] = slice(tags, lo, hi).size();
    std::vector<std::pair<std::span<const TimePs>, std::span<const TimePs>>> lists;
    for (const auto& p : plan.pairs) {
      auto ia = idx.find(p.a);
      auto ib = idx.find(p.b);
      lists.emplace_back(slice(ia == idx.end() ? empty : ia->second, lo, hi),
                         slice(ib == idx.end() ? empty : ib->second, lo, hi));
    }
    r.coincidences = kernels::correlate_many(lists, plan.window_ps, offsets);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

std::vector<CountRecord> accumulate_counts(const EventStream& events, const CountingPlan& plan) {
  const TagIndex idx = index_events(events, plan.channels);
  TimePs end = plan.start_ps;
  if (plan.end_ps) {
    end = *plan.end_ps;
  } else if (!events.empty() && events.back().time_ps >= plan.start_ps) {
    const TimePs span = events.back().time_ps - plan.start_ps;
    end = plan.start_ps + (span / plan.interval_ps + 1) * plan.interval_ps;
  }
  return count_intervals(idx, plan, plan.start_ps, end);
}

std::vector<CountRecord> accumulate_counts(const EventStream& events, TimePs interval_len_ps,
                                           const std::vector<CoincidencePair>& pairs, TimePs window_ps) {
  CountingPlan plan;
  plan.interval_ps = interval_len_ps;
  plan.pairs = pairs;
  plan.window_ps = window_ps;
  return accumulate_counts(events, plan);
}

std::string counts_csv_header(const CountingPlan& plan) {
  std::ostringstream os;
  os << "interval_start_ps,interval_len_ps";
  for (const auto& k : plan.channels) os << ",singles_" << to_string(k);
  for (const auto& p : plan.pairs) os << ",coinc_" << p.id;
  return os.str();
}

std::string counts_csv_row(const CountingPlan& plan, const CountRecord& r) {
  std::ostringstream os;
  os << r.interval_start_ps << ',' << r.interval_len_ps;
  for (const auto& k : plan.channels) {
    auto it = r.singles.find(k);
    os << ',' << (it == r.singles.end() ? 0 : it->second);
  }
  for (std::size_t i = 0; i < plan.pairs.size(); ++i)
    os << ',' << (i < r.coincidences.size() ? r.coincidences[i] : 0);
  return os.str();
}

CountAccumulator::CountAccumulator(CountingPlan plan) : plan_(std::move(plan)), next_start_(plan_.start_ps) {}

void CountAccumulator::append(const EventStream& events) {
  std::lock_guard lock(mu_);
  pending_.insert(pending_.end(), events.begin(), events.end());
  std::stable_sort(pending_.begin(), pending_.end(),
                   [](const auto& x, const auto& y) { return x.time_ps < y.time_ps; });
}

std::vector<CountRecord> CountAccumulator::close_until(TimePs time_ps) {
  std::lock_guard lock(mu_);
  const TimePs intervals = time_ps > next_start_ ? (time_ps - next_start_) / plan_.interval_ps : 0;
  if (intervals <= 0) return {};
  const TimePs end = next_start_ + intervals * plan_.interval_ps;
  auto split = std::lower_bound(pending_.begin(), pending_.end(), end,
                                [](const auto& e, TimePs t) { return e.time_ps < t; });
  EventStream ready(pending_.begin(), split);
  pending_.erase(pending_.begin(), split);
  const TagIndex idx = index_events(ready, plan_.channels);
  auto out = count_intervals(idx, plan_, next_start_, end);
  next_start_ = end;
  return out;
}

std::vector<CountRecord> CountAccumulator::finish(TimePs end_ps) {
  TimePs aligned = end_ps;
  {
    std::lock_guard lock(mu_);
    const TimePs span = end_ps - next_start_;
    if (span > 0 && span % plan_.interval_ps != 0)
      aligned = next_start_ + (span / plan_.interval_ps + 1) * plan_.interval_ps;
  }
  return close_until(aligned);
}

}  // namespace qnet::timing
