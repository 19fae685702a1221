#include "qnet/kernels.hpp"

#include <algorithm>
#include <cmath>

#include <omp.h>

#include "qnet/random.hpp"

namespace qnet {

TimePs poisson_block_ps(double rate_hz) {
  // Roughly 4096 expected events per block.
  const double ps = 4096.0 / rate_hz * 1e12;
  return static_cast<TimePs>(std::clamp(ps, 1e3, 1e12));
}

namespace {

std::size_t block_count(double duration_ps, TimePs block) {
  return static_cast<std::size_t>(std::ceil(duration_ps / static_cast<double>(block)));
}

void fill_block(std::vector<TimePs>& out, double rate_hz, TimePs start, TimePs len,
                std::uint64_t seed, std::size_t block) {
  Rng rng(derive_seed(seed, block));
  const double mean = rate_hz * static_cast<double>(len) * 1e-12;
  const auto n = std::poisson_distribution<std::int64_t>(mean)(rng);
  out.resize(static_cast<std::size_t>(n));
  for (auto& t : out) t = start + static_cast<TimePs>(uniform01(rng) * static_cast<double>(len));
  std::sort(out.begin(), out.end());
}

struct BlockPlan {
  TimePs duration = 0;
  TimePs block = 1;
  std::size_t count = 0;

  BlockPlan(double rate_hz, double duration_s) {
    duration = static_cast<TimePs>(std::llround(duration_s * 1e12));
    block = poisson_block_ps(rate_hz);
    count = rate_hz > 0 && duration > 0 ? block_count(static_cast<double>(duration), block) : 0;
  }
  TimePs start(std::size_t b) const { return static_cast<TimePs>(b) * block; }
  TimePs length(std::size_t b) const { return std::min(block, duration - start(b)); }
};

std::size_t hist_bins(TimePs range_ps, TimePs bin_ps) {
  return static_cast<std::size_t>(2 * range_ps / bin_ps + 1);
}

void histogram_row(std::span<const TimePs> b, TimePs ta, TimePs range_ps, TimePs bin_ps,
                   std::uint64_t* hist, std::size_t bins) {
  const TimePs lo = ta - range_ps - bin_ps / 2;
  auto it = std::lower_bound(b.begin(), b.end(), lo);
  for (; it != b.end(); ++it) {
    const TimePs shifted = *it - ta + range_ps + bin_ps / 2;
    if (shifted < 0) continue;
    const auto k = static_cast<std::size_t>(shifted / bin_ps);
    if (k >= bins) break;
    ++hist[k];
  }
}

std::uint8_t toeplitz_row(std::span<const std::uint8_t> bits, std::span<const std::uint8_t> seed_bits,
                          std::size_t i) {
  const std::size_t n = bits.size();
  std::uint8_t acc = 0;
  for (std::size_t j = 0; j < n; ++j) acc ^= static_cast<std::uint8_t>(seed_bits[i + n - 1 - j] & bits[j]);
  return acc;
}

void check_toeplitz(std::span<const std::uint8_t> bits, std::span<const std::uint8_t> seed_bits,
                    std::size_t out_len) {
  if (out_len > 0 && seed_bits.size() < bits.size() + out_len - 1)
    throw Error(ErrorCode::Precondition, "toeplitz seed too short");
}

}  // namespace

std::uint64_t count_coincidences(std::span<const TimePs> a, std::span<const TimePs> b,
                                 TimePs window_ps, TimePs offset_ps) {
  std::uint64_t matches = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const TimePs d = a[i] - (b[j] + offset_ps);
    if (2 * d > window_ps) ++j;
    else if (-2 * d > window_ps) ++i;
    else {
      ++matches;
      ++i;
      ++j;
    }
  }
  return matches;
}

namespace kernels {

std::vector<TimePs> poisson_times(double rate_hz, double duration_s, std::uint64_t seed) {
  const BlockPlan plan(rate_hz, duration_s);
  std::vector<std::vector<TimePs>> blocks(plan.count);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(plan.count); ++b)
    fill_block(blocks[b], rate_hz, plan.start(b), plan.length(b), seed, b);
  std::vector<std::size_t> offsets(plan.count + 1, 0);
  for (std::size_t b = 0; b < plan.count; ++b) offsets[b + 1] = offsets[b] + blocks[b].size();
  std::vector<TimePs> out(offsets.back());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(plan.count); ++b)
    std::copy(blocks[b].begin(), blocks[b].end(), out.begin() + offsets[b]);
  return out;
}

std::vector<std::uint64_t> delay_histogram(std::span<const TimePs> a, std::span<const TimePs> b,
                                           TimePs range_ps, TimePs bin_ps) {
  const std::size_t bins = hist_bins(range_ps, bin_ps);
  std::vector<std::uint64_t> hist(bins, 0);
#pragma omp parallel
  {
    std::vector<std::uint64_t> local(bins, 0);
#pragma omp for schedule(static) nowait
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(a.size()); ++i)
      histogram_row(b, a[i], range_ps, bin_ps, local.data(), bins);
#pragma omp critical
    for (std::size_t k = 0; k < bins; ++k) hist[k] += local[k];
  }
  return hist;
}

std::vector<std::uint8_t> toeplitz_hash(std::span<const std::uint8_t> bits,
                                        std::span<const std::uint8_t> seed_bits,
                                        std::size_t out_len) {
  check_toeplitz(bits, seed_bits, out_len);
  std::vector<std::uint8_t> out(out_len);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(out_len); ++i)
    out[i] = toeplitz_row(bits, seed_bits, i);
  return out;
}

std::vector<std::vector<std::pair<int, int>>> batch_connectivity(
    std::span<const topology::CrossbarSwitch> switches) {
  std::vector<std::vector<std::pair<int, int>>> out(switches.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(switches.size()); ++i)
    out[i] = topology::effective_connectivity(switches[i]);
  return out;
}

std::vector<std::uint64_t> correlate_many(
    std::span<const std::pair<std::span<const TimePs>, std::span<const TimePs>>> lists,
    TimePs window_ps, std::span<const TimePs> offsets) {
  std::vector<std::uint64_t> out(lists.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(lists.size()); ++i)
    out[i] = count_coincidences(lists[i].first, lists[i].second, window_ps, offsets[i]);
  return out;
}

}  // namespace kernels

namespace serial {

std::vector<TimePs> poisson_times(double rate_hz, double duration_s, std::uint64_t seed) {
  const BlockPlan plan(rate_hz, duration_s);
  std::vector<TimePs> out, block;
  for (std::size_t b = 0; b < plan.count; ++b) {
    fill_block(block, rate_hz, plan.start(b), plan.length(b), seed, b);
    out.insert(out.end(), block.begin(), block.end());
  }
  return out;
}

std::vector<std::uint64_t> delay_histogram(std::span<const TimePs> a, std::span<const TimePs> b,
                                           TimePs range_ps, TimePs bin_ps) {
  const std::size_t bins = hist_bins(range_ps, bin_ps);
  std::vector<std::uint64_t> hist(bins, 0);
  for (TimePs ta : a) histogram_row(b, ta, range_ps, bin_ps, hist.data(), bins);
  return hist;
}

std::vector<std::uint8_t> toeplitz_hash(std::span<const std::uint8_t> bits,
                                        std::span<const std::uint8_t> seed_bits,
                                        std::size_t out_len) {
  check_toeplitz(bits, seed_bits, out_len);
  std::vector<std::uint8_t> out(out_len);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = toeplitz_row(bits, seed_bits, i);
  return out;
}

std::vector<std::vector<std::pair<int, int>>> batch_connectivity(
    std::span<const topology::CrossbarSwitch> switches) {
  std::vector<std::vector<std::pair<int, int>>> out;
  out.reserve(switches.size());
  for (const auto& sw : switches) out.push_back(topology::effective_connectivity(sw));
  return out;
}

std::vector<std::uint64_t> correlate_many(
    std::span<const std::pair<std::span<const TimePs>, std::span<const TimePs>>> lists,
    TimePs window_ps, std::span<const TimePs> offsets) {
  std::vector<std::uint64_t> out;
  out.reserve(lists.size());
  for (std::size_t i = 0; i < lists.size(); ++i)
    out.push_back(count_coincidences(lists[i].first, lists[i].second, window_ps, offsets[i]));
  return out;
}

}  // namespace serial

}  // namespace qnet
