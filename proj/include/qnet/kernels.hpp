#pragma once

// Data-parallel kernels. Each has an OpenMP version in qnet::kernels and a
// plain serial reference with the same signature in qnet::serial; both
// produce identical output for any thread count.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "qnet/topology.hpp"

namespace qnet {

using TimePs = std::int64_t;

/// Fixed-size work split used by the Poisson generator. Block boundaries
/// depend only on the rate, never on the thread count.
TimePs poisson_block_ps(double rate_hz);

namespace kernels {

std::vector<TimePs> poisson_times(double rate_hz, double duration_s, std::uint64_t seed);

/// Histogram of tb - ta over all cross pairs with |tb - ta| <= range + bin/2;
/// bin k is centred at -range + k*bin.
std::vector<std::uint64_t> delay_histogram(std::span<const TimePs> a, std::span<const TimePs> b,
                                           TimePs range_ps, TimePs bin_ps);

/// Toeplitz hash of `bits` to `out_len` bits. `seed_bits` holds
/// bits.size() + out_len - 1 matrix diagonals.
std::vector<std::uint8_t> toeplitz_hash(std::span<const std::uint8_t> bits,
                                        std::span<const std::uint8_t> seed_bits,
                                        std::size_t out_len);

std::vector<std::vector<std::pair<int, int>>> batch_connectivity(
    std::span<const topology::CrossbarSwitch> switches);

/// Coincidence count for each of several tag-list pairs.
std::vector<std::uint64_t> correlate_many(
    std::span<const std::pair<std::span<const TimePs>, std::span<const TimePs>>> lists,
    TimePs window_ps, std::span<const TimePs> offsets);

}  // namespace kernels

namespace serial {

std::vector<TimePs> poisson_times(double rate_hz, double duration_s, std::uint64_t seed);
std::vector<std::uint64_t> delay_histogram(std::span<const TimePs> a, std::span<const TimePs> b,
                                           TimePs range_ps, TimePs bin_ps);
std::vector<std::uint8_t> toeplitz_hash(std::span<const std::uint8_t> bits,
                                        std::span<const std::uint8_t> seed_bits,
                                        std::size_t out_len);
std::vector<std::vector<std::pair<int, int>>> batch_connectivity(
    std::span<const topology::CrossbarSwitch> switches);
std::vector<std::uint64_t> correlate_many(
    std::span<const std::pair<std::span<const TimePs>, std::span<const TimePs>>> lists,
    TimePs window_ps, std::span<const TimePs> offsets);

}  // namespace serial

/// Greedy earliest-first matching count; shared by both kernel variants.
std::uint64_t count_coincidences(std::span<const TimePs> a, std::span<const TimePs> b,
                                 TimePs window_ps, TimePs offset_ps);

}  // namespace qnet
