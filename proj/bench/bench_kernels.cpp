// Serial reference vs OpenMP kernels. Run with OMP_NUM_THREADS set.

#include <benchmark/benchmark.h>

#include <random>

#include "qnet/kernels.hpp"

using namespace qnet;

namespace {

std::vector<TimePs> stream(double rate, std::uint64_t seed) { return serial::poisson_times(rate, 1.0, seed); }

std::vector<std::uint8_t> bits(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint8_t> v(n);
  for (auto& b : v) b = static_cast<std::uint8_t>(rng() & 1);
  return v;
}

std::vector<topology::CrossbarSwitch> switches(int n) {
  std::mt19937_64 rng(3);
  std::vector<topology::CrossbarSwitch> out;
  for (int k = 0; k < n; ++k) {
    std::vector<int> cols(60);
    for (int i = 0; i < 60; ++i) cols[i] = i;
    std::shuffle(cols.begin(), cols.end(), rng);
    std::vector<std::pair<int, int>> jumpers, mapping;
    for (int j = 0; j < 20; ++j) jumpers.emplace_back(cols[2 * j], cols[2 * j + 1]);
    std::shuffle(cols.begin(), cols.end(), rng);
    for (int r = 0; r < 60; ++r)
      if (rng() % 4) mapping.emplace_back(r, cols[r]);
    out.push_back(topology::set_crossbar(topology::CrossbarSwitch::make("r", topology::SwitchShape::k60x60, jumpers), mapping));
  }
  return out;
}

template <auto Fn>
void poisson(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(Fn(static_cast<double>(st.range(0)), 1.0, 7));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

template <auto Fn>
void histogram(benchmark::State& st) {
  const auto a = stream(static_cast<double>(st.range(0)), 1), b = stream(static_cast<double>(st.range(0)), 2);
  for (auto _ : st) benchmark::DoNotOptimize(Fn(a, b, 2'000'000, 1'000));
}

template <auto Fn>
void toeplitz(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto in = bits(n, 4), seed = bits(n + n / 2 - 1, 5);
  for (auto _ : st) benchmark::DoNotOptimize(Fn(in, seed, n / 2));
}

template <auto Fn>
void connectivity(benchmark::State& st) {
  const auto sw = switches(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(Fn(sw));
}

template <auto Fn>
void correlate(benchmark::State& st) {
  std::vector<std::vector<TimePs>> tags;
  for (int k = 0; k < 2 * st.range(0); ++k) tags.push_back(stream(1e5, 10 + k));
  std::vector<std::pair<std::span<const TimePs>, std::span<const TimePs>>> lists;
  std::vector<TimePs> offsets;
  for (int k = 0; k < st.range(0); ++k) {
    lists.emplace_back(tags[2 * k], tags[2 * k + 1]);
    offsets.push_back(0);
  }
  for (auto _ : st) benchmark::DoNotOptimize(Fn(lists, 1000, offsets));
}

}  // namespace

BENCHMARK(poisson<serial::poisson_times>)->Name("poisson/serial")->Arg(1'000'000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(poisson<kernels::poisson_times>)->Name("poisson/omp")->Arg(1'000'000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(histogram<serial::delay_histogram>)->Name("delay_histogram/serial")->Arg(20'000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(histogram<kernels::delay_histogram>)->Name("delay_histogram/omp")->Arg(20'000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(toeplitz<serial::toeplitz_hash>)->Name("toeplitz/serial")->Arg(20'000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(toeplitz<kernels::toeplitz_hash>)->Name("toeplitz/omp")->Arg(20'000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(connectivity<serial::batch_connectivity>)->Name("connectivity/serial")->Arg(1000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(connectivity<kernels::batch_connectivity>)->Name("connectivity/omp")->Arg(1000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(correlate<serial::correlate_many>)->Name("correlate_many/serial")->Arg(32)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(correlate<kernels::correlate_many>)->Name("correlate_many/omp")->Arg(32)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
