// Serial reference versus OpenMP kernels. Set ISOEFFECT_THREADS to cap the
// parallel versions.

#include "isoeffect/kernels.hpp"
#include "isoeffect/synth.hpp"

#include <benchmark/benchmark.h>

#include <numeric>
#include <random>

using namespace isoeffect;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<double> v(n);
  for (auto& x : v) x = z(rng);
  return v;
}

Eigen::MatrixXd design(Eigen::Index n, Eigen::Index p) {
  const auto v = normals(static_cast<std::size_t>(n * p), 1);
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), n, p);
}

kernels::BinnedMatrix binned(std::size_t n, std::size_t f) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> b(0, 255);
  kernels::BinnedMatrix m;
  m.n_rows = n;
  m.n_features = f;
  m.bins.resize(n * f);
  for (auto& x : m.bins) x = static_cast<std::uint8_t>(b(rng));
  m.bin_counts.assign(f, 256);
  return m;
}

template <bool Parallel>
void BM_Sum(benchmark::State& state) {
  const auto v = normals(static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(Parallel ? kernels::sum(v) : kernels::sum_serial(v));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_CrossProducts(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  const auto x = design(n, 20);
  const auto w = normals(static_cast<std::size_t>(n), 4);
  const auto z = normals(static_cast<std::size_t>(n), 5);
  for (auto _ : state) {
    auto cp = Parallel ? kernels::weighted_cross_products(x, w, z) : kernels::weighted_cross_products_serial(x, w, z);
    benchmark::DoNotOptimize(cp.gram.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}

template <bool Parallel>
void BM_Histogram(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = binned(n, 10);
  std::vector<std::uint32_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0u);
  const auto g = normals(n, 6);
  const std::vector<double> h(n, 0.25);
  for (auto _ : state) {
    auto hist = Parallel ? kernels::build_histogram(x, rows, g, h) : kernels::build_histogram_serial(x, rows, g, h);
    benchmark::DoNotOptimize(hist.grad.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

template <bool Parallel>
void BM_McTally(benchmark::State& state) {
  SynthSpec spec;
  spec.seed = 7;
  const auto samples = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto t = Parallel ? mc_tally(spec, 0, samples) : mc_tally_serial(spec, 0, samples);
    benchmark::DoNotOptimize(t.both_on);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_Sum<false>)->Name("sum/serial")->Arg(1 << 20);
BENCHMARK(BM_Sum<true>)->Name("sum/parallel")->Arg(1 << 20);
BENCHMARK(BM_CrossProducts<false>)->Name("cross_products/serial")->Arg(20000);
BENCHMARK(BM_CrossProducts<true>)->Name("cross_products/parallel")->Arg(20000);
BENCHMARK(BM_Histogram<false>)->Name("histogram/serial")->Arg(100000);
BENCHMARK(BM_Histogram<true>)->Name("histogram/parallel")->Arg(100000);
BENCHMARK(BM_McTally<false>)->Name("mc_tally/serial")->Arg(1 << 18)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_McTally<true>)->Name("mc_tally/parallel")->Arg(1 << 18)->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
  kernels::apply_thread_env();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
