// Serial reference vs OpenMP variants of the hot kernels.
//
//   HUTD_THREADS=8 ./build/bench/hutd_bench

#include "hutd/kernels.hpp"
#include "hutd/parallel.hpp"
#include "hutd/rng.hpp"

#include <benchmark/benchmark.h>

#include <vector>

using namespace hutd;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

// Pixel-batch forward through the first encoder layer: (n x 60)(60 x 128).
template <auto Kernel>
void gemm_nn(benchmark::State& state)
{
    const std::size_t n = static_cast<std::size_t>(state.range(0)), k = 60, m = 128;
    const auto a = random_values(n * k, 1), b = random_values(k * m, 2);
    std::vector<double> c(n * m);
    for (auto _ : state) {
        Kernel(a, b, c, n, k, m);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}

// Clustering assignment step: n samples against 9 prototypes in 64 dims.
template <auto Kernel>
void sq_distances(benchmark::State& state)
{
    const std::size_t n = static_cast<std::size_t>(state.range(0)), c = 9, d = 64;
    const auto x = random_values(n * d, 3), p = random_values(c * d, 4);
    std::vector<double> out(n * c);
    for (auto _ : state) {
        Kernel(x, p, out, n, c, d);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}

// CEM correlation matrix.
template <auto Kernel>
void gram(benchmark::State& state)
{
    const std::size_t n = static_cast<std::size_t>(state.range(0)), d = 64;
    const auto x = random_values(n * d, 5);
    std::vector<double> out(d * d);
    for (auto _ : state) {
        Kernel(x, out, n, d);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}

// SAM scoring.
template <auto Kernel>
void row_cosine(benchmark::State& state)
{
    const std::size_t n = static_cast<std::size_t>(state.range(0)), d = 64;
    const auto x = random_values(n * d, 6), v = random_values(d, 7);
    std::vector<double> out(n);
    for (auto _ : state) {
        Kernel(x, v, out, n, d);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}

} // namespace

BENCHMARK(gemm_nn<kernels::serial::gemm_nn>)->Name("gemm_nn/serial")->Arg(256)->Arg(4096);
BENCHMARK(gemm_nn<kernels::omp::gemm_nn>)->Name("gemm_nn/omp")->Arg(256)->Arg(4096)->UseRealTime();
BENCHMARK(sq_distances<kernels::serial::sq_distances>)->Name("sq_distances/serial")->Arg(4096);
BENCHMARK(sq_distances<kernels::omp::sq_distances>)->Name("sq_distances/omp")->Arg(4096)->UseRealTime();
BENCHMARK(gram<kernels::serial::gram>)->Name("gram/serial")->Arg(4096);
BENCHMARK(gram<kernels::omp::gram>)->Name("gram/omp")->Arg(4096)->UseRealTime();
BENCHMARK(row_cosine<kernels::serial::row_cosine>)->Name("row_cosine/serial")->Arg(4096);
BENCHMARK(row_cosine<kernels::omp::row_cosine>)->Name("row_cosine/omp")->Arg(4096)->UseRealTime();

BENCHMARK_MAIN();
