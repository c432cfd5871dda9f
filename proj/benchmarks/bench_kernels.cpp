#include <array>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "hpx/fft.hpp"
#include "hpx/implicit_filter.hpp"
#include "hpx/long_conv.hpp"
#include "hpx/metaformer.hpp"
#include "hpx/parallel.hpp"

namespace {

hpx::Tensor random_tensor(hpx::Shape shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    hpx::Tensor t(std::move(shape));
    for (auto& v : t.data()) {
        v = dist(rng);
    }
    return t;
}

// Lengths cover power-of-two, mixed-radix and prime (Bluestein) plans.
void BM_Fft(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto plan = hpx::fft_plan(n);
    std::vector<hpx::Complex> data(n);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& c : data) {
        c = {dist(rng), dist(rng)};
    }
    for (auto _ : state) {
        plan->forward(data);
        benchmark::DoNotOptimize(data.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Fft)->Arg(256)->Arg(1024)->Arg(1000)->Arg(4096)->Arg(1021)->Arg(4093);

void BM_LongConvCentered2D(benchmark::State& state) {
    hpx::set_worker_count(1);
    const auto e = static_cast<std::size_t>(state.range(0));
    const auto u = random_tensor({e, e, 4}, 2);
    const auto h = random_tensor({2 * e - 1, 2 * e - 1, 4}, 3);
    const std::array aligns{hpx::KernelAlign::centered, hpx::KernelAlign::centered};
    for (auto _ : state) {
        benchmark::DoNotOptimize(hpx::long_conv(u, h, aligns));
    }
    state.SetComplexityN(static_cast<long>(e * e));
}
BENCHMARK(BM_LongConvCentered2D)->RangeMultiplier(2)->Range(8, 64)->Complexity(benchmark::oNLogN);

void BM_LongConvCausal1D(benchmark::State& state) {
    hpx::set_worker_count(1);
    const auto l = static_cast<std::size_t>(state.range(0));
    const auto u = random_tensor({l, 4}, 4);
    const auto h = random_tensor({l, 4}, 5);
    const std::array aligns{hpx::KernelAlign::causal};
    for (auto _ : state) {
        benchmark::DoNotOptimize(hpx::long_conv(u, h, aligns));
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_LongConvCausal1D)->RangeMultiplier(4)->Range(64, 4096)->Complexity(benchmark::oNLogN);

void BM_MaterializePixelFilter(benchmark::State& state) {
    const auto e = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(6);
    const auto grid = hpx::pixel_grid(e, e, 32);
    const auto ffn = hpx::FilterFFN::init(grid.feature_dim(), 64, 16, rng);
    const auto window = hpx::init_window(hpx::WindowVariant::radial2d, 16, e, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(hpx::materialize_filter(grid, ffn, window));
    }
}
BENCHMARK(BM_MaterializePixelFilter)->Arg(7)->Arg(14)->Arg(28);

void BM_MicroModelForward(benchmark::State& state) {
    const hpx::Model model(hpx::preset(state.range(0) == 0 ? "micro-hpx" : "micro-hb"));
    const auto images = random_tensor({8, 32, 32, 3}, 7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.forward(images));
    }
    state.SetLabel(model.config().name);
}
BENCHMARK(BM_MicroModelForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
