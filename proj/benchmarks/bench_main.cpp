#include "quantschemes/chain.hpp"
#include "quantschemes/filter.hpp"
#include "quantschemes/grid.hpp"
#include "quantschemes/quantizer.hpp"
#include "quantschemes/sample_source.hpp"

#include <benchmark/benchmark.h>

#include <memory>

using namespace qs;

namespace {

Grid gaussian_grid(std::size_t dim, std::size_t n) {
    return Grid(dim, SampleSource::generator(Distribution::standard_gaussian, dim, 5).draw(n));
}

void BM_Locate(benchmark::State& state) {
    const auto dim = static_cast<std::size_t>(state.range(0));
    const auto n = static_cast<std::size_t>(state.range(1));
    const VoronoiLocator locator(gaussian_grid(dim, n));
    const auto queries = SampleSource::generator(Distribution::standard_gaussian, dim, 6).draw(4096);
    for (auto _ : state)
        for (std::size_t q = 0; q < 4096; ++q) benchmark::DoNotOptimize(locator.locate(&queries[q * dim]));
    state.SetItemsProcessed(state.iterations() * 4096);
}
BENCHMARK(BM_Locate)->Args({1, 200})->Args({2, 150})->Args({3, 500});

void BM_Distortion(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Grid grid = gaussian_grid(2, n);
    const auto batch = SampleSource::batch(2, SampleSource::generator(Distribution::standard_gaussian, 2, 7).draw(100'000));
    for (auto _ : state) benchmark::DoNotOptimize(distortion_and_gradient(grid, batch).value);
}
BENCHMARK(BM_Distortion)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

QuantizedChain brownian_chain(std::size_t n_bar, std::size_t steps, std::size_t paths) {
    const auto model = brownian_model(1);
    const TimeMesh mesh{1.0, steps};
    std::vector<std::size_t> sizes(steps + 1, n_bar);
    sizes[0] = 1;
    const ScaledGaussianLayers method{{{n_bar, newton_1d(standard_gaussian_law(), n_bar)}}, brownian_layer_map({0.0})};
    return estimate_companions(model, mesh, build_layer_grids(model, mesh, sizes, method, 1), paths, 1);
}

void BM_Companions(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(brownian_chain(50, 10, 100'000).transitions.size());
    state.SetItemsProcessed(state.iterations() * 100'000);
}
BENCHMARK(BM_Companions)->Unit(benchmark::kMillisecond);

void BM_ForwardFilter(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    auto chain = std::make_shared<const QuantizedChain>(brownian_chain(n, 10, 200'000));
    std::vector<std::vector<double>> obs(11, std::vector<double>{0.3});
    const auto model = builtin_model("linear-gaussian", chain, {}, obs);
    for (auto _ : state) benchmark::DoNotOptimize(forward_filter(model).log_total_mass);
}
BENCHMARK(BM_ForwardFilter)->Arg(20)->Arg(100)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
