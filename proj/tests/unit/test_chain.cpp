#include "quantschemes/chain.hpp"
#include "quantschemes/chain_io.hpp"
#include "quantschemes/diffusion.hpp"
#include "quantschemes/error.hpp"
#include "quantschemes/parallel.hpp"
#include "quantschemes/quantizer.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

using namespace qs;

namespace {

DiffusionModel constant_model(double x0) {
    DiffusionModel m;
    m.x0 = {x0};
    m.drift = [](double, std::span<const double>, std::span<double> out) { out[0] = 0.0; };
    m.diffusion = [](double, std::span<const double>, std::span<double> out) { out[0] = 0.0; };
    return m;
}

QuantizedChain brownian_chain(std::size_t n, std::size_t size, std::size_t paths, std::uint64_t seed,
                              bool center = true) {
    const DiffusionModel model = brownian_model(1);
    const TimeMesh mesh{1.0, n};
    std::vector<std::size_t> sizes(n + 1, size);
    sizes[0] = 1;
    const ScaledGaussianLayers method{{{size, newton_1d(standard_gaussian_law(), size)}}, brownian_layer_map({0.0})};
    auto layers = build_layer_grids(model, mesh, sizes, method, seed);
    return estimate_companions(model, mesh, std::move(layers), paths, seed, ChainOptions{center, true});
}

} // namespace

TEST_CASE("euler paths") {
    SUBCASE("degenerate coefficients") {
        const auto batch = euler_paths(constant_model(2.0), {1.0, 4}, 10, 1);
        for (std::size_t p = 0; p < 10; ++p)
            for (std::size_t k = 0; k <= 4; ++k) CHECK(batch.state(p, k)[0] == 2.0);
    }
    SUBCASE("deterministic recursion") {
        DiffusionModel m = constant_model(1.0);
        m.drift = [](double, std::span<const double> x, std::span<double> out) { out[0] = x[0]; };
        const auto batch = euler_paths(m, {1.0, 2}, 1, 1);
        CHECK(batch.state(0, 2)[0] == doctest::Approx(2.25));
    }
    SUBCASE("Brownian moments and increments") {
        const std::size_t m = 100'000;
        const auto batch = euler_paths(brownian_model(1), {1.0, 4}, m, 3);
        double mean = 0.0, sq = 0.0;
        for (std::size_t p = 0; p < m; ++p) {
            const double x = batch.state(p, 4)[0];
            mean += x;
            sq += x * x;
            double sum = 0.0;
            for (std::size_t k = 0; k < 4; ++k) sum += batch.increment(p, k)[0];
            REQUIRE(std::abs(sum - x) < 1e-12);
        }
        mean /= m;
        const double var = sq / m - mean * mean;
        CHECK(std::abs(mean) <= 3.0 * std::sqrt(1.0 / m));
        CHECK(std::abs(var - 1.0) <= 0.05);
    }
    SUBCASE("non-finite output names the step") {
        DiffusionModel m = constant_model(1.0);
        m.drift = [](double, std::span<const double> x, std::span<double> out) { out[0] = x[0] > 1.5 ? NAN : 1.0; };
        CHECK_THROWS_AS(euler_paths(m, {1.0, 4}, 3, 1), NumericError);
    }
    SUBCASE("worker count does not change results") {
        set_default_workers(1);
        const auto a = euler_paths(brownian_model(2), {1.0, 3}, 40'000, 9);
        set_default_workers(4);
        const auto b = euler_paths(brownian_model(2), {1.0, 3}, 40'000, 9);
        set_default_workers(0);
        CHECK(a.states == b.states);
        CHECK(a.increments == b.increments);
    }
}

TEST_CASE("layer grids") {
    const TimeMesh mesh{1.0, 4};
    SUBCASE("deterministic chain") {
        const auto layers = build_layer_grids(constant_model(3.0), mesh, {1, 1, 1, 1, 1}, LloydOnSamples{1000, {}}, 1);
        for (const auto& g : layers) CHECK(g.point(0)[0] == doctest::Approx(3.0));
    }
    SUBCASE("Brownian dilatation") {
        const Grid base = newton_1d(standard_gaussian_law(), 5);
        const ScaledGaussianLayers method{{{5, base}}, brownian_layer_map({0.0})};
        const auto layers = build_layer_grids(brownian_model(1), mesh, {1, 5, 5, 5, 5}, method, 1);
        for (std::size_t k = 1; k <= 4; ++k)
            for (std::size_t i = 0; i < 5; ++i)
                CHECK(layers[k].point(i)[0] == doctest::Approx(std::sqrt(mesh.knot(k)) * base.point(i)[0]));
    }
    SUBCASE("missing base grid") {
        const ScaledGaussianLayers method{{}, brownian_layer_map({0.0})};
        CHECK_THROWS_AS(build_layer_grids(brownian_model(1), mesh, {1, 5, 5, 5, 5}, method, 1), InputError);
        CHECK_THROWS_AS(build_layer_grids(brownian_model(1), mesh, {1, 5, 5}, method, 1), InputError);
    }
    SUBCASE("Lloyd layers beat scaled Gaussian layers on a GBM marginal") {
        const DiffusionModel gbm = geometric_brownian_model(1.0, 0.05, 0.4);
        const TimeMesh m1{1.0, 1};
        const auto lloyd_layers = build_layer_grids(gbm, m1, {1, 10}, LloydOnSamples{100'000, {}}, 5);
        const ScaledGaussianLayers scaled{{{10, newton_1d(standard_gaussian_law(), 10)}},
                                          lognormal_layer_map(1.0, 0.05, 0.4)};
        const auto gauss_layers = build_layer_grids(gbm, m1, {1, 10}, scaled, 5);
        const auto paths = euler_paths(gbm, m1, 100'000, 5);
        const auto src = SampleSource::batch(1, paths.layer(1));
        CHECK(distortion_and_gradient(lloyd_layers[1], src).value <=
              distortion_and_gradient(gauss_layers[1], src).value);
    }
}

TEST_CASE("companion estimation") {
    SUBCASE("deterministic chain") {
        const TimeMesh mesh{1.0, 2};
        auto layers = build_layer_grids(constant_model(1.0), mesh, {1, 1, 1}, LloydOnSamples{100, {}}, 1);
        const auto chain = estimate_companions(constant_model(1.0), mesh, layers, 100, 1);
        for (const auto& t : chain.transitions) {
            CHECK(t.probability(0, 0) == 1.0);
            CHECK(t.companion(0, 0)[0] == 0.0);
        }
        CHECK(chain.marginals[2][0] == 1.0);
    }
    SUBCASE("one-step Brownian half moment") {
        const TimeMesh mesh{1.0, 1};
        const std::size_t m = 1'000'000;
        std::vector<Grid> layers{Grid::from_values({0.0}, {1.0}), Grid::from_values({-1.0, 1.0})};
        const auto chain =
            estimate_companions(brownian_model(1), mesh, layers, m, 17, ChainOptions{false, true});
        const auto& t = chain.transitions[0];
        CHECK(std::abs(t.probability(0, 0) - 0.5) < 3.0 * 0.5 / std::sqrt(double(m)));
        const double target = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        CHECK(std::abs(t.companion(0, 1)[0] - target) < 3.0 * std::sqrt(0.5 / m));
        CHECK(std::abs(t.companion(0, 0)[0] + target) < 3.0 * std::sqrt(0.5 / m));
    }
    SUBCASE("stochastic rows, centering and marginal consistency") {
        const auto chain = brownian_chain(3, 12, 50'000, 4);
        chain.validate();
        for (std::size_t k = 0; k < chain.steps(); ++k) {
            const auto& t = chain.transitions[k];
            const auto dense = t.dense_probabilities();
            for (std::size_t i = 0; i < t.rows; ++i) {
                double row = 0.0, comp = 0.0;
                for (std::size_t j = 0; j < t.cols; ++j) {
                    row += dense[i * t.cols + j];
                    comp += t.companion(i, j)[0];
                }
                CHECK(std::abs(row - 1.0) <= 1e-12);
                if (!t.is_dead(i)) CHECK(std::abs(comp) <= 1e-12);
            }
            for (std::size_t j = 0; j < t.cols; ++j) {
                double p = 0.0;
                for (std::size_t i = 0; i < t.rows; ++i) p += chain.marginals[k][i] * dense[i * t.cols + j];
                CHECK(std::abs(p - chain.marginals[k + 1][j]) <= 1e-12);
            }
        }
    }
    SUBCASE("dead rows get the uniform fallback") {
        const TimeMesh mesh{1.0, 2};
        std::vector<Grid> layers{Grid::from_values({0.0}, {1.0}), Grid::from_values({-1.0, 1.0, 100.0}),
                                 Grid::from_values({-1.0, 1.0})};
        const auto chain = estimate_companions(brownian_model(1), mesh, layers, 10'000, 2);
        const auto& t = chain.transitions[1];
        REQUIRE(t.dead_rows.size() == 1);
        CHECK(t.dead_rows[0] == 2);
        CHECK(t.probability(2, 0) == 0.5);
        CHECK(t.companion(2, 1)[0] == 0.0);
        CHECK(chain.dead_row_count() == 1);
    }
    SUBCASE("reproducible and independent of the worker count") {
        set_default_workers(1);
        const auto a = brownian_chain(2, 8, 40'000, 6);
        set_default_workers(3);
        const auto b = brownian_chain(2, 8, 40'000, 6);
        set_default_workers(0);
        CHECK(a == b);
    }
}

TEST_CASE("layer quantization errors") {
    const TimeMesh mesh{1.0, 2};
    const ScaledGaussianLayers method{{{20, newton_1d(standard_gaussian_law(), 20)}}, brownian_layer_map({0.0})};
    const auto layers = build_layer_grids(brownian_model(1), mesh, {1, 20, 20}, method, 1);
    const auto errs = layer_quantization_errors(brownian_model(1), mesh, layers, 100'000, 1);
    REQUIRE(errs.size() == 3);
    CHECK(errs[0] == 0.0);
    CHECK(errs[2] > errs[1]);
}

TEST_CASE("chain io") {
    const auto chain = brownian_chain(2, 5, 20'000, 8);
    for (auto enc : {ChainEncoding::text, ChainEncoding::binary}) {
        std::stringstream ss;
        write_chain(chain, ss, enc);
        const auto back = read_chain(ss);
        CHECK(back == chain);
        CHECK(back.centered);
    }
    const auto path = std::filesystem::temp_directory_path() / "qs_chain.bin";
    save_chain(chain, path, ChainEncoding::binary);
    CHECK(load_chain(path) == chain);
    std::filesystem::remove(path);

    // A transition row summing to 0.9 is rejected.
    std::stringstream ss;
    write_chain(chain, ss);
    std::string text = ss.str();
    const auto pos = text.find("transitions 0");
    REQUIRE(pos != std::string::npos);
    const auto line_start = text.find('\n', pos) + 1;
    const auto line_end = text.find('\n', line_start);
    std::istringstream row(text.substr(line_start, line_end - line_start));
    std::ostringstream scaled;
    scaled.precision(17);
    for (double v; row >> v;) scaled << 0.9 * v << ' ';
    text.replace(line_start, line_end - line_start, scaled.str());
    std::istringstream in(text);
    CHECK_THROWS_AS(read_chain(in), ParseError);

    std::istringstream wrong_version("quantschemes-chain 9\n");
    CHECK_THROWS_AS(read_chain(wrong_version), ParseError);
}
