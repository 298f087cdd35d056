#include "quantschemes/error.hpp"
#include "quantschemes/grid.hpp"
#include "quantschemes/grid_io.hpp"
#include "quantschemes/quantizer.hpp"
#include "quantschemes/sample_source.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

using namespace qs;

TEST_CASE("grid validation") {
    CHECK_THROWS_AS(Grid(0, {1.0}), InputError);
    CHECK_THROWS_AS(Grid(1, {}), InputError);
    CHECK_THROWS_AS(Grid(2, {1.0, 2.0, 3.0}), InputError);
    CHECK_THROWS_AS(Grid::from_values({0.0, 1.0}, {0.5, 0.6}), InputError);
    CHECK_THROWS_AS(Grid::from_values({0.0, 1.0}, {1.5, -0.5}), InputError);
    CHECK_THROWS_AS(Grid::from_values({0.0, 1.0}, {1.0}), InputError);
    const Grid g = Grid::from_values({0.0, 1.0}, {0.25, 0.75});
    CHECK(g.size() == 2);
    CHECK(g.has_weights());
    CHECK_FALSE(g.without_weights().has_weights());
}

TEST_CASE("nearest neighbor examples and tie rule") {
    const Grid g = Grid::from_values({0.0, 1.0});
    const double a = 0.4, b = 0.5;
    auto n = nearest_neighbor(g, {&a, 1});
    CHECK(n.index == 0);
    CHECK(n.distance == doctest::Approx(0.4));
    n = nearest_neighbor(g, {&b, 1});
    CHECK(n.index == 0);
    CHECK(n.distance == doctest::Approx(0.5));

    const double p2[2] = {1.0, 2.0};
    CHECK_THROWS_AS(nearest_neighbor(g, p2), InputError);

    // Duplicated points tie: the first index wins, also through the locator.
    const Grid dup = Grid::from_values({2.0, -1.0, 2.0, -1.0});
    const VoronoiLocator loc(dup);
    const double x = 1.9, y = -3.0, mid = 0.5;
    CHECK(loc.locate({&x, 1}) == 0);
    CHECK(loc.locate({&y, 1}) == 1);
    CHECK(loc.locate({&mid, 1}) == nearest_neighbor(dup, {&mid, 1}).index);
}

TEST_CASE("locator agrees with the linear scan") {
    for (std::size_t d : {1u, 2u, 3u}) {
        const auto pts = SampleSource::generator(Distribution::standard_gaussian, d, 7 + d).draw(40);
        const Grid g(d, pts);
        const VoronoiLocator loc(g);
        const auto queries = SampleSource::generator(Distribution::standard_gaussian, d, 99).draw(2000);
        for (std::size_t m = 0; m < 2000; ++m) {
            const std::span<const double> q(queries.data() + m * d, d);
            double sq = 0.0;
            const auto idx = loc.locate(q, &sq);
            const auto ref = nearest_neighbor(g, q);
            REQUIRE(idx == ref.index);
            CHECK(std::sqrt(sq) == doctest::Approx(ref.distance));
        }
    }
}

TEST_CASE("distortion examples") {
    auto r = distortion_and_gradient(Grid::from_values({0.25}), SampleSource::batch(1, {0.25}));
    CHECK(r.value == 0.0);
    CHECK(r.gradient[0] == 0.0);

    r = distortion_and_gradient(Grid::from_values({0.0, 1.0}), SampleSource::batch(1, {0.25, 0.75}));
    CHECK(r.value == doctest::Approx(0.0625));
    CHECK(r.gradient[0] == doctest::Approx(-0.25));
    CHECK(r.gradient[1] == doctest::Approx(0.25));

    // Empty cell gets a zero gradient.
    r = distortion_and_gradient(Grid::from_values({0.0, 10.0}), SampleSource::batch(1, {0.1, -0.1}));
    CHECK(r.cell_counts[1] == 0);
    CHECK(r.gradient[1] == 0.0);

    CHECK_THROWS_AS(SampleSource::batch(1, {}), InputError);
}

TEST_CASE("lloyd") {
    SUBCASE("single cell converges to the batch mean") {
        const auto res = lloyd(Grid::from_values({5.0}), SampleSource::batch(1, {1.0, 2.0, 6.0}), {});
        CHECK(res.grid.point(0)[0] == doctest::Approx(3.0));
        CHECK(res.grid.weights()[0] == 1.0);
    }
    SUBCASE("uniform midpoint grid and monotone distortion") {
        const auto batch = SampleSource::generator(Distribution::uniform_cube, 1, 3).draw(200'000);
        std::vector<double> init;
        for (int i = 0; i < 10; ++i) init.push_back(0.05 + 0.09 * i + 0.003 * (i % 3));
        StopCriteria stop;
        stop.max_iterations = 500;
        const auto res = lloyd(Grid::from_values(init), SampleSource::batch(1, batch), stop);
        for (std::size_t i = 0; i < 10; ++i) CHECK(std::abs(res.grid.point(i)[0] - (2.0 * i + 1) / 20.0) < 0.01);
        for (std::size_t t = 1; t < res.distortion_history.size(); ++t)
            CHECK(res.distortion_history[t] <= res.distortion_history[t - 1] * (1 + 1e-12));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(lloyd(Grid::from_values({0.0, 1.0}), SampleSource::batch(1, {0.5}), {}), InputError);
        CHECK_THROWS_AS(lloyd(Grid::from_values({0.0, 0.0}), SampleSource::batch(1, {0.5, 1.0}), {}), InputError);
        CHECK_THROWS_AS(lloyd(Grid::from_values({0.0}), SampleSource::generator(Distribution::standard_gaussian, 1, 1), {}),
                        InputError);
        StopCriteria bad;
        bad.max_iterations = 0;
        CHECK_THROWS_AS(bad.validate(), InputError);
    }
}

TEST_CASE("clvq") {
    SUBCASE("one-step arithmetic") {
        const Sampler one = [](Rng&, std::span<double> out) { out[0] = 1.0; };
        const Grid g = clvq(Grid::from_values({0.0}), SampleSource::generator(one, 1, 1), 1, {0.1, 0.0}, 10);
        CHECK(g.point(0)[0] == doctest::Approx(0.1));
    }
    SUBCASE("single point converges to the mean") {
        const Grid g = clvq(Grid::from_values({1.0}), SampleSource::generator(Distribution::standard_gaussian, 1, 5),
                            100'000, {1.0, 100.0}, 1000);
        CHECK(std::abs(g.point(0)[0]) <= 0.05);
    }
    SUBCASE("overshooting schedule is rejected") {
        CHECK_THROWS_AS(clvq(Grid::from_values({0.0}), SampleSource::generator(Distribution::standard_gaussian, 1, 5),
                             10, {1.0, 0.0}),
                        InputError);
        CHECK_THROWS_AS(clvq(Grid::from_values({0.0}), SampleSource::batch(1, {1.0}), 10), InputError);
    }
}

TEST_CASE("newton_1d") {
    const Grid one = newton_1d(standard_gaussian_law(), 1);
    CHECK(std::abs(one.point(0)[0]) < 1e-12);
    CHECK(one.weights()[0] == doctest::Approx(1.0));

    const Grid two = newton_1d(standard_gaussian_law(), 2);
    const double r = std::sqrt(2.0 / std::numbers::pi);
    CHECK(std::abs(two.point(0)[0] + r) < 1e-10);
    CHECK(std::abs(two.point(1)[0] - r) < 1e-10);

    const Grid u = newton_1d(uniform_law(0.0, 1.0), 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(u.point(i)[0] == doctest::Approx(0.125 + 0.25 * i).epsilon(1e-10));
        CHECK(u.weights()[i] == doctest::Approx(0.25).epsilon(1e-10));
    }

    const Grid big = newton_1d(standard_gaussian_law(), 200);
    std::vector<double> pts(big.points().begin(), big.points().end());
    for (double g : distortion_gradient_1d(standard_gaussian_law(), pts)) CHECK(std::abs(g) <= 1e-10);

    NewtonOptions starved;
    starved.max_iterations = 1;
    CHECK_THROWS_AS(newton_1d(standard_gaussian_law(), 50, starved), ConvergenceError);
}

TEST_CASE("ls_error") {
    CHECK(ls_error(Grid::from_values({0.0, 1.0}), SampleSource::batch(1, {0.0, 1.0}), 3.0) == 0.0);
    const auto batch = SampleSource::generator(Distribution::uniform_cube, 1, 11).draw(400'000);
    const auto src = SampleSource::batch(1, batch);
    const double e2 = ls_error(Grid::from_values({0.5}), src, 2.0);
    CHECK(e2 == doctest::Approx(1.0 / (2.0 * std::sqrt(3.0))).epsilon(0.005));
    CHECK(e2 <= ls_error(Grid::from_values({0.5}), src, 3.0));
    CHECK_THROWS_AS(ls_error(Grid::from_values({0.5}), src, 0.0), InputError);
}

TEST_CASE("scale_grid") {
    const Grid base = Grid::from_values({-1.0, 1.0}, {0.5, 0.5});
    const double zero = 0.0, five = 5.0;
    CHECK(scale_grid(base, {&zero, 1}, 1.0) == base);
    const Grid s = scale_grid(base, {&five, 1}, 2.0);
    CHECK(s.point(0)[0] == 3.0);
    CHECK(s.point(1)[0] == 7.0);
    CHECK(s.weights()[0] == 0.5);

    const Grid b2(2, {1.0, 0.0, 0.0, 1.0});
    const double shift2[2] = {0.0, 0.0};
    CHECK_THROWS_AS(scale_grid(b2, shift2, Eigen::MatrixXd::Ones(2, 2)), InputError);
    CHECK_THROWS_AS(scale_grid(base, {&zero, 1}, -1.0), InputError);

    // e_2(a Gamma + b, a X + b) = a e_2(Gamma, X).
    const auto xs = SampleSource::generator(Distribution::standard_gaussian, 1, 4).draw(10'000);
    std::vector<double> ys;
    for (double x : xs) ys.push_back(5.0 + 2.0 * x);
    const Grid g = newton_1d(standard_gaussian_law(), 8);
    CHECK(ls_error(scale_grid(g, {&five, 1}, 2.0), SampleSource::batch(1, ys), 2.0) ==
          doctest::Approx(2.0 * ls_error(g, SampleSource::batch(1, xs), 2.0)).epsilon(1e-12));
}

TEST_CASE("sample source reproducibility") {
    const auto a = SampleSource::generator(Distribution::standard_gaussian, 2, 42).draw(100);
    const auto b = SampleSource::generator(Distribution::standard_gaussian, 2, 42).draw(100);
    const auto c = SampleSource::generator(Distribution::standard_gaussian, 2, 43).draw(100);
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("grid io") {
    const Grid g(2, {0.1, 1.0 / 3.0, -2.5e-300, 7.0}, {0.3, 0.7});
    std::stringstream ss;
    write_grid(g, ss);
    CHECK(read_grid(ss) == g);

    std::stringstream nw;
    write_grid(Grid::from_values({1.0, 2.0}), nw);
    CHECK_FALSE(read_grid(nw).has_weights());

    std::istringstream example("1 2\n-0.7978845608 0.5\n0.7978845608 0.5\n");
    const Grid e = read_grid(example);
    CHECK(e.size() == 2);
    CHECK(e.point(1)[0] == 0.7978845608);

    std::istringstream mismatch("1 3\n0 0.5\n1 0.5\n");
    try {
        read_grid(mismatch);
        FAIL("expected a parse error");
    } catch (const ParseError& err) {
        CHECK(err.line() > 0);
    }
    std::istringstream bad("1 2\n0 0.5\nx 0.5\n");
    try {
        read_grid(bad);
        FAIL("expected a parse error");
    } catch (const ParseError& err) {
        CHECK(err.line() == 3);
    }
    std::istringstream mixed("1 2\n0 -1\n1 1\n");
    CHECK_THROWS_AS(read_grid(mixed), ParseError);

    std::istringstream legacy("-1\n1\n0.5\n0.5\n");
    const Grid l = read_grid(legacy, GridLayout::legacy);
    CHECK(l.size() == 2);
    CHECK(l.weights()[1] == 0.5);

    const auto path = std::filesystem::temp_directory_path() / "qs_grid_roundtrip.txt";
    save_grid(g, path);
    CHECK(load_grid(path) == g);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_grid("/nonexistent/grid.txt"), InputError);
}
