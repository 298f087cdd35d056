#include "quantschemes/error.hpp"
#include "quantschemes/experiments.hpp"
#include "quantschemes/random.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace qs;

TEST_CASE("fit_rate") {
    SUBCASE("exact model recovery") {
        std::vector<double> n{5, 10, 20, 40, 80}, e;
        for (double v : n) e.push_back(3.0 / v + 0.1);
        const auto fit = fit_rate(n, e, -1.0);
        CHECK(fit.a_hat == doctest::Approx(3.0));
        CHECK(fit.b_hat == doctest::Approx(0.1));
        CHECK(fit.residual < 1e-20);
    }
    SUBCASE("noisy synthetic data") {
        Rng rng(12);
        std::uniform_real_distribution<double> noise(-0.01, 0.01);
        std::vector<double> n, e;
        for (int v = 5; v <= 150; v += 5) {
            n.push_back(v);
            e.push_back(3.0 / v + 0.1 + noise(rng));
        }
        const auto fit = fit_rate(n, e, -1.0);
        CHECK(std::abs(fit.a_hat - 3.0) <= 0.3);
        CHECK(fit.residual < constant_model_residual(e));
    }
    SUBCASE("validation") {
        CHECK_THROWS_AS(fit_rate({1, 2}, {1, 2}, -1.0), InputError);
        CHECK_THROWS_AS(fit_rate({1, 1, 2}, {1, 2, 3}, -1.0), InputError);
        CHECK_THROWS_AS(fit_rate({1, 2, 3}, {1, 2, 3}, 0.0), InputError);
    }
}

TEST_CASE("log-log slope") {
    std::vector<double> n{10, 20, 40}, e{1.0, 0.5, 0.25};
    CHECK(loglog_slope(n, e) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(loglog_slope(n, {1.0, 0.0, 1.0}), InputError);
}

TEST_CASE("experiment config") {
    ExperimentConfig c;
    CHECK(c.sweep_sizes(150) == std::vector<std::size_t>{150});
    c.grid_size = 40;
    CHECK(c.sweep_sizes(150) == std::vector<std::size_t>{40});
    CHECK(c.layer_sizes(40, 3) == std::vector<std::size_t>{1, 40, 40, 40});
    c.grid_size = 0;
    c.sizes = {5, 6, 7};
    CHECK(c.layer_sizes(0, 3) == std::vector<std::size_t>{1, 5, 6, 7});
    CHECK(c.layer_sizes(0, 2) == std::vector<std::size_t>{5, 6, 7});
    CHECK_THROWS_AS(c.layer_sizes(0, 5), InputError);

    ExperimentConfig bad;
    bad.mc_paths = 0;
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad = {};
    bad.sweep = {10, 0};
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad = {};
    bad.filter_model = "particle";
    CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("gaussian grid provider") {
    GaussianGridProvider one(1);
    CHECK(one.get(2).point(1)[0] == doctest::Approx(std::sqrt(2.0 / 3.141592653589793)));
    GaussianGridProvider two(2, 3, 20'000);
    const Grid& g = two.get(6);
    CHECK(g.size() == 6);
    CHECK(g.dim() == 2);
    CHECK(&two.get(6) == &g);
    CHECK_THROWS_AS(two.get(0), InputError);
}

TEST_CASE("small experiments run end to end") {
    ExperimentConfig c;
    c.mc_paths = 20'000;
    c.sweep = {5, 10, 20};
    const auto bid = run_bidask(c);
    REQUIRE(bid.rows.size() == 3);
    CHECK(bid.fit.has_value());
    CHECK(std::abs(bid.rows.back().y0 - 2.96) < 0.5);
    std::ostringstream csv;
    write_bsde_report_csv(bid, csv);
    CHECK(csv.str().rfind("grid_size,y0,z0_1,y_error,z_error,dead_rows\n", 0) == 0);
    CHECK(bsde_report_json(bid, c).find("\"seed\"") != std::string::npos);

    c.dim = 1;
    CHECK_THROWS_AS(run_multidim(c), InputError);

    ExperimentConfig f;
    f.mc_paths = 20'000;
    f.trajectories = 3;
    f.sweep = {5, 10};
    const auto rep = run_filter_demo(f);
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.rows[1].error < rep.rows[0].error);

    f.filter_model = "sin-cube";
    f.reference_size = 60;
    const auto sc = run_filter_demo(f);
    CHECK(sc.rows.size() == 2);
}
