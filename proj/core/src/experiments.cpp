#include "quantschemes/experiments.hpp"

#include "quantschemes/error.hpp"
#include "quantschemes/quantizer.hpp"
#include "quantschemes/random.hpp"
#include "quantschemes/sample_source.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

namespace qs {

RateFit fit_rate(const std::vector<double>& sizes, const std::vector<double>& errors, double exponent) {
    if (sizes.size() != errors.size()) throw InputError("sizes and errors differ in length");
    if (sizes.size() < 3) throw InputError("rate fit needs at least 3 pairs");
    if (std::set<double>(sizes.begin(), sizes.end()).size() != sizes.size())
        throw InputError("rate fit needs distinct grid sizes");
    const auto m = static_cast<Eigen::Index>(sizes.size());
    Eigen::MatrixXd a(m, 2);
    Eigen::VectorXd b(m);
    for (Eigen::Index r = 0; r < m; ++r) {
        const auto i = static_cast<std::size_t>(r);
        if (!(sizes[i] > 0.0) || !std::isfinite(errors[i])) throw InputError("rate fit needs positive sizes and finite errors");
        a(r, 0) = std::pow(sizes[i], exponent);
        a(r, 1) = 1.0;
        b(r) = errors[i];
    }
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < 2) throw InputError("rate fit design matrix is rank deficient");
    const Eigen::Vector2d coef = qr.solve(b);
    RateFit fit;
    fit.a_hat = coef(0);
    fit.b_hat = coef(1);
    fit.exponent = exponent;
    fit.residual = (a * coef - b).squaredNorm();
    return fit;
}

double constant_model_residual(const std::vector<double>& errors) {
    if (errors.empty()) throw InputError("no errors to fit");
    const double mean = std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(errors.size());
    double rss = 0.0;
    for (double e : errors) rss += (e - mean) * (e - mean);
    return rss;
}

double loglog_slope(const std::vector<double>& sizes, const std::vector<double>& errors) {
    if (sizes.size() != errors.size() || sizes.size() < 2) throw InputError("slope needs at least 2 pairs");
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (!(sizes[i] > 0.0) || !(errors[i] > 0.0)) throw InputError("log-log slope needs positive values");
        lx.push_back(std::log(sizes[i]));
        ly.push_back(std::log(errors[i]));
    }
    const double n = static_cast<double>(lx.size());
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    if (!(sxx > 0.0)) throw InputError("slope needs distinct grid sizes");
    return sxy / sxx;
}

GaussianGridProvider::GaussianGridProvider(std::size_t dim, std::uint64_t seed, std::size_t lloyd_samples)
    : dim_(dim), seed_(seed), lloyd_samples_(lloyd_samples) {
    if (dim == 0) throw InputError("dimension must be positive");
    if (lloyd_samples == 0) throw InputError("Lloyd sample size must be positive");
    stop_.max_iterations = 100;
    stop_.relative_distortion_tolerance = 1e-7;
    stop_.stationarity_tolerance = 1e-5;
}

void GaussianGridProvider::use_directory(std::filesystem::path dir, GridLayout layout) {
    dir_ = std::move(dir);
    layout_ = layout;
    cache_.clear();
}

const Grid& GaussianGridProvider::get(std::size_t size) {
    if (size == 0) throw InputError("grid size must be positive");
    if (const auto it = cache_.find(size); it != cache_.end()) return it->second;

    if (dir_) {
        const auto path = *dir_ / ("d" + std::to_string(dim_) + "_N" + std::to_string(size) + ".txt");
        Grid g = load_grid(path, layout_);
        if (g.dim() != dim_ || g.size() != size) throw InputError("grid file " + path.string() + " has the wrong shape");
        return cache_.emplace(size, std::move(g)).first->second;
    }
    if (dim_ == 1) return cache_.emplace(size, newton_1d(standard_gaussian_law(), size)).first->second;

    if (batch_.empty()) batch_ = SampleSource::generator(Distribution::standard_gaussian, dim_, seed_).draw(lloyd_samples_);
    const std::size_t m = batch_.size() / dim_;
    if (m < size) throw InputError("Lloyd sample size is below the grid size");

    Rng rng = substream(seed_, 0x6A000000u + size);
    std::uniform_int_distribution<std::size_t> pick(0, m - 1);
    std::set<std::size_t> chosen;
    std::vector<double> init;
    while (chosen.size() < size) {
        const std::size_t idx = pick(rng);
        if (!chosen.insert(idx).second) continue;
        init.insert(init.end(), batch_.begin() + static_cast<std::ptrdiff_t>(idx * dim_),
                    batch_.begin() + static_cast<std::ptrdiff_t>((idx + 1) * dim_));
    }
    const SampleSource source = SampleSource::batch(dim_, batch_, seed_);
    LloydResult result = lloyd(Grid(dim_, std::move(init)), source, stop_);
    return cache_.emplace(size, std::move(result.grid)).first->second;
}

void ExperimentConfig::validate() const {
    if (mc_paths == 0) throw InputError("mc_paths must be at least 1");
    if (horizon < 0.0 || !std::isfinite(horizon)) throw InputError("time horizon must be positive");
    for (std::size_t s : sweep)
        if (s == 0) throw InputError("sweep grid sizes must be at least 1");
    for (std::size_t s : sizes)
        if (s == 0) throw InputError("grid sizes must be at least 1");
    if (!sizes.empty() && (grid_size != 0 || !sweep.empty()))
        throw InputError("explicit sizes exclude a uniform grid size or sweep");
    if (dim == 0 || dim > 5) throw InputError("dimension must be between 1 and 5");
    if (trajectories == 0) throw InputError("trajectories must be at least 1");
    if (reference_size == 0) throw InputError("reference grid size must be at least 1");
    if (filter_model != "linear-gaussian" && filter_model != "sin-cube")
        throw InputError("unknown filter model '" + filter_model + "'");
}

std::vector<std::size_t> ExperimentConfig::sweep_sizes(std::size_t fallback) const {
    if (!sweep.empty()) return sweep;
    if (grid_size != 0) return {grid_size};
    if (!sizes.empty()) {
        const std::size_t first = sizes.size() > 1 && sizes.front() == 1 ? 1 : 0;
        const double total = std::accumulate(sizes.begin() + static_cast<std::ptrdiff_t>(first), sizes.end(), 0.0);
        return {static_cast<std::size_t>(std::llround(total / static_cast<double>(sizes.size() - first)))};
    }
    return {fallback};
}

std::vector<std::size_t> ExperimentConfig::layer_sizes(std::size_t n_bar, std::size_t steps_) const {
    if (!sizes.empty()) {
        if (sizes.size() == steps_ + 1) return sizes;
        if (sizes.size() == steps_) {
            std::vector<std::size_t> out{1};
            out.insert(out.end(), sizes.begin(), sizes.end());
            return out;
        }
        throw InputError("expected " + std::to_string(steps_ + 1) + " layer sizes, got " + std::to_string(sizes.size()));
    }
    std::vector<std::size_t> out(steps_ + 1, n_bar);
    out[0] = 1;
    return out;
}

namespace {

std::map<std::size_t, Grid> base_grids_for(GaussianGridProvider& provider, const std::vector<std::size_t>& sizes) {
    std::map<std::size_t, Grid> bases;
    for (std::size_t k = 1; k < sizes.size(); ++k)
        if (!bases.contains(sizes[k])) bases.emplace(sizes[k], provider.get(sizes[k]));
    if (sizes[0] != 1 && !bases.contains(sizes[0])) bases.emplace(sizes[0], provider.get(sizes[0]));
    return bases;
}

template <class F>
auto with_context(const std::string& context, F&& body) {
    try {
        return body();
    } catch (const DegenerateObservationError& e) {
        throw DegenerateObservationError(context + ": " + e.what(), e.step());
    } catch (const ConvergenceError& e) {
        throw ConvergenceError(context + ": " + e.what(), e.last_residual());
    } catch (const NumericError& e) {
        throw NumericError(context + ": " + e.what());
    } catch (const ParseError& e) {
        throw ParseError(context + ": " + e.what(), 0);
    } catch (const ModelError& e) {
        throw ModelError(context + ": " + e.what());
    } catch (const InputError& e) {
        throw InputError(context + ": " + e.what());
    }
}

void finish_bsde_report(BsdeReport& report) {
    std::vector<double> sizes, errors;
    for (const auto& row : report.rows) {
        sizes.push_back(static_cast<double>(row.grid_size));
        errors.push_back(row.y_error);
    }
    if (std::set<double>(sizes.begin(), sizes.end()).size() >= 3 && sizes.size() == std::set<double>(sizes.begin(), sizes.end()).size()) {
        report.fit = fit_rate(sizes, errors, -1.0 / static_cast<double>(report.dim));
        report.constant_residual = constant_model_residual(errors);
        if (std::all_of(errors.begin(), errors.end(), [](double e) { return e > 0.0; }))
            report.slope = loglog_slope(sizes, errors);
    }
}

} // namespace

BsdeReport run_bidask(const ExperimentConfig& config) {
    config.validate();
    constexpr double x0 = 100.0, rate_borrow = 0.06, rate_lend = 0.01, mu = 0.05, sigma = 0.2;
    constexpr double strike1 = 95.0, strike2 = 105.0;
    const TimeMesh mesh{config.horizon > 0.0 ? config.horizon : 0.25, config.steps ? config.steps : 20};
    mesh.validate();
    const DiffusionModel model = geometric_brownian_model(x0, mu, sigma);
    const double lambda = (mu - rate_lend) / sigma;

    DriverSpec driver;
    driver.f = [=](double, std::span<const double>, double y, std::span<const double> z) {
        return -rate_lend * y - lambda * z[0] - (rate_borrow - rate_lend) * std::min(y - z[0] / sigma, 0.0);
    };
    driver.h = [=](std::span<const double> x) {
        return std::max(x[0] - strike1, 0.0) - 2.0 * std::max(x[0] - strike2, 0.0);
    };
    driver.lip_f = rate_borrow + lambda + (rate_borrow - rate_lend) / sigma;
    driver.lip_h = 2.0;

    BsdeReport report;
    report.experiment = "bsde-bidask";
    report.dim = 1;
    report.y_reference = 2.96;
    report.z_reference = 0.55;
    report.z_published = 0.55;

    GaussianGridProvider provider(1, config.seed);
    if (config.grid_dir)
        provider.use_directory(*config.grid_dir, config.legacy_layout ? GridLayout::legacy : GridLayout::standard);
    for (std::size_t n_bar : config.sweep_sizes(150)) {
        with_context("bid-ask, grid size " + std::to_string(n_bar), [&] {
            const auto sizes = config.layer_sizes(n_bar, mesh.steps);
            const ScaledGaussianLayers method{base_grids_for(provider, sizes), lognormal_layer_map(x0, mu, sigma)};
            auto layers = build_layer_grids(model, mesh, sizes, method, config.seed);
            const QuantizedChain chain = estimate_companions(model, mesh, std::move(layers), config.mc_paths, config.seed);
            const QuantizedBsdeSolution sol = solve_bsde(chain, driver);
            BsdeSweepRow row;
            row.grid_size = n_bar;
            row.y0 = sol.y0;
            row.z0 = sol.z0;
            row.y_error = std::abs(sol.y0 - report.y_reference);
            row.z_error = std::abs(sol.z0[0] - report.z_reference);
            row.dead_rows = chain.dead_row_count();
            report.rows.push_back(std::move(row));
            return 0;
        });
    }
    finish_bsde_report(report);
    return report;
}

BsdeReport run_multidim(const ExperimentConfig& config, GaussianGridProvider* grids) {
    config.validate();
    const std::size_t d = config.dim;
    if (d < 2) throw InputError("the multidimensional example needs d in {2, 3, 4, 5}");
    const TimeMesh mesh{config.horizon > 0.0 ? config.horizon : 0.5, config.steps ? config.steps : 10};
    mesh.validate();
    const DiffusionModel model = brownian_model(d);
    const double level = (2.0 + static_cast<double>(d)) / (2.0 * static_cast<double>(d));
    const double horizon = mesh.horizon;

    DriverSpec driver;
    driver.f = [level](double, std::span<const double>, double y, std::span<const double> z) {
        double total = 0.0;
        for (double v : z) total += v;
        return total * (y - level);
    };
    driver.h = [horizon](std::span<const double> x) {
        double total = horizon;
        for (double v : x) total += v;
        return 1.0 / (1.0 + std::exp(-total));
    };

    BsdeReport report;
    report.experiment = "bsde-multidim";
    report.dim = d;
    report.y_reference = 0.5;
    report.z_reference = 0.25;
    report.z_published = 0.24;

    std::optional<GaussianGridProvider> own;
    if (!grids || grids->dim() != d) {
        own.emplace(d, config.seed);
        if (config.grid_dir)
            own->use_directory(*config.grid_dir, config.legacy_layout ? GridLayout::legacy : GridLayout::standard);
        grids = &*own;
    }
    for (std::size_t n_bar : config.sweep_sizes(150)) {
        with_context("multidim d=" + std::to_string(d) + ", grid size " + std::to_string(n_bar), [&] {
            const auto sizes = config.layer_sizes(n_bar, mesh.steps);
            const ScaledGaussianLayers method{base_grids_for(*grids, sizes), brownian_layer_map(model.x0)};
            auto layers = build_layer_grids(model, mesh, sizes, method, config.seed);
            const QuantizedChain chain = estimate_companions(model, mesh, std::move(layers), config.mc_paths, config.seed);
            const QuantizedBsdeSolution sol = solve_bsde(chain, driver);
            BsdeSweepRow row;
            row.grid_size = n_bar;
            row.y0 = sol.y0;
            row.z0 = sol.z0;
            row.y_error = std::abs(sol.y0 - report.y_reference);
            for (double z : sol.z0) row.z_error = std::max(row.z_error, std::abs(z - report.z_reference));
            row.dead_rows = chain.dead_row_count();
            report.rows.push_back(std::move(row));
            return 0;
        });
    }
    finish_bsde_report(report);
    return report;
}

FilterDemoModel filter_demo_model(const ExperimentConfig& config) {
    FilterDemoModel m;
    if (config.steps) m.steps = config.steps;
    if (config.horizon > 0.0) m.horizon = config.horizon;
    return m;
}

QuantizedChain ou_signal_chain(const FilterDemoModel& m, std::size_t grid_size, std::uint64_t mc_paths,
                               std::uint64_t seed) {
    const TimeMesh mesh{m.horizon, m.steps};
    mesh.validate();
    const DiffusionModel model = ornstein_uhlenbeck_model(m.x0, m.theta, m.s);
    const double dt = mesh.step();
    const double a = 1.0 - m.theta * dt;
    const auto index = [dt](double t) { return static_cast<int>(std::llround(t / dt)); };
    // Moments of the Euler chain X_{k+1} = a X_k + s dW.
    auto mean = [=](double t) { return m.x0 * std::pow(a, index(t)); };
    auto stddev = [=](double t) {
        double var = 0.0;
        for (int j = 0; j < index(t); ++j) var = a * a * var + m.s * m.s * dt;
        return std::sqrt(var);
    };
    GaussianGridProvider provider(1, seed);
    std::vector<std::size_t> sizes(m.steps + 1, grid_size);
    sizes[0] = 1;
    const ScaledGaussianLayers method{{{grid_size, provider.get(grid_size)}}, gaussian_layer_map(mean, stddev)};
    auto layers = build_layer_grids(model, mesh, sizes, method, seed);
    return estimate_companions(model, mesh, std::move(layers), mc_paths, seed, ChainOptions{true, false});
}

FilterReport run_filter_demo(const ExperimentConfig& config) {
    config.validate();
    const FilterDemoModel m = filter_demo_model(config);
    const TimeMesh mesh{m.horizon, m.steps};
    mesh.validate();
    const DiffusionModel signal = ornstein_uhlenbeck_model(m.x0, m.theta, m.s);
    const std::string& name = config.filter_model;
    BuiltinFilterParams params;
    params.sigma = m.sigma_obs;

    std::vector<SimulatedTrajectory> paths;
    for (std::size_t t = 0; t < config.trajectories; ++t)
        paths.push_back(simulate_trajectory(name, signal, mesh, params, mix64(config.seed + 0x5EED0000u + t)));

    const auto posterior_mean = [&](const std::shared_ptr<const QuantizedChain>& chain,
                                    const SimulatedTrajectory& path) {
        const FilterModel model = builtin_model(name, chain, params, path.observations);
        const FilterState state = forward_filter(model);
        return posterior_moments(state, chain->layers.back()).mean[0];
    };

    std::vector<double> reference;
    if (name == "linear-gaussian") {
        for (const auto& path : paths) {
            std::vector<double> ys;
            for (const auto& y : path.observations) ys.push_back(y[0]);
            reference.push_back(kalman_filter(m.x0, m.theta, m.s, mesh, m.sigma_obs, ys).mean.back());
        }
    } else {
        with_context("sin-cube reference grid", [&] {
            const auto chain = std::make_shared<const QuantizedChain>(
                ou_signal_chain(m, config.reference_size, config.mc_paths, mix64(config.seed + 1)));
            for (const auto& path : paths) reference.push_back(posterior_mean(chain, path));
            return 0;
        });
    }

    FilterReport report;
    report.model = name;
    for (std::size_t n_bar : config.sweep_sizes(100)) {
        with_context("filter demo, grid size " + std::to_string(n_bar), [&] {
            const auto chain =
                std::make_shared<const QuantizedChain>(ou_signal_chain(m, n_bar, config.mc_paths, config.seed));
            FilterSweepRow row;
            row.grid_size = n_bar;
            double sq = 0.0;
            for (std::size_t t = 0; t < paths.size(); ++t) {
                const double err = std::abs(posterior_mean(chain, paths[t]) - reference[t]);
                sq += err * err;
                row.mean_error += err;
                row.max_error = std::max(row.max_error, err);
            }
            const double count = static_cast<double>(paths.size());
            row.error = std::sqrt(sq / count);
            row.mean_error /= count;
            report.rows.push_back(row);
            return 0;
        });
    }

    std::vector<double> sizes, errors;
    for (const auto& row : report.rows) {
        sizes.push_back(static_cast<double>(row.grid_size));
        errors.push_back(row.error);
    }
    const bool distinct = std::set<double>(sizes.begin(), sizes.end()).size() == sizes.size();
    if (distinct && sizes.size() >= 2 && std::all_of(errors.begin(), errors.end(), [](double e) { return e > 0.0; }))
        report.slope = loglog_slope(sizes, errors);
    if (distinct && sizes.size() >= 3) report.fit = fit_rate(sizes, errors, -1.0);
    return report;
}

void write_bsde_report_csv(const BsdeReport& report, std::ostream& out) {
    const std::size_t q = report.rows.empty() ? report.dim : report.rows.front().z0.size();
    out << "grid_size,y0";
    for (std::size_t c = 0; c < q; ++c) out << ",z0_" << c + 1;
    out << ",y_error,z_error,dead_rows\n";
    out.precision(17);
    for (const auto& row : report.rows) {
        out << row.grid_size << ',' << row.y0;
        for (double z : row.z0) out << ',' << z;
        out << ',' << row.y_error << ',' << row.z_error << ',' << row.dead_rows << '\n';
    }
}

void write_filter_report_csv(const FilterReport& report, std::ostream& out) {
    out << "grid_size,rms_error,mean_error,max_error\n";
    out.precision(17);
    for (const auto& row : report.rows)
        out << row.grid_size << ',' << row.error << ',' << row.mean_error << ',' << row.max_error << '\n';
}

namespace {

nlohmann::json config_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["experiment"] = c.experiment;
    j["n"] = c.steps;
    j["T"] = c.horizon;
    j["grid_size"] = c.grid_size;
    j["sizes"] = c.sizes;
    j["sweep"] = c.sweep;
    j["mc_paths"] = c.mc_paths;
    j["seed"] = c.seed;
    j["dim"] = c.dim;
    j["filter_model"] = c.filter_model;
    j["trajectories"] = c.trajectories;
    j["reference_size"] = c.reference_size;
    j["grid_dir"] = c.grid_dir ? c.grid_dir->string() : "";
    j["legacy_layout"] = c.legacy_layout;
    return j;
}

nlohmann::json fit_json(const RateFit& fit) {
    return {{"a_hat", fit.a_hat}, {"b_hat", fit.b_hat}, {"exponent", fit.exponent}, {"residual", fit.residual}};
}

} // namespace

std::string bsde_report_json(const BsdeReport& report, const ExperimentConfig& config) {
    nlohmann::json j;
    j["version"] = kVersion;
    j["config"] = config_json(config);
    j["experiment"] = report.experiment;
    j["dim"] = report.dim;
    j["y_reference"] = report.y_reference;
    j["z_reference"] = report.z_reference;
    j["z_published"] = report.z_published;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows)
        rows.push_back({{"grid_size", r.grid_size},
                        {"y0", r.y0},
                        {"z0", r.z0},
                        {"y_error", r.y_error},
                        {"z_error", r.z_error},
                        {"dead_rows", r.dead_rows}});
    j["rows"] = rows;
    if (report.fit) {
        j["fit"] = fit_json(*report.fit);
        j["constant_residual"] = report.constant_residual;
    }
    if (report.slope) j["loglog_slope"] = *report.slope;
    return j.dump(2);
}

std::string filter_report_json(const FilterReport& report, const ExperimentConfig& config) {
    nlohmann::json j;
    j["version"] = kVersion;
    j["config"] = config_json(config);
    j["model"] = report.model;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows)
        rows.push_back({{"grid_size", r.grid_size},
                        {"rms_error", r.error},
                        {"mean_error", r.mean_error},
                        {"max_error", r.max_error}});
    j["rows"] = rows;
    if (report.slope) j["loglog_slope"] = *report.slope;
    if (report.fit) j["fit"] = fit_json(*report.fit);
    return j.dump(2);
}

std::string rate_fit_json(const RateFit& fit, double constant_residual, std::optional<double> slope) {
    nlohmann::json j = fit_json(fit);
    j["version"] = kVersion;
    j["constant_residual"] = constant_residual;
    if (slope) j["loglog_slope"] = *slope;
    return j.dump(2);
}

} // namespace qs
