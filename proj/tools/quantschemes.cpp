#include "quantschemes/bsde.hpp"
#include "quantschemes/chain.hpp"
#include "quantschemes/chain_io.hpp"
#include "quantschemes/error.hpp"
#include "quantschemes/experiments.hpp"
#include "quantschemes/filter.hpp"
#include "quantschemes/grid_io.hpp"
#include "quantschemes/quantizer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

struct Overrides {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> mc_paths;
    std::optional<std::size_t> grid_size;
    std::string sizes;
    std::string sweep;
    std::string out = "out";
    bool legacy_layout = false;
    bool binary = false;
};

std::size_t parse_size(std::string_view token, const char* what) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || ptr != token.data() + token.size() || token.empty())
        throw qs::InputError(std::string("malformed ") + what + " '" + std::string(token) + "'");
    return v;
}

std::vector<std::size_t> parse_list(const std::string& text, const char* what) {
    std::vector<std::size_t> out;
    std::string_view rest(text);
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        out.push_back(parse_size(rest.substr(0, comma), what));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
    }
    return out;
}

/// "a:b:c" (inclusive range with step c) or a comma-separated list.
std::vector<std::size_t> parse_sweep(const std::string& text) {
    if (text.find(':') == std::string::npos) return parse_list(text, "sweep");
    std::vector<std::size_t> parts;
    std::string_view rest(text);
    while (true) {
        const auto colon = rest.find(':');
        parts.push_back(parse_size(rest.substr(0, colon), "sweep"));
        if (colon == std::string_view::npos) break;
        rest.remove_prefix(colon + 1);
    }
    if (parts.size() != 3 || parts[2] == 0 || parts[0] == 0 || parts[0] > parts[1])
        throw qs::InputError("sweep must read start:stop:step with 1 <= start <= stop and step >= 1");
    std::vector<std::size_t> out;
    for (std::size_t v = parts[0]; v <= parts[1]; v += parts[2]) out.push_back(v);
    return out;
}

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw qs::InputError("cannot open config file " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw qs::InputError("config " + path + " is not valid JSON: " + e.what());
    }
}

void check_keys(const json& cfg, const std::set<std::string>& allowed) {
    if (!cfg.is_object()) throw qs::InputError("config must be a JSON object");
    for (const auto& [key, value] : cfg.items())
        if (!allowed.contains(key)) throw qs::InputError("unknown config key '" + key + "'");
}

template <class T>
T get_or(const json& cfg, const char* key, T fallback) {
    if (!cfg.contains(key)) return fallback;
    try {
        return cfg.at(key).get<T>();
    } catch (const json::exception&) {
        throw qs::InputError(std::string("config key '") + key + "' has the wrong type");
    }
}

const std::set<std::string> kExperimentKeys{"n",     "T",   "grid_size",    "sizes",          "sweep",
                                            "mc_paths", "seed", "dim",       "model",          "trajectories",
                                            "reference_size", "grid_dir", "chain", "observations", "sigma"};

qs::ExperimentConfig experiment_config(const std::string& name, const json& cfg, const Overrides& o) {
    check_keys(cfg, kExperimentKeys);
    qs::ExperimentConfig c;
    c.experiment = name;
    c.steps = get_or<std::size_t>(cfg, "n", 0);
    c.horizon = get_or<double>(cfg, "T", 0.0);
    c.grid_size = get_or<std::size_t>(cfg, "grid_size", 0);
    c.sizes = get_or<std::vector<std::size_t>>(cfg, "sizes", {});
    if (cfg.contains("sweep") && cfg["sweep"].is_string())
        c.sweep = parse_sweep(cfg["sweep"].get<std::string>());
    else
        c.sweep = get_or<std::vector<std::size_t>>(cfg, "sweep", {});
    c.mc_paths = get_or<std::uint64_t>(cfg, "mc_paths", c.mc_paths);
    c.seed = get_or<std::uint64_t>(cfg, "seed", c.seed);
    c.dim = get_or<std::size_t>(cfg, "dim", name == "bsde-multidim" ? 2 : 1);
    c.filter_model = get_or<std::string>(cfg, "model", c.filter_model);
    c.trajectories = get_or<std::size_t>(cfg, "trajectories", c.trajectories);
    c.reference_size = get_or<std::size_t>(cfg, "reference_size", c.reference_size);
    if (cfg.contains("grid_dir")) c.grid_dir = get_or<std::string>(cfg, "grid_dir", "");

    if (o.seed) c.seed = *o.seed;
    if (o.mc_paths) c.mc_paths = *o.mc_paths;
    if (o.grid_size) {
        c.grid_size = *o.grid_size;
        c.sweep.clear();
        c.sizes.clear();
    }
    if (!o.sizes.empty()) {
        c.sizes = parse_list(o.sizes, "sizes");
        c.grid_size = 0;
        c.sweep.clear();
    }
    if (!o.sweep.empty()) {
        c.sweep = parse_sweep(o.sweep);
        c.sizes.clear();
    }
    c.legacy_layout = o.legacy_layout;
    c.out = o.out;
    c.validate();
    return c;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode);
    if (!out) throw qs::InputError("cannot write " + path.string());
    return out;
}

void write_text(const fs::path& path, const std::string& text) { open_out(path) << text << '\n'; }

fs::path prepare_out(const Overrides& o) {
    fs::create_directories(o.out);
    return o.out;
}

int cmd_grid(const Overrides& o) {
    const json cfg = load_config(o.config_path);
    check_keys(cfg, {"law", "dim", "method", "size", "samples", "iterations", "a", "b", "lower", "upper", "seed",
                     "init"});
    const auto law = get_or<std::string>(cfg, "law", "gaussian");
    const auto method = get_or<std::string>(cfg, "method", "newton");
    const auto dim = get_or<std::size_t>(cfg, "dim", 1);
    std::size_t size = o.grid_size ? *o.grid_size : get_or<std::size_t>(cfg, "size", 0);
    const auto samples = get_or<std::size_t>(cfg, "samples", 1'000'000);
    const auto seed = o.seed ? *o.seed : get_or<std::uint64_t>(cfg, "seed", 1);
    const double lower = get_or<double>(cfg, "lower", 0.0);
    const double upper = get_or<double>(cfg, "upper", 1.0);
    if (law != "gaussian" && law != "uniform") throw qs::InputError("law must be 'gaussian' or 'uniform'");
    if (dim == 0) throw qs::InputError("dim must be positive");

    std::optional<qs::Grid> init;
    if (cfg.contains("init")) {
        init = qs::load_grid(get_or<std::string>(cfg, "init", ""),
                             o.legacy_layout ? qs::GridLayout::legacy : qs::GridLayout::standard);
        if (size == 0) size = init->size();
    }
    if (size == 0) throw qs::InputError("grid size missing (config 'size' or --grid-size)");

    json summary{{"law", law}, {"method", method}, {"dim", dim}, {"size", size}, {"seed", seed}, {"version", qs::kVersion}};
    qs::Grid grid = qs::Grid::from_values({0.0});
    const auto dist = law == "gaussian" ? qs::Distribution::standard_gaussian : qs::Distribution::uniform_cube;
    if (law == "uniform" && (lower != 0.0 || upper != 1.0) && (method != "newton" || dim != 1))
        throw qs::InputError("custom uniform bounds are supported by the 1D Newton method only");

    if (method == "newton") {
        if (dim != 1) throw qs::InputError("Newton's method needs dim = 1");
        grid = qs::newton_1d(law == "gaussian" ? qs::standard_gaussian_law() : qs::uniform_law(lower, upper), size);
    } else if (method == "lloyd" || method == "clvq") {
        std::vector<double> start;
        if (init) {
            if (init->dim() != dim) throw qs::InputError("initial grid has the wrong dimension");
            start.assign(init->points().begin(), init->points().end());
        } else {
            const auto draw = qs::SampleSource::generator(dist, dim, qs::mix64(seed)).draw(size);
            start = draw;
        }
        if (method == "lloyd") {
            qs::StopCriteria stop;
            stop.max_iterations = get_or<std::size_t>(cfg, "iterations", stop.max_iterations);
            const auto batch = qs::SampleSource::generator(dist, dim, seed).draw(samples);
            const auto source = qs::SampleSource::batch(dim, batch, seed);
            auto result = qs::lloyd(qs::Grid(dim, start), source, stop);
            summary["iterations"] = result.iterations;
            summary["stationarity_defect"] = result.stationarity_defect;
            summary["reseeded_cells"] = result.reseeded_cells;
            grid = std::move(result.grid);
        } else {
            const qs::ClvqSchedule schedule{get_or<double>(cfg, "a", 1.0), get_or<double>(cfg, "b", 9.0)};
            const auto source = qs::SampleSource::generator(dist, dim, seed);
            grid = qs::clvq(qs::Grid(dim, start), source, get_or<std::size_t>(cfg, "iterations", samples), schedule);
        }
    } else {
        throw qs::InputError("method must be 'newton', 'lloyd' or 'clvq'");
    }

    const auto source = qs::SampleSource::generator(dist, dim, qs::mix64(seed + 1));
    summary["distortion"] = qs::distortion_and_gradient(grid, source).value;
    const fs::path dir = prepare_out(o);
    const fs::path file = dir / ("grid_d" + std::to_string(dim) + "_N" + std::to_string(size) + ".txt");
    qs::save_grid(grid, file);
    summary["grid_file"] = file.string();
    write_text(dir / "grid_summary.json", summary.dump(2));
    std::cout << summary.dump(2) << '\n';
    return 0;
}

int cmd_chain(const Overrides& o) {
    const json cfg = load_config(o.config_path);
    check_keys(cfg, {"model", "x0", "mu", "sigma", "theta", "s", "dim", "n", "T", "grid_size", "sizes", "mc_paths",
                     "seed", "method", "lloyd_paths", "grid_dir", "center"});
    const auto name = get_or<std::string>(cfg, "model", "brownian");
    const qs::TimeMesh mesh{get_or<double>(cfg, "T", 1.0), get_or<std::size_t>(cfg, "n", 10)};
    mesh.validate();
    const auto seed = o.seed ? *o.seed : get_or<std::uint64_t>(cfg, "seed", 1);
    const auto mc_paths = o.mc_paths ? *o.mc_paths : get_or<std::uint64_t>(cfg, "mc_paths", 1'000'000);
    if (mc_paths == 0) throw qs::InputError("mc_paths must be at least 1");

    qs::ExperimentConfig sizing;
    sizing.grid_size = o.grid_size ? *o.grid_size : get_or<std::size_t>(cfg, "grid_size", 0);
    sizing.sizes = o.sizes.empty() ? get_or<std::vector<std::size_t>>(cfg, "sizes", {}) : parse_list(o.sizes, "sizes");
    if (o.grid_size) sizing.sizes.clear();
    if (!o.sizes.empty()) sizing.grid_size = 0;
    sizing.validate();
    const auto sizes = sizing.layer_sizes(sizing.sweep_sizes(50).front(), mesh.steps);

    qs::DiffusionModel model;
    qs::LayerMap map;
    std::size_t dim = 1;
    if (name == "brownian") {
        dim = get_or<std::size_t>(cfg, "dim", 1);
        model = qs::brownian_model(dim, get_or<std::vector<double>>(cfg, "x0", std::vector<double>(dim, 0.0)));
        map = qs::brownian_layer_map(model.x0);
    } else if (name == "gbm") {
        const double x0 = get_or<double>(cfg, "x0", 100.0), mu = get_or<double>(cfg, "mu", 0.05),
                     sigma = get_or<double>(cfg, "sigma", 0.2);
        model = qs::geometric_brownian_model(x0, mu, sigma);
        map = qs::lognormal_layer_map(x0, mu, sigma);
    } else if (name == "ou") {
        qs::FilterDemoModel m;
        m.x0 = get_or<double>(cfg, "x0", 0.0);
        m.theta = get_or<double>(cfg, "theta", 1.0);
        m.s = get_or<double>(cfg, "s", 1.0);
        model = qs::ornstein_uhlenbeck_model(m.x0, m.theta, m.s);
        const double dt = mesh.step(), a = 1.0 - m.theta * dt;
        const auto index = [dt](double t) { return static_cast<int>(std::llround(t / dt)); };
        map = qs::gaussian_layer_map([=](double t) { return m.x0 * std::pow(a, index(t)); },
                                     [=](double t) {
                                         double var = 0.0;
                                         for (int j = 0; j < index(t); ++j) var = a * a * var + m.s * m.s * dt;
                                         return std::sqrt(var);
                                     });
    } else {
        throw qs::InputError("model must be 'brownian', 'gbm' or 'ou'");
    }

    const auto method_name = get_or<std::string>(cfg, "method", "scaled-gaussian");
    qs::LayerGridMethod method;
    if (method_name == "scaled-gaussian") {
        qs::GaussianGridProvider provider(dim, seed);
        if (cfg.contains("grid_dir"))
            provider.use_directory(get_or<std::string>(cfg, "grid_dir", ""),
                                   o.legacy_layout ? qs::GridLayout::legacy : qs::GridLayout::standard);
        qs::ScaledGaussianLayers scaled;
        scaled.map = map;
        for (std::size_t k = 0; k < sizes.size(); ++k)
            if ((k > 0 || sizes[0] != 1) && !scaled.base_grids.contains(sizes[k]))
                scaled.base_grids.emplace(sizes[k], provider.get(sizes[k]));
        method = std::move(scaled);
    } else if (method_name == "lloyd") {
        qs::LloydOnSamples lloyd;
        lloyd.num_paths = get_or<std::size_t>(cfg, "lloyd_paths", lloyd.num_paths);
        method = lloyd;
    } else {
        throw qs::InputError("method must be 'scaled-gaussian' or 'lloyd'");
    }

    auto layers = qs::build_layer_grids(model, mesh, sizes, method, seed);
    qs::ChainOptions options;
    options.center = get_or<bool>(cfg, "center", true);
    const auto chain = qs::estimate_companions(model, mesh, std::move(layers), mc_paths, seed, options);

    const fs::path dir = prepare_out(o);
    const fs::path file = dir / (o.binary ? "chain.bin" : "chain.txt");
    qs::save_chain(chain, file, o.binary ? qs::ChainEncoding::binary : qs::ChainEncoding::text);
    json summary{{"model", name},        {"n", mesh.steps},       {"T", mesh.horizon}, {"sizes", sizes},
                 {"mc_paths", mc_paths}, {"seed", seed},          {"centered", chain.centered},
                 {"dead_rows", chain.dead_row_count()},           {"chain_file", file.string()},
                 {"version", qs::kVersion}};
    write_text(dir / "chain_summary.json", summary.dump(2));
    std::cout << summary.dump(2) << '\n';
    return 0;
}

int cmd_bsde(const std::string& name, const Overrides& o) {
    const auto config = experiment_config(name, load_config(o.config_path), o);
    const auto report = name == "bsde-bidask" ? qs::run_bidask(config) : qs::run_multidim(config);
    const fs::path dir = prepare_out(o);
    const std::string stem = name == "bsde-bidask" ? "bidask" : "multidim_d" + std::to_string(config.dim);
    {
        auto out = open_out(dir / (stem + ".csv"));
        qs::write_bsde_report_csv(report, out);
    }
    const std::string summary = qs::bsde_report_json(report, config);
    write_text(dir / (stem + "_summary.json"), summary);
    std::cout << summary << '\n';
    return 0;
}

int cmd_filter(const Overrides& o) {
    const json cfg = load_config(o.config_path);
    if (cfg.is_object() && cfg.contains("chain")) {
        check_keys(cfg, {"chain", "observations", "model", "sigma"});
        const auto chain = std::make_shared<const qs::QuantizedChain>(qs::load_chain(get_or<std::string>(cfg, "chain", "")));
        std::ifstream obs_in(get_or<std::string>(cfg, "observations", ""));
        if (!obs_in) throw qs::InputError("cannot open the observation file");
        qs::BuiltinFilterParams params;
        params.sigma = get_or<double>(cfg, "sigma", 1.0);
        const auto model = qs::builtin_model(get_or<std::string>(cfg, "model", "linear-gaussian"), chain, params,
                                             qs::read_observations_csv(obs_in));
        const auto state = qs::forward_filter(model);
        const fs::path dir = prepare_out(o);
        {
            auto out = open_out(dir / "filter.csv");
            qs::write_filter_csv(state, out);
        }
        const std::string summary = qs::filter_summary_json(state, chain->layers.back());
        write_text(dir / "filter_summary.json", summary);
        std::cout << summary << '\n';
        return 0;
    }
    const auto config = experiment_config("filter-demo", cfg, o);
    const auto report = qs::run_filter_demo(config);
    const fs::path dir = prepare_out(o);
    {
        auto out = open_out(dir / ("filter_" + report.model + ".csv"));
        qs::write_filter_report_csv(report, out);
    }
    const std::string summary = qs::filter_report_json(report, config);
    write_text(dir / ("filter_" + report.model + "_summary.json"), summary);
    std::cout << summary << '\n';
    return 0;
}

int cmd_rate_fit(const Overrides& o) {
    const json cfg = load_config(o.config_path);
    check_keys(cfg, {"input", "dim", "exponent", "pairs"});
    std::vector<double> sizes, errors;
    if (cfg.contains("pairs")) {
        for (const auto& p : cfg["pairs"]) {
            if (!p.is_array() || p.size() != 2) throw qs::InputError("pairs must be [size, error] arrays");
            sizes.push_back(p[0].get<double>());
            errors.push_back(p[1].get<double>());
        }
    } else {
        const auto path = get_or<std::string>(cfg, "input", "");
        std::ifstream in(path);
        if (!in) throw qs::InputError("cannot open rate input " + path);
        for (const auto& row : qs::read_observations_csv(in)) {
            if (row.size() < 2) throw qs::InputError("rate input rows need a size and an error column");
            sizes.push_back(row[0]);
            errors.push_back(row[1]);
        }
    }
    const double exponent = cfg.contains("exponent") ? get_or<double>(cfg, "exponent", -1.0)
                                                      : -1.0 / static_cast<double>(get_or<std::size_t>(cfg, "dim", 1));
    const auto fit = qs::fit_rate(sizes, errors, exponent);
    std::optional<double> slope;
    if (std::all_of(errors.begin(), errors.end(), [](double e) { return e > 0.0; }))
        slope = qs::loglog_slope(sizes, errors);
    const std::string summary = qs::rate_fit_json(fit, qs::constant_model_residual(errors), slope);
    write_text(prepare_out(o) / "rate_fit.json", summary);
    std::cout << summary << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimal quantization schemes for BSDEs and nonlinear filtering"};
    app.require_subcommand(1);
    Overrides o;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "JSON configuration file")->required();
        sub->add_option("--seed", o.seed, "Random seed");
        sub->add_option("--mc-paths", o.mc_paths, "Monte Carlo paths for transition estimation");
        auto* size = sub->add_option("--grid-size", o.grid_size, "Uniform grid size per layer");
        sub->add_option("--sizes", o.sizes, "Explicit layer sizes a,b,c")->excludes(size);
        sub->add_option("--sweep", o.sweep, "Grid-size sweep start:stop:step or a,b,c");
        sub->add_option("--out", o.out, "Output directory");
        sub->add_flag("--legacy-layout", o.legacy_layout, "Read grids in the points-then-weights layout");
        sub->add_flag("--binary", o.binary, "Write chains in the binary encoding");
    };
    const std::vector<std::pair<std::string, std::string>> commands{
        {"grid", "Build an optimal quantization grid"},
        {"chain", "Quantize an Euler chain and estimate transitions and companion weights"},
        {"bsde-bidask", "Bid-ask spread BSDE experiment"},
        {"bsde-multidim", "Multidimensional BSDE experiment with a closed-form solution"},
        {"filter-demo", "Quantized filter demo, or a filter run on a saved chain"},
        {"rate-fit", "Fit error = a N^exponent + b"},
    };
    for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        const std::string name = app.get_subcommands().front()->get_name();
        if (name == "grid") return cmd_grid(o);
        if (name == "chain") return cmd_chain(o);
        if (name == "bsde-bidask" || name == "bsde-multidim") return cmd_bsde(name, o);
        if (name == "filter-demo") return cmd_filter(o);
        return cmd_rate_fit(o);
    } catch (const qs::InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const qs::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
}
