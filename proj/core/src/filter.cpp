#include "quantschemes/filter.hpp"

#include "quantschemes/error.hpp"
#include "quantschemes/parallel.hpp"
#include "quantschemes/random.hpp"
#include "text_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>

namespace qs {

namespace {

constexpr std::size_t kKernelRowBlock = 256;

double gaussian_density(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi); }

void check_f(const FilterModel& model, std::span<const double> f_values) {
    const std::size_t n = model.steps();
    if (f_values.size() != model.chain->layers[n].size())
        throw InputError("function values have size " + std::to_string(f_values.size()) + ", expected " +
                         std::to_string(model.chain->layers[n].size()));
}

} // namespace

void FilterModel::validate() const {
    if (!chain) throw InputError("filter model has no chain");
    if (!g) throw InputError("filter model has no observation density");
    const std::size_t n = steps();
    if (chain->layers.size() != n + 1 || chain->marginals.size() != n + 1)
        throw InputError("filter chain needs n + 1 layers and marginals");
    if (observations.size() != n + 1)
        throw InputError("expected " + std::to_string(n + 1) + " observations, got " +
                         std::to_string(observations.size()));
    for (std::size_t k = 1; k <= n; ++k)
        if (observations[k].size() != observations[0].size())
            throw InputError("observation " + std::to_string(k) + " has a different dimension");
    for (std::size_t k = 0; k < n; ++k) {
        const auto& t = chain->transitions[k];
        if (t.rows != chain->layers[k].size() || t.cols != chain->layers[k + 1].size())
            throw InputError("transition " + std::to_string(k) + " does not match its layers");
    }
}

double FilterKernel::at(std::size_t i, std::size_t j) const {
    const auto first = columns.begin() + static_cast<std::ptrdiff_t>(row_offsets[i]);
    const auto last = columns.begin() + static_cast<std::ptrdiff_t>(row_offsets[i + 1]);
    const auto it = std::lower_bound(first, last, static_cast<std::uint32_t>(j));
    return (it != last && *it == j) ? values[static_cast<std::size_t>(it - columns.begin())] : 0.0;
}

std::vector<double> FilterKernel::dense() const {
    std::vector<double> out(rows * cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t e = row_offsets[i]; e < row_offsets[i + 1]; ++e) out[i * cols + columns[e]] = values[e];
    return out;
}

FilterKernel quantized_kernels(const FilterModel& model, std::size_t k) {
    model.validate();
    if (k < 1 || k > model.steps())
        throw InputError("kernel index " + std::to_string(k) + " outside 1.." + std::to_string(model.steps()));
    const auto& chain = *model.chain;
    const auto& t = chain.transitions[k - 1];
    const Grid& from = chain.layers[k - 1];
    const Grid& to = chain.layers[k];
    const auto& y_prev = model.observations[k - 1];
    const auto& y = model.observations[k];

    FilterKernel h;
    h.rows = t.rows;
    h.cols = t.cols;
    h.row_offsets = t.row_offsets;
    h.columns = t.columns;
    h.values.resize(t.nonzeros());

    const std::size_t blocks = (t.rows + kKernelRowBlock - 1) / kKernelRowBlock;
    for_each_chunk_ordered(
        blocks, 0,
        [&](std::size_t b) {
            const std::size_t end = std::min(t.rows, (b + 1) * kKernelRowBlock);
            for (std::size_t i = b * kKernelRowBlock; i < end; ++i)
                for (std::size_t e = t.row_offsets[i]; e < t.row_offsets[i + 1]; ++e) {
                    const std::size_t j = t.columns[e];
                    const double gv = model.g(k, from.point(i), y_prev, to.point(j), y);
                    if (!(gv >= 0.0) || !std::isfinite(gv))
                        throw ModelError("observation density is negative or not finite at (k, i, j) = (" +
                                         std::to_string(k) + ", " + std::to_string(i) + ", " + std::to_string(j) +
                                         ")");
                    h.values[e] = gv * t.probabilities[e];
                }
        },
        [](std::size_t) {});
    return h;
}

std::vector<double> FilterState::unnormalized(std::size_t k) const {
    std::vector<double> out = normalized.at(k);
    const double scale = std::exp(log_mass.at(k));
    for (double& v : out) v *= scale;
    return out;
}

FilterState forward_filter(const FilterModel& model) {
    model.validate();
    const std::size_t n = model.steps();
    FilterState state;
    state.normalized.reserve(n + 1);
    state.log_mass.reserve(n + 1);
    state.normalized.push_back(model.chain->marginals[0]);
    state.log_mass.push_back(0.0);

    for (std::size_t k = 1; k <= n; ++k) {
        const FilterKernel h = quantized_kernels(model, k);
        const auto& prev = state.normalized.back();
        std::vector<double> next(h.cols, 0.0);
        for (std::size_t i = 0; i < h.rows; ++i) {
            if (prev[i] == 0.0) continue;
            for (std::size_t e = h.row_offsets[i]; e < h.row_offsets[i + 1]; ++e)
                next[h.columns[e]] += prev[i] * h.values[e];
        }
        double mass = 0.0;
        for (double v : next) mass += v;
        if (!(mass > 0.0) || !std::isfinite(mass))
            throw DegenerateObservationError("filter mass vanishes at step " + std::to_string(k), k);
        for (double& v : next) v /= mass;
        state.log_mass.push_back(state.log_mass.back() + std::log(mass));
        state.normalized.push_back(std::move(next));
    }
    state.normalized_final = state.normalized.back();
    state.log_total_mass = state.log_mass.back();
    return state;
}

double ScaledValue::resolve() const { return value * std::exp(log_scale); }

ScaledValue backward_value_scaled(const FilterModel& model, std::span<const double> f_values) {
    model.validate();
    check_f(model, f_values);
    const std::size_t n = model.steps();
    std::vector<double> u(f_values.begin(), f_values.end());
    std::vector<double> ones(u.size(), 1.0);
    double log_scale = 0.0;
    double log_ones = 0.0;

    for (std::size_t k = n; k >= 1; --k) {
        const FilterKernel h = quantized_kernels(model, k);
        std::vector<double> next(h.rows, 0.0), next_ones(h.rows, 0.0);
        for (std::size_t i = 0; i < h.rows; ++i)
            for (std::size_t e = h.row_offsets[i]; e < h.row_offsets[i + 1]; ++e) {
                next[i] += h.values[e] * u[h.columns[e]];
                next_ones[i] += h.values[e] * ones[h.columns[e]];
            }
        // Mass reachable from the support of p^0 decides degeneracy, not the sign pattern of f.
        double reach = 0.0, top = 0.0, top_ones = 0.0;
        for (std::size_t i = 0; i < h.rows; ++i) {
            top = std::max(top, std::abs(next[i]));
            top_ones = std::max(top_ones, next_ones[i]);
        }
        if (k == 1)
            for (std::size_t i = 0; i < h.rows; ++i) reach += model.chain->marginals[0][i] * next_ones[i];
        if (!(top_ones > 0.0) || !std::isfinite(top_ones) || (k == 1 && !(reach > 0.0)))
            throw DegenerateObservationError("filter mass vanishes at step " + std::to_string(k), k);
        if (!std::isfinite(top)) throw NumericError("backward value overflows at step " + std::to_string(k));
        for (double& v : next_ones) v /= top_ones;
        log_ones += std::log(top_ones);
        if (top > 0.0) {
            for (double& v : next) v /= top;
            log_scale += std::log(top);
        }
        u = std::move(next);
        ones = std::move(next_ones);
    }

    ScaledValue out;
    out.log_scale = log_scale;
    for (std::size_t i = 0; i < u.size(); ++i) out.value += model.chain->marginals[0][i] * u[i];
    return out;
}

double backward_value(const FilterModel& model, std::span<const double> f_values) {
    return backward_value_scaled(model, f_values).resolve();
}

double filter_expectation(const FilterState& state, std::span<const double> f_values) {
    if (f_values.size() != state.normalized_final.size())
        throw InputError("function values have size " + std::to_string(f_values.size()) + ", expected " +
                         std::to_string(state.normalized_final.size()));
    double total = 0.0;
    for (std::size_t i = 0; i < f_values.size(); ++i) total += state.normalized_final[i] * f_values[i];
    return total;
}

PosteriorMoments posterior_moments(const FilterState& state, const Grid& last_layer) {
    if (last_layer.size() != state.normalized_final.size()) throw InputError("layer does not match the filter");
    const std::size_t d = last_layer.dim();
    PosteriorMoments m;
    m.mean.assign(d, 0.0);
    m.variance.assign(d, 0.0);
    for (std::size_t i = 0; i < last_layer.size(); ++i) {
        const auto x = last_layer.point(i);
        for (std::size_t c = 0; c < d; ++c) m.mean[c] += state.normalized_final[i] * x[c];
    }
    for (std::size_t i = 0; i < last_layer.size(); ++i) {
        const auto x = last_layer.point(i);
        for (std::size_t c = 0; c < d; ++c) m.variance[c] += state.normalized_final[i] * (x[c] - m.mean[c]) * (x[c] - m.mean[c]);
    }
    return m;
}

ObservationDensity linear_gaussian_density(double sigma_obs) {
    if (!(sigma_obs > 0.0)) throw InputError("observation noise must be positive");
    return [sigma_obs](std::size_t, std::span<const double>, std::span<const double>, std::span<const double> x,
                       std::span<const double> y) {
        return gaussian_density((y[0] - x[0]) / sigma_obs) / sigma_obs;
    };
}

ObservationDensity increment_density(double sigma, std::function<double(double)> phi) {
    if (!(sigma > 0.0)) throw InputError("observation noise must be positive");
    if (!phi) throw InputError("observation drift is empty");
    return [sigma, phi = std::move(phi)](std::size_t, std::span<const double> x_prev, std::span<const double> y_prev,
                                         std::span<const double>, std::span<const double> y) {
        return gaussian_density((y[0] - y_prev[0] - phi(x_prev[0])) / sigma) / sigma;
    };
}

namespace {

std::function<double(double)> observation_drift(const BuiltinFilterParams& params) {
    if (params.phi) return params.phi;
    return [](double x) { return std::sin(x * x * x); };
}

} // namespace

FilterModel builtin_model(std::string_view name, std::shared_ptr<const QuantizedChain> chain,
                          const BuiltinFilterParams& params, std::vector<std::vector<double>> observations) {
    FilterModel model;
    if (name == "linear-gaussian")
        model.g = linear_gaussian_density(params.sigma);
    else if (name == "sin-cube")
        model.g = increment_density(params.sigma, observation_drift(params));
    else
        throw InputError("unknown filter model '" + std::string(name) + "'");
    if (!chain || chain->dim_x != 1) throw InputError("builtin filter models need a scalar signal chain");
    model.chain = std::move(chain);
    model.observations = std::move(observations);
    model.validate();
    return model;
}

SimulatedTrajectory simulate_trajectory(std::string_view name, const DiffusionModel& signal, const TimeMesh& mesh,
                                        const BuiltinFilterParams& params, std::uint64_t seed) {
    if (signal.dim_x != 1) throw InputError("builtin filter models need a scalar signal");
    if (!(params.sigma > 0.0)) throw InputError("observation noise must be positive");
    const bool linear = name == "linear-gaussian";
    if (!linear && name != "sin-cube") throw InputError("unknown filter model '" + std::string(name) + "'");

    const PathBatch path = euler_paths(signal, mesh, 1, seed);
    SimulatedTrajectory out;
    for (std::size_t k = 0; k <= mesh.steps; ++k) out.signal.push_back(path.state(0, k)[0]);

    Rng rng = substream(seed, 0xF1000000u);
    std::normal_distribution<double> normal;
    const auto phi = observation_drift(params);
    double y_prev = 0.0;
    for (std::size_t k = 0; k <= mesh.steps; ++k) {
        const double eps = normal(rng);
        double y = 0.0;
        if (linear)
            y = out.signal[k] + params.sigma * eps;
        else if (k > 0)
            y = y_prev + phi(out.signal[k - 1]) + params.sigma * eps;
        out.observations.push_back({y});
        y_prev = y;
    }
    return out;
}

KalmanResult kalman_filter(double x0, double theta, double s, const TimeMesh& mesh, double sigma_obs,
                           std::span<const double> observations) {
    mesh.validate();
    if (!(sigma_obs > 0.0)) throw InputError("observation noise must be positive");
    if (observations.size() != mesh.steps + 1) throw InputError("expected n + 1 observations");
    const double dt = mesh.step();
    const double a = 1.0 - theta * dt;
    const double r = sigma_obs * sigma_obs;
    KalmanResult out;
    double m = x0, p = 0.0;
    out.mean.push_back(m);
    out.variance.push_back(p);
    for (std::size_t k = 1; k <= mesh.steps; ++k) {
        m = a * m;
        p = a * a * p + s * s * dt;
        const double gain = p / (p + r);
        m += gain * (observations[k] - m);
        p *= 1.0 - gain;
        out.mean.push_back(m);
        out.variance.push_back(p);
    }
    return out;
}

std::vector<std::vector<double>> read_observations_csv(std::istream& in) {
    std::vector<std::vector<double>> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::vector<double> row;
        std::string_view rest(line);
        bool header = false;
        while (true) {
            const auto comma = rest.find(',');
            std::string_view cell = rest.substr(0, comma);
            while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
            while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
            try {
                row.push_back(detail::parse_double(cell, number));
            } catch (const ParseError&) {
                if (out.empty() && row.empty()) {
                    header = true;
                    break;
                }
                throw;
            }
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (header) {
            if (number > 1 || !out.empty()) throw ParseError("malformed observation row", number);
            continue;
        }
        if (!out.empty() && row.size() != out.front().size())
            throw ParseError("observation row has " + std::to_string(row.size()) + " values, expected " +
                                 std::to_string(out.front().size()),
                             number);
        out.push_back(std::move(row));
    }
    if (out.empty()) throw ParseError("no observations", number);
    return out;
}

void write_observations_csv(const std::vector<std::vector<double>>& observations, std::ostream& out) {
    for (const auto& row : observations) {
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << detail::format_double(row[c]);
        out << '\n';
    }
}

void write_filter_csv(const FilterState& state, std::ostream& out) {
    out << "k,i,weight\n";
    for (std::size_t k = 0; k < state.normalized.size(); ++k)
        for (std::size_t i = 0; i < state.normalized[k].size(); ++i)
            out << k << ',' << i << ',' << detail::format_double(state.normalized[k][i]) << '\n';
}

std::string filter_summary_json(const FilterState& state, const Grid& last_layer) {
    const PosteriorMoments m = posterior_moments(state, last_layer);
    nlohmann::json j;
    j["log_total_mass"] = state.log_total_mass;
    j["posterior_mean"] = m.mean;
    j["posterior_variance"] = m.variance;
    return j.dump(2);
}

} // namespace qs
