#include "quantschemes/bsde.hpp"

#include "quantschemes/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <ostream>
#include <string>

namespace qs {

namespace {

void check_step(const QuantizedChain& chain, std::size_t k, std::size_t y_next_size) {
    if (k >= chain.steps()) throw InputError("step index " + std::to_string(k) + " out of range");
    if (y_next_size != chain.layers[k + 1].size())
        throw InputError("layer " + std::to_string(k + 1) + " values have size " + std::to_string(y_next_size) +
                         ", expected " + std::to_string(chain.layers[k + 1].size()));
}

} // namespace

std::vector<double> zeta_raw(const QuantizedChain& chain, std::size_t k, std::span<const double> y_next) {
    check_step(chain, k, y_next.size());
    const auto& t = chain.transitions[k];
    const std::size_t q = chain.dim_w;
    const double inv_dt = 1.0 / chain.mesh.step();
    std::vector<double> z(t.rows * q, 0.0);
    for (std::size_t i = 0; i < t.rows; ++i)
        for (std::size_t e = t.row_offsets[i]; e < t.row_offsets[i + 1]; ++e) {
            const double y = y_next[t.columns[e]];
            for (std::size_t c = 0; c < q; ++c) z[i * q + c] += t.companions[e * q + c] * y;
        }
    for (double& v : z) v *= inv_dt;
    return z;
}

std::vector<double> zeta_centered(const QuantizedChain& chain, std::size_t k, std::span<const double> y_next,
                                  std::span<const double> y_curr) {
    check_step(chain, k, y_next.size());
    if (y_curr.size() != chain.layers[k].size())
        throw InputError("layer " + std::to_string(k) + " values have size " + std::to_string(y_curr.size()) +
                         ", expected " + std::to_string(chain.layers[k].size()));
    const auto& t = chain.transitions[k];
    const std::size_t q = chain.dim_w;
    const double inv_dt = 1.0 / chain.mesh.step();
    std::vector<double> z(t.rows * q, 0.0);
    for (std::size_t i = 0; i < t.rows; ++i)
        for (std::size_t e = t.row_offsets[i]; e < t.row_offsets[i + 1]; ++e) {
            const double y = y_next[t.columns[e]] - y_curr[i];
            for (std::size_t c = 0; c < q; ++c) z[i * q + c] += t.companions[e * q + c] * y;
        }
    for (double& v : z) v *= inv_dt;
    return z;
}

QuantizedBsdeSolution solve_bsde(const QuantizedChain& chain, const DriverSpec& driver, ZetaFormula formula) {
    if (!driver.f || !driver.h) throw InputError("driver needs f and h");
    const std::size_t n = chain.steps();
    if (n == 0 || chain.layers.size() != n + 1) throw InputError("chain is incomplete");
    const std::size_t q = chain.dim_w;
    const double dt = chain.mesh.step();

    QuantizedBsdeSolution sol;
    sol.y_values.resize(n + 1);
    sol.zeta_values.resize(n);

    const Grid& last = chain.layers[n];
    sol.y_values[n].resize(last.size());
    for (std::size_t i = 0; i < last.size(); ++i) {
        const double v = driver.h(last.point(i));
        if (!std::isfinite(v)) throw NumericError("terminal condition is not finite at layer " + std::to_string(n) +
                                                  ", point " + std::to_string(i));
        sol.y_values[n][i] = v;
    }

    for (std::size_t k = n; k-- > 0;) {
        const auto& t = chain.transitions[k];
        const auto& y_next = sol.y_values[k + 1];
        if (!t.dead_rows.empty())
            sol.warnings.push_back("step " + std::to_string(k) + ": " + std::to_string(t.dead_rows.size()) +
                                   " unvisited cells use the uniform fallback row");

        std::vector<double> alpha(t.rows, 0.0);
        for (std::size_t i = 0; i < t.rows; ++i)
            for (std::size_t e = t.row_offsets[i]; e < t.row_offsets[i + 1]; ++e)
                alpha[i] += t.probabilities[e] * y_next[t.columns[e]];

        sol.zeta_values[k] =
            formula == ZetaFormula::raw ? zeta_raw(chain, k, y_next) : zeta_centered(chain, k, y_next, alpha);

        const double tk = chain.mesh.knot(k);
        auto& y = sol.y_values[k];
        y.resize(t.rows);
        for (std::size_t i = 0; i < t.rows; ++i) {
            const std::span<const double> z(sol.zeta_values[k].data() + i * q, q);
            const double f = driver.f(tk, chain.layers[k].point(i), alpha[i], z);
            if (!std::isfinite(f))
                throw NumericError("driver is not finite at layer " + std::to_string(k) + ", point " + std::to_string(i));
            y[i] = alpha[i] + dt * f;
        }
    }

    const auto& p0 = chain.marginals[0];
    sol.z0.assign(q, 0.0);
    if (chain.layers[0].size() == 1) {
        sol.y0 = sol.y_values[0][0];
        for (std::size_t c = 0; c < q; ++c) sol.z0[c] = sol.zeta_values[0][c];
    } else {
        for (std::size_t i = 0; i < p0.size(); ++i) {
            sol.y0 += p0[i] * sol.y_values[0][i];
            for (std::size_t c = 0; c < q; ++c) sol.z0[c] += p0[i] * sol.zeta_values[0][i * q + c];
        }
    }
    return sol;
}

double BoundConstants::exp_factor(std::size_t i, std::size_t k) const {
    const double dt = horizon / static_cast<double>(steps);
    return std::exp((1.0 + lip_f) * dt * (static_cast<double>(i) - static_cast<double>(k)));
}

BoundConstants bound_constants(double lip_b, double lip_sigma, double lip_f, double lip_h, double horizon,
                               std::size_t n, std::size_t n0, std::size_t q) {
    if (n0 == 0 || n < n0) throw InputError("bound constants need n >= n0 >= 1");
    if (q == 0) throw InputError("Brownian dimension must be positive");
    if (!(horizon > 0.0)) throw InputError("time horizon must be positive");
    if (!(lip_b >= 0.0) || !(lip_sigma >= 0.0) || !(lip_f >= 0.0) || !(lip_h >= 0.0))
        throw InputError("Lipschitz constants must be nonnegative");

    BoundConstants bc;
    bc.lip_f = lip_f;
    bc.horizon = horizon;
    bc.steps = n;
    const double dt0 = horizon / static_cast<double>(n0);
    const double dt = horizon / static_cast<double>(n);
    bc.c_bsigma = lip_b + 0.5 * (lip_sigma * lip_sigma + dt0 * lip_b * lip_b);
    bc.kappa0 = bc.c_bsigma + lip_f * (1.0 + 0.5 * lip_f);
    // 0/0 := 0, the limit of lip_f / kappa0 as lip_f -> 0.
    bc.kappa1 = (bc.kappa0 > 0.0 ? lip_f / bc.kappa0 : 0.0) + lip_h;

    const double qd = static_cast<double>(q);
    bc.c1.resize(n);
    bc.c2.resize(n);
    bc.k_weights.resize(n + 1);
    for (std::size_t k = 0; k < n; ++k) {
        const double t_next = k + 1 == n ? horizon : dt * static_cast<double>(k + 1);
        const double t_k = dt * static_cast<double>(k);
        bc.c2[k] = qd * bc.kappa1 * bc.kappa1 * lip_f * lip_f *
                   std::exp(2.0 * dt0 * bc.c_bsigma + 2.0 * bc.kappa0 * (horizon - t_next));
        bc.c1[k] = lip_f * lip_f + bc.c2[k] / qd;
        bc.k_weights[k] = bc.kappa1 * bc.kappa1 * std::exp(2.0 * bc.kappa0 * (horizon - t_k)) +
                          (1.0 + dt0) * (bc.c1[k] * dt0 + bc.c2[k]);
    }
    bc.k_weights[n] = lip_h * lip_h;
    return bc;
}

double error_bound(const BoundConstants& constants, std::span<const double> layer_squared_errors, std::size_t k) {
    if (layer_squared_errors.size() != constants.steps + 1)
        throw InputError("need one squared quantization error per layer");
    if (k > constants.steps) throw InputError("layer index out of range");
    double total = 0.0;
    for (std::size_t i = k; i <= constants.steps; ++i)
        total += constants.exp_factor(i, k) * constants.k_weights[i] * layer_squared_errors[i];
    return total;
}

GridAllocation allocate_grid_sizes(std::span<const double> c, std::size_t budget, std::size_t d) {
    const std::size_t n = c.size();
    if (n == 0) throw InputError("need at least one layer constant");
    if (d == 0) throw InputError("dimension must be positive");
    if (budget < n) throw InputError("budget " + std::to_string(budget) + " is below the number of layers " +
                                     std::to_string(n));
    for (double ci : c)
        if (!(ci > 0.0) || !std::isfinite(ci)) throw InputError("layer constants must be positive");

    const double dd = static_cast<double>(d);
    const double power = dd / (dd + 2.0);
    double total = 0.0;
    for (double ci : c) total += std::pow(ci, power);

    GridAllocation out;
    out.sizes.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double share = std::pow(c[i], power) * static_cast<double>(budget) / total;
        out.sizes[i] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(share + 1e-9)));
        out.bound_factor += c[i] * std::pow(static_cast<double>(out.sizes[i]), -2.0 / dd);
    }
    return out;
}

void write_solution_csv(const QuantizedBsdeSolution& solution, const QuantizedChain& chain, std::ostream& out) {
    const std::size_t d = chain.dim_x;
    const std::size_t q = chain.dim_w;
    const std::size_t n = chain.steps();
    out << "k,i";
    for (std::size_t c = 0; c < d; ++c) out << ",x" << c + 1;
    out << ",y";
    for (std::size_t c = 0; c < q; ++c) out << ",zeta" << c + 1;
    out << '\n';
    out.precision(17);
    for (std::size_t k = 0; k <= n; ++k)
        for (std::size_t i = 0; i < chain.layers[k].size(); ++i) {
            out << k << ',' << i;
            for (double v : chain.layers[k].point(i)) out << ',' << v;
            out << ',' << solution.y_values[k][i];
            for (std::size_t c = 0; c < q; ++c) {
                out << ',';
                if (k < n) out << solution.zeta_values[k][i * q + c];
            }
            out << '\n';
        }
}

std::string solution_summary_json(const QuantizedBsdeSolution& solution, const QuantizedChain& chain) {
    nlohmann::json j;
    j["y0"] = solution.y0;
    j["z0"] = solution.z0;
    j["n"] = chain.steps();
    std::vector<std::size_t> sizes;
    for (const auto& g : chain.layers) sizes.push_back(g.size());
    j["sizes"] = sizes;
    j["seed"] = chain.seed;
    j["mc_paths"] = chain.mc_paths;
    j["warnings"] = solution.warnings;
    return j.dump(2);
}

} // namespace qs
