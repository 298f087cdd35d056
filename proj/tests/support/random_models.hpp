#pragma once

#include "quantschemes/chain.hpp"
#include "quantschemes/filter.hpp"
#include "quantschemes/random.hpp"

#include <cmath>
#include <memory>
#include <random>
#include <vector>

namespace qs::testing {

/// Random chain on layers of sizes `sizes`; point i of every layer sits at i (so kernels can be
/// looked up from coordinates). Transition rows are random with some exact zeros; companions are
/// random and centered.
inline QuantizedChain random_chain(const std::vector<std::size_t>& sizes, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    QuantizedChain c;
    const std::size_t n = sizes.size() - 1;
    c.mesh = {1.0, n == 0 ? 1 : n}; // zero-step chains only feed the filter
    c.centered = true;
    for (std::size_t k = 0; k <= n; ++k) {
        std::vector<double> pts(sizes[k]);
        for (std::size_t i = 0; i < sizes[k]; ++i) pts[i] = static_cast<double>(i);
        c.layers.push_back(Grid::from_values(pts));
    }
    std::vector<double> m0(sizes[0]);
    double total = 0.0;
    for (double& v : m0) total += (v = 0.1 + unit(rng));
    for (double& v : m0) v /= total;
    c.marginals.push_back(m0);

    for (std::size_t k = 0; k < n; ++k) {
        TransitionStep t;
        t.rows = sizes[k];
        t.cols = sizes[k + 1];
        t.dim_w = 1;
        t.row_offsets.push_back(0);
        for (std::size_t i = 0; i < t.rows; ++i) {
            std::vector<double> row(t.cols);
            double s = 0.0;
            for (std::size_t j = 0; j < t.cols; ++j) {
                row[j] = unit(rng) < 0.25 ? 0.0 : unit(rng);
                s += row[j];
            }
            if (s == 0.0) {
                row[t.cols - 1] = 1.0;
                s = 1.0;
            }
            const std::size_t first = t.columns.size();
            double comp_sum = 0.0;
            for (std::size_t j = 0; j < t.cols; ++j)
                if (row[j] > 0.0) {
                    t.columns.push_back(static_cast<std::uint32_t>(j));
                    t.probabilities.push_back(row[j] / s);
                    t.companions.push_back(unit(rng) - 0.5);
                    comp_sum += t.companions.back();
                }
            for (std::size_t e = first; e < t.columns.size(); ++e)
                t.companions[e] -= t.probabilities[e] * comp_sum;
            t.row_offsets.push_back(t.columns.size());
        }
        std::vector<double> next(t.cols, 0.0);
        for (std::size_t i = 0; i < t.rows; ++i)
            for (std::size_t e = t.row_offsets[i]; e < t.row_offsets[i + 1]; ++e)
                next[t.columns[e]] += c.marginals[k][i] * t.probabilities[e];
        c.marginals.push_back(next);
        c.transitions.push_back(std::move(t));
    }
    return c;
}

/// Random filter model on a random chain with a tabulated observation density.
struct RandomFilter {
    FilterModel model;
    std::shared_ptr<std::vector<std::vector<double>>> table; // per k, N_{k-1} x N_k
};

inline RandomFilter random_filter(const std::vector<std::size_t>& sizes, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto chain = std::make_shared<QuantizedChain>(random_chain(sizes, rng));
    auto table = std::make_shared<std::vector<std::vector<double>>>(sizes.size());
    for (std::size_t k = 1; k < sizes.size(); ++k) {
        auto& t = (*table)[k];
        t.resize(sizes[k - 1] * sizes[k]);
        for (double& v : t) v = 0.05 + 3.0 * unit(rng);
    }
    RandomFilter out;
    out.table = table;
    out.model.chain = chain;
    out.model.g = [table, chain](std::size_t k, std::span<const double> x_prev, std::span<const double>,
                                 std::span<const double> x, std::span<const double>) {
        const auto i = static_cast<std::size_t>(std::lround(x_prev[0]));
        const auto j = static_cast<std::size_t>(std::lround(x[0]));
        return (*table)[k][i * chain->layers[k].size() + j];
    };
    for (std::size_t k = 0; k < sizes.size(); ++k) out.model.observations.push_back({unit(rng)});
    return out;
}

/// pi_{y,n} by summing over every quantized path.
inline std::vector<double> enumerate_unnormalized(const RandomFilter& f) {
    const auto& chain = *f.model.chain;
    const std::size_t n = chain.transitions.size();
    std::vector<double> out(chain.layers[n].size(), 0.0);
    std::vector<std::size_t> path(n + 1, 0);
    while (true) {
        double w = chain.marginals[0][path[0]];
        for (std::size_t k = 1; k <= n && w != 0.0; ++k)
            w *= chain.transitions[k - 1].probability(path[k - 1], path[k]) *
                 (*f.table)[k][path[k - 1] * chain.layers[k].size() + path[k]];
        out[path[n]] += w;
        std::size_t k = 0;
        while (k <= n && ++path[k] == chain.layers[k].size()) path[k++] = 0;
        if (k > n) break;
    }
    return out;
}

} // namespace qs::testing
