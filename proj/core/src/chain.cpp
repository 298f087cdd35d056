#include "quantschemes/chain.hpp"

#include "quantschemes/error.hpp"
#include "quantschemes/parallel.hpp"
#include "quantschemes/random.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace qs {

double TransitionStep::probability(std::size_t i, std::size_t j) const {
    const auto first = columns.begin() + static_cast<std::ptrdiff_t>(row_offsets[i]);
    const auto last = columns.begin() + static_cast<std::ptrdiff_t>(row_offsets[i + 1]);
    const auto it = std::lower_bound(first, last, static_cast<std::uint32_t>(j));
    return (it != last && *it == j) ? probabilities[static_cast<std::size_t>(it - columns.begin())] : 0.0;
}

std::vector<double> TransitionStep::companion(std::size_t i, std::size_t j) const {
    const auto first = columns.begin() + static_cast<std::ptrdiff_t>(row_offsets[i]);
    const auto last = columns.begin() + static_cast<std::ptrdiff_t>(row_offsets[i + 1]);
    const auto it = std::lower_bound(first, last, static_cast<std::uint32_t>(j));
    if (it == last || *it != j) return std::vector<double>(dim_w, 0.0);
    const auto c = companion_at(static_cast<std::size_t>(it - columns.begin()));
    return {c.begin(), c.end()};
}

std::vector<double> TransitionStep::dense_probabilities() const {
    std::vector<double> out(rows * cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t e = row_offsets[i]; e < row_offsets[i + 1]; ++e) out[i * cols + columns[e]] = probabilities[e];
    return out;
}

bool TransitionStep::is_dead(std::size_t i) const {
    return std::binary_search(dead_rows.begin(), dead_rows.end(), static_cast<std::uint32_t>(i));
}

std::size_t QuantizedChain::dead_row_count() const {
    std::size_t n = 0;
    for (const auto& t : transitions) n += t.dead_rows.size();
    return n;
}

void QuantizedChain::validate() const {
    mesh.validate();
    const std::size_t n = mesh.steps;
    if (layers.size() != n + 1) throw InputError("chain needs n + 1 layers");
    if (marginals.size() != n + 1) throw InputError("chain needs n + 1 marginal vectors");
    if (transitions.size() != n) throw InputError("chain needs n transition steps");
    for (std::size_t k = 0; k <= n; ++k) {
        if (layers[k].dim() != dim_x) throw InputError("layer " + std::to_string(k) + " has the wrong dimension");
        if (marginals[k].size() != layers[k].size())
            throw InputError("marginals of layer " + std::to_string(k) + " do not match the layer size");
        double total = 0.0;
        for (double p : marginals[k]) {
            if (!(p >= 0.0)) throw InputError("negative marginal weight in layer " + std::to_string(k));
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-12) throw InputError("marginals of layer " + std::to_string(k) + " do not sum to 1");
    }
    for (std::size_t k = 0; k < n; ++k) {
        const auto& t = transitions[k];
        const std::string where = "transition " + std::to_string(k);
        if (t.rows != layers[k].size() || t.cols != layers[k + 1].size() || t.dim_w != dim_w)
            throw InputError(where + " has the wrong shape");
        if (t.row_offsets.size() != t.rows + 1 || t.row_offsets.front() != 0 ||
            t.row_offsets.back() != t.columns.size() || t.probabilities.size() != t.columns.size() ||
            t.companions.size() != t.columns.size() * dim_w)
            throw InputError(where + " has inconsistent storage");
        for (std::size_t i = 0; i < t.rows; ++i) {
            if (t.row_offsets[i + 1] <= t.row_offsets[i])
                throw InputError(where + " row " + std::to_string(i) + " is empty");
            double total = 0.0;
            std::vector<double> companion_sum(dim_w, 0.0);
            for (std::size_t e = t.row_offsets[i]; e < t.row_offsets[i + 1]; ++e) {
                if (t.columns[e] >= t.cols || (e > t.row_offsets[i] && t.columns[e] <= t.columns[e - 1]))
                    throw InputError(where + " row " + std::to_string(i) + " has unsorted or out-of-range columns");
                if (!(t.probabilities[e] > 0.0)) throw InputError(where + " stores a non-positive probability");
                total += t.probabilities[e];
                for (std::size_t c = 0; c < dim_w; ++c) companion_sum[c] += t.companions[e * dim_w + c];
            }
            if (std::abs(total - 1.0) > 1e-12)
                throw InputError(where + " row " + std::to_string(i) + " sums to " + std::to_string(total));
            if (centered && !t.is_dead(i))
                for (double s : companion_sum)
                    if (std::abs(s) > 1e-12)
                        throw InputError(where + " row " + std::to_string(i) + " companions are not centered");
        }
        for (std::size_t r = 0; r < t.dead_rows.size(); ++r)
            if (t.dead_rows[r] >= t.rows || (r > 0 && t.dead_rows[r] <= t.dead_rows[r - 1]))
                throw InputError(where + " has an invalid dead-row list");
    }
}

LayerMap brownian_layer_map(std::vector<double> x0) {
    return [x0 = std::move(x0)](std::size_t, double t, const Grid& base) {
        return scale_grid(base, x0, std::sqrt(t));
    };
}

LayerMap lognormal_layer_map(double x0, double mu, double sigma) {
    return [=](std::size_t, double t, const Grid& base) {
        if (base.dim() != 1) throw InputError("lognormal layer map needs a one-dimensional base grid");
        std::vector<double> pts(base.size());
        for (std::size_t i = 0; i < base.size(); ++i)
            pts[i] = x0 * std::exp((mu - 0.5 * sigma * sigma) * t + sigma * std::sqrt(t) * base.point(i)[0]);
        return Grid::from_values(std::move(pts), {base.weights().begin(), base.weights().end()});
    };
}

LayerMap gaussian_layer_map(std::function<double(double)> mean, std::function<double(double)> stddev) {
    return [mean = std::move(mean), stddev = std::move(stddev)](std::size_t, double t, const Grid& base) {
        const double shift = mean(t);
        return scale_grid(base, std::span<const double>(&shift, 1), stddev(t));
    };
}

namespace {

Grid lloyd_layer(std::span<const double> samples, std::size_t d, std::size_t size, const StopCriteria& stop,
                 std::uint64_t seed) {
    const std::size_t m = samples.size() / d;
    // Initial points: distinct samples in random order.
    Rng rng(seed);
    std::vector<std::size_t> order(m);
    for (std::size_t s = 0; s < m; ++s) order[s] = s;
    std::vector<double> init;
    std::set<std::vector<double>> seen;
    for (std::size_t s = 0; s < m && seen.size() < size; ++s) {
        std::uniform_int_distribution<std::size_t> pick(s, m - 1);
        std::swap(order[s], order[pick(rng)]);
        std::vector<double> p(samples.begin() + static_cast<std::ptrdiff_t>(order[s] * d),
                              samples.begin() + static_cast<std::ptrdiff_t>((order[s] + 1) * d));
        if (seen.insert(p).second) init.insert(init.end(), p.begin(), p.end());
    }
    if (seen.size() < size)
        throw InputError("layer sample has fewer distinct points than the requested grid size " + std::to_string(size));
    const auto source = SampleSource::batch(d, {samples.begin(), samples.end()}, seed);
    return lloyd(Grid(d, std::move(init)), source, stop).grid;
}

} // namespace

std::vector<Grid> build_layer_grids(const DiffusionModel& model, const TimeMesh& mesh,
                                    const std::vector<std::size_t>& sizes, const LayerGridMethod& method,
                                    std::uint64_t seed) {
    model.validate();
    mesh.validate();
    const std::size_t n = mesh.steps;
    if (sizes.size() != n + 1) throw InputError("need one grid size per layer (n + 1 sizes)");
    for (std::size_t s : sizes)
        if (s == 0) throw InputError("grid sizes must be positive");

    std::vector<Grid> layers;
    layers.reserve(n + 1);
    if (const auto* scaled = std::get_if<ScaledGaussianLayers>(&method)) {
        if (!scaled->map) throw InputError("scaled-gaussian layers need a layer map");
        for (std::size_t k = 0; k <= n; ++k) {
            if (k == 0 && sizes[0] == 1) {
                layers.push_back(Grid(model.dim_x, model.x0, {1.0}));
                continue;
            }
            const auto it = scaled->base_grids.find(sizes[k]);
            if (it == scaled->base_grids.end())
                throw InputError("missing base Gaussian grid of size " + std::to_string(sizes[k]));
            Grid g = scaled->map(k, mesh.knot(k), it->second);
            if (g.size() != sizes[k] || g.dim() != model.dim_x)
                throw InputError("layer map returned a grid of the wrong shape at layer " + std::to_string(k));
            layers.push_back(std::move(g));
        }
        return layers;
    }

    const auto& spec = std::get<LloydOnSamples>(method);
    const PathBatch paths = euler_paths(model, mesh, spec.num_paths, seed);
    for (std::size_t k = 0; k <= n; ++k) {
        const auto samples = paths.layer(k);
        layers.push_back(lloyd_layer(samples, model.dim_x, sizes[k], spec.stop, mix64(seed) + k));
    }
    return layers;
}

namespace {

/// Sparse accumulator for one transition step: sorted keys i * cols + j.
struct StepTally {
    std::vector<std::uint64_t> keys;
    std::vector<std::uint64_t> counts;
    std::vector<double> sums; // keys.size() x q

    void merge(const StepTally& other, std::size_t q) {
        StepTally out;
        out.keys.reserve(keys.size() + other.keys.size());
        out.counts.reserve(keys.size() + other.keys.size());
        out.sums.reserve((keys.size() + other.keys.size()) * q);
        std::size_t a = 0, b = 0;
        while (a < keys.size() || b < other.keys.size()) {
            const bool take_a = b == other.keys.size() || (a < keys.size() && keys[a] <= other.keys[b]);
            const bool take_b = a == keys.size() || (b < other.keys.size() && other.keys[b] <= keys[a]);
            out.keys.push_back(take_a ? keys[a] : other.keys[b]);
            out.counts.push_back((take_a ? counts[a] : 0) + (take_b ? other.counts[b] : 0));
            for (std::size_t c = 0; c < q; ++c)
                out.sums.push_back((take_a ? sums[a * q + c] : 0.0) + (take_b ? other.sums[b * q + c] : 0.0));
            a += take_a;
            b += take_b;
        }
        *this = std::move(out);
    }
};

struct ChunkBuffers {
    std::vector<double> states;
    std::vector<double> increments;
    std::vector<std::uint32_t> cells;
    std::vector<std::pair<std::uint64_t, std::uint32_t>> order;
    std::vector<StepTally> tallies;
};

} // namespace

QuantizedChain estimate_companions(const DiffusionModel& model, const TimeMesh& mesh, std::vector<Grid> layers,
                                   std::size_t num_paths, std::uint64_t seed, const ChainOptions& options) {
    model.validate();
    mesh.validate();
    const std::size_t n = mesh.steps;
    const std::size_t d = model.dim_x;
    const std::size_t q = model.dim_w;
    if (num_paths == 0) throw InputError("need at least one Monte Carlo path");
    if (layers.size() != n + 1) throw InputError("need n + 1 layer grids");
    for (std::size_t k = 0; k <= n; ++k)
        if (layers[k].dim() != d) throw InputError("layer " + std::to_string(k) + " has the wrong dimension");

    std::vector<VoronoiLocator> locators;
    locators.reserve(n + 1);
    for (const auto& g : layers) locators.emplace_back(g);

    const std::size_t chunks = (num_paths + kPathChunk - 1) / kPathChunk;
    std::vector<ChunkBuffers> slots(std::max<std::size_t>(1, std::min(chunks, default_workers())));
    std::vector<StepTally> total(n);

    for_each_chunk_ordered(
        chunks, slots.size(),
        [&](std::size_t c) {
            ChunkBuffers& buf = slots[c % slots.size()];
            const std::size_t first = c * kPathChunk;
            const std::size_t count = std::min(kPathChunk, num_paths - first);
            buf.states.resize(count * (n + 1) * d);
            buf.increments.resize(count * n * q);
            buf.cells.resize(count * (n + 1));
            detail::simulate_chunk(model, mesh, seed, first, count, buf.states.data(), buf.increments.data());
            for (std::size_t p = 0; p < count; ++p)
                for (std::size_t k = 0; k <= n; ++k)
                    buf.cells[p * (n + 1) + k] = locators[k].locate(buf.states.data() + (p * (n + 1) + k) * d);

            buf.tallies.assign(n, {});
            for (std::size_t k = 0; k < n; ++k) {
                const std::uint64_t cols = layers[k + 1].size();
                buf.order.resize(count);
                for (std::size_t p = 0; p < count; ++p)
                    buf.order[p] = {buf.cells[p * (n + 1) + k] * cols + buf.cells[p * (n + 1) + k + 1],
                                    static_cast<std::uint32_t>(p)};
                std::sort(buf.order.begin(), buf.order.end());
                StepTally& tally = buf.tallies[k];
                for (const auto& [key, p] : buf.order) {
                    if (tally.keys.empty() || tally.keys.back() != key) {
                        tally.keys.push_back(key);
                        tally.counts.push_back(0);
                        tally.sums.resize(tally.sums.size() + q, 0.0);
                    }
                    ++tally.counts.back();
                    if (options.companions) {
                        const double* dw = buf.increments.data() + (p * n + k) * q;
                        double* s = tally.sums.data() + tally.sums.size() - q;
                        for (std::size_t comp = 0; comp < q; ++comp) s[comp] += dw[comp];
                    }
                }
            }
        },
        [&](std::size_t c) {
            const ChunkBuffers& buf = slots[c % slots.size()];
            for (std::size_t k = 0; k < n; ++k) total[k].merge(buf.tallies[k], q);
        });

    QuantizedChain chain;
    chain.mesh = mesh;
    chain.dim_x = d;
    chain.dim_w = q;
    chain.mc_paths = num_paths;
    chain.seed = seed;
    chain.centered = options.center;
    chain.marginals.resize(n + 1);
    chain.transitions.resize(n);
    const double inv_m = 1.0 / static_cast<double>(num_paths);

    for (std::size_t k = 0; k < n; ++k) {
        const StepTally& tally = total[k];
        const std::size_t rows = layers[k].size();
        const std::size_t cols = layers[k + 1].size();
        std::vector<std::uint64_t> row_count(rows, 0), col_count(cols, 0);
        for (std::size_t e = 0; e < tally.keys.size(); ++e) {
            row_count[tally.keys[e] / cols] += tally.counts[e];
            col_count[tally.keys[e] % cols] += tally.counts[e];
        }
        chain.marginals[k].resize(rows);
        for (std::size_t i = 0; i < rows; ++i) chain.marginals[k][i] = static_cast<double>(row_count[i]) * inv_m;
        if (k + 1 == n) {
            chain.marginals[n].resize(cols);
            for (std::size_t j = 0; j < cols; ++j) chain.marginals[n][j] = static_cast<double>(col_count[j]) * inv_m;
        }

        TransitionStep& step = chain.transitions[k];
        step.rows = rows;
        step.cols = cols;
        step.dim_w = q;
        step.row_offsets.assign(1, 0);
        std::size_t e = 0;
        for (std::size_t i = 0; i < rows; ++i) {
            if (row_count[i] == 0) {
                step.dead_rows.push_back(static_cast<std::uint32_t>(i));
                for (std::size_t j = 0; j < cols; ++j) {
                    step.columns.push_back(static_cast<std::uint32_t>(j));
                    step.probabilities.push_back(1.0 / static_cast<double>(cols));
                    step.companions.resize(step.companions.size() + q, 0.0);
                }
                step.row_offsets.push_back(step.columns.size());
                continue;
            }
            const double inv_count = 1.0 / static_cast<double>(row_count[i]);
            const std::size_t row_begin = step.columns.size();
            std::vector<double> row_sum(q, 0.0);
            for (; e < tally.keys.size() && tally.keys[e] / cols == i; ++e) {
                step.columns.push_back(static_cast<std::uint32_t>(tally.keys[e] % cols));
                step.probabilities.push_back(static_cast<double>(tally.counts[e]) * inv_count);
                for (std::size_t comp = 0; comp < q; ++comp) {
                    const double w = tally.sums[e * q + comp] * inv_count;
                    step.companions.push_back(w);
                    row_sum[comp] += w;
                }
            }
            if (options.center) {
                for (std::size_t r = row_begin; r < step.columns.size(); ++r)
                    for (std::size_t comp = 0; comp < q; ++comp)
                        step.companions[r * q + comp] -= step.probabilities[r] * row_sum[comp];
            }
            step.row_offsets.push_back(step.columns.size());
        }
    }
    chain.layers = std::move(layers);
    return chain;
}

std::vector<double> layer_quantization_errors(const DiffusionModel& model, const TimeMesh& mesh,
                                              const std::vector<Grid>& layers, std::size_t num_paths,
                                              std::uint64_t seed) {
    model.validate();
    mesh.validate();
    const std::size_t n = mesh.steps;
    const std::size_t d = model.dim_x;
    if (layers.size() != n + 1) throw InputError("need n + 1 layer grids");
    if (num_paths == 0) throw InputError("need at least one Monte Carlo path");
    std::vector<VoronoiLocator> locators;
    for (const auto& g : layers) locators.emplace_back(g);

    const std::size_t chunks = (num_paths + kPathChunk - 1) / kPathChunk;
    const std::size_t workers = std::max<std::size_t>(1, std::min(chunks, default_workers()));
    std::vector<std::vector<double>> states(workers), increments(workers), partial(workers);
    std::vector<double> total(n + 1, 0.0);
    for_each_chunk_ordered(
        chunks, workers,
        [&](std::size_t c) {
            const std::size_t w = c % workers;
            const std::size_t first = c * kPathChunk;
            const std::size_t count = std::min(kPathChunk, num_paths - first);
            states[w].resize(count * (n + 1) * d);
            increments[w].resize(count * n * model.dim_w);
            detail::simulate_chunk(model, mesh, seed, first, count, states[w].data(), increments[w].data());
            partial[w].assign(n + 1, 0.0);
            for (std::size_t p = 0; p < count; ++p)
                for (std::size_t k = 0; k <= n; ++k) {
                    double sq = 0.0;
                    locators[k].locate(states[w].data() + (p * (n + 1) + k) * d, &sq);
                    partial[w][k] += sq;
                }
        },
        [&](std::size_t c) {
            for (std::size_t k = 0; k <= n; ++k) total[k] += partial[c % workers][k];
        });
    for (double& v : total) v /= static_cast<double>(num_paths);
    return total;
}

} // namespace qs
