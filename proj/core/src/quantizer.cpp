#include "quantschemes/quantizer.hpp"

#include "quantschemes/error.hpp"
#include "quantschemes/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace qs {

namespace {

constexpr std::size_t kChunk = 1u << 15;

struct CellStatistics {
    std::vector<std::uint64_t> counts;
    std::vector<double> offsets; // sum over the cell of (x_i - xi), N*d
    double squared_sum = 0.0;
    std::vector<std::uint32_t> assignment; // optional
};

CellStatistics cell_statistics(const Grid& grid, std::span<const double> samples, bool keep_assignment) {
    const std::size_t d = grid.dim();
    const std::size_t n = grid.size();
    const std::size_t m = samples.size() / d;
    const VoronoiLocator locator(grid);
    const std::size_t chunks = (m + kChunk - 1) / kChunk;

    CellStatistics total;
    total.counts.assign(n, 0);
    total.offsets.assign(n * d, 0.0);
    if (keep_assignment) total.assignment.resize(m);

    std::vector<CellStatistics> partial(std::max<std::size_t>(1, std::min(chunks, default_workers())));
    auto slot = [&](std::size_t c) -> CellStatistics& { return partial[c % partial.size()]; };

    for_each_chunk_ordered(
        chunks, partial.size(),
        [&](std::size_t c) {
            CellStatistics& local = slot(c);
            local.counts.assign(n, 0);
            local.offsets.assign(n * d, 0.0);
            local.squared_sum = 0.0;
            const std::size_t end = std::min(m, (c + 1) * kChunk);
            for (std::size_t s = c * kChunk; s < end; ++s) {
                const double* xi = samples.data() + s * d;
                double sq = 0.0;
                const std::uint32_t cell = locator.locate(xi, &sq);
                if (keep_assignment) total.assignment[s] = cell;
                ++local.counts[cell];
                local.squared_sum += sq;
                const auto x = grid.point(cell);
                for (std::size_t k = 0; k < d; ++k) local.offsets[cell * d + k] += x[k] - xi[k];
            }
        },
        [&](std::size_t c) {
            const CellStatistics& local = slot(c);
            total.squared_sum += local.squared_sum;
            for (std::size_t i = 0; i < n; ++i) total.counts[i] += local.counts[i];
            for (std::size_t i = 0; i < n * d; ++i) total.offsets[i] += local.offsets[i];
        });
    return total;
}

DistortionReport make_report(const CellStatistics& stats, std::size_t m) {
    DistortionReport report;
    const double inv_m = 1.0 / static_cast<double>(m);
    report.value = stats.squared_sum * inv_m;
    report.gradient.resize(stats.offsets.size());
    for (std::size_t i = 0; i < stats.offsets.size(); ++i) report.gradient[i] = 2.0 * inv_m * stats.offsets[i];
    report.cell_counts = stats.counts;
    return report;
}

void check_source_dim(const Grid& grid, const SampleSource& source) {
    if (source.dim() != grid.dim())
        throw InputError("sample dimension " + std::to_string(source.dim()) + " does not match grid dimension " +
                         std::to_string(grid.dim()));
}

std::vector<double> frequencies(const std::vector<std::uint64_t>& counts, std::size_t m) {
    std::vector<double> w(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) w[i] = static_cast<double>(counts[i]) / static_cast<double>(m);
    return w;
}

bool points_distinct(const Grid& grid) {
    for (std::size_t i = 0; i < grid.size(); ++i)
        for (std::size_t j = i + 1; j < grid.size(); ++j)
            if (squared_distance(grid.point(i), grid.point(j)) == 0.0) return false;
    return true;
}

} // namespace

void StopCriteria::validate() const {
    if (max_iterations == 0) throw InputError("max_iterations must be positive");
    if (!(relative_distortion_tolerance > 0.0)) throw InputError("relative_distortion_tolerance must be positive");
    if (!(stationarity_tolerance > 0.0)) throw InputError("stationarity_tolerance must be positive");
}

DistortionReport distortion_and_gradient(const Grid& grid, const SampleSource& source, std::size_t generator_batch) {
    check_source_dim(grid, source);
    std::vector<double> storage;
    const auto samples = source.materialize(generator_batch, storage);
    const std::size_t m = samples.size() / grid.dim();
    if (m == 0) throw InputError("distortion needs at least one sample");
    return make_report(cell_statistics(grid, samples, false), m);
}

LloydResult lloyd(const Grid& initial, const SampleSource& source, const StopCriteria& stop) {
    stop.validate();
    check_source_dim(initial, source);
    if (!source.is_batch()) throw InputError("Lloyd's iteration needs a frozen sample batch");
    const std::size_t d = initial.dim();
    const std::size_t n = initial.size();
    const auto samples = source.samples();
    const std::size_t m = samples.size() / d;
    if (m < n) throw InputError("Lloyd needs at least as many samples (" + std::to_string(m) + ") as points (" +
                                std::to_string(n) + ")");
    if (!points_distinct(initial)) throw InputError("Lloyd's initial points must be pairwise distinct");

    std::vector<double> stddev(d, 0.0);
    {
        std::vector<double> mean(d, 0.0);
        for (std::size_t s = 0; s < m; ++s)
            for (std::size_t k = 0; k < d; ++k) mean[k] += samples[s * d + k];
        for (double& v : mean) v /= static_cast<double>(m);
        for (std::size_t s = 0; s < m; ++s)
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = samples[s * d + k] - mean[k];
                stddev[k] += diff * diff;
            }
        for (double& v : stddev) v = std::sqrt(v / static_cast<double>(m));
    }

    LloydResult result{initial.without_weights(), {}, 0, {}, 0.0, 0};
    std::vector<double> points(initial.points().begin(), initial.points().end());
    for (std::size_t iter = 0;; ++iter) {
        Grid current(d, points);
        CellStatistics stats = cell_statistics(current, samples, true);
        const double value = stats.squared_sum / static_cast<double>(m);
        result.distortion_history.push_back(value);

        double defect = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (stats.counts[i] == 0) continue;
            double shift_sq = 0.0, norm_sq = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double shift = stats.offsets[i * d + k] / static_cast<double>(stats.counts[i]);
                shift_sq += shift * shift;
                norm_sq += points[i * d + k] * points[i * d + k];
            }
            defect = std::max(defect, std::sqrt(shift_sq) / (1.0 + std::sqrt(norm_sq)));
        }

        bool done = iter >= stop.max_iterations || defect <= stop.stationarity_tolerance;
        if (iter > 0) {
            const double previous = result.distortion_history[iter - 1];
            const double decrease = previous > 0.0 ? (previous - value) / previous : 0.0;
            done = done || decrease < stop.relative_distortion_tolerance;
        }
        if (done) {
            result.grid = current.with_weights(frequencies(stats.counts, m));
            result.report = make_report(stats, m);
            result.iterations = iter;
            result.stationarity_defect = defect;
            return result;
        }

        // Centroid update; empty cells get a point split off the most populated cell.
        const std::size_t donor = static_cast<std::size_t>(
            std::max_element(stats.counts.begin(), stats.counts.end()) - stats.counts.begin());
        Rng rng = substream(source.seed(), 0x11000000ULL + iter);
        std::normal_distribution<double> normal;
        for (std::size_t i = 0; i < n; ++i) {
            if (stats.counts[i] > 0) {
                for (std::size_t k = 0; k < d; ++k)
                    points[i * d + k] -= stats.offsets[i * d + k] / static_cast<double>(stats.counts[i]);
                continue;
            }
            std::uniform_int_distribution<std::uint64_t> pick(0, stats.counts[donor] - 1);
            std::uint64_t rank = pick(rng);
            std::size_t s = 0;
            for (; s < m; ++s)
                if (stats.assignment[s] == donor && rank-- == 0) break;
            for (std::size_t k = 0; k < d; ++k) points[i * d + k] = samples[s * d + k] + 1e-6 * stddev[k] * normal(rng);
            ++result.reseeded_cells;
        }
    }
}

Grid clvq(const Grid& initial, const SampleSource& source, std::size_t steps, ClvqSchedule schedule,
          std::size_t frequency_pass) {
    check_source_dim(initial, source);
    if (source.is_batch()) throw InputError("CLVQ needs a seeded generator source");
    if (steps == 0) throw InputError("CLVQ needs at least one step");
    if (!(schedule.a > 0.0) || !(schedule.b >= 0.0)) throw InputError("CLVQ schedule needs a > 0 and b >= 0");
    if (!(schedule.step(1) < 1.0)) throw InputError("CLVQ first step gamma_1 = a/(b+1) must be below 1");

    const std::size_t d = initial.dim();
    const std::size_t n = initial.size();
    std::vector<double> points(initial.points().begin(), initial.points().end());
    std::vector<double> xi(d);
    Rng rng = source.stream();

    auto winner = [&](const std::vector<double>& p) {
        std::size_t best = 0;
        double best_sq = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            const double sq = squared_distance({p.data() + i * d, d}, xi);
            if (sq < best_sq) {
                best_sq = sq;
                best = i;
            }
        }
        return best;
    };

    for (std::size_t t = 1; t <= steps; ++t) {
        source.draw_one(rng, xi);
        const std::size_t i = winner(points);
        const double gamma = schedule.step(t);
        for (std::size_t k = 0; k < d; ++k) points[i * d + k] -= gamma * (points[i * d + k] - xi[k]);
    }
    for (double v : points)
        if (!std::isfinite(v)) throw NumericError("CLVQ produced a non-finite point");

    if (frequency_pass == 0) return Grid(d, std::move(points));
    std::vector<std::uint64_t> counts(n, 0);
    for (std::size_t t = 0; t < frequency_pass; ++t) {
        source.draw_one(rng, xi);
        ++counts[winner(points)];
    }
    return Grid(d, std::move(points), frequencies(counts, frequency_pass));
}

ScalarLaw standard_gaussian_law() {
    ScalarLaw law;
    law.density = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); };
    law.cdf = [](double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); };
    law.partial_moment = [](double x) { return -std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); };
    law.lower = -8.0;
    law.upper = 8.0;
    return law;
}

ScalarLaw uniform_law(double a, double b) {
    if (!(b > a)) throw InputError("uniform law needs a < b");
    ScalarLaw law;
    law.density = [a, b](double x) { return (x >= a && x <= b) ? 1.0 / (b - a) : 0.0; };
    law.cdf = [a, b](double x) { return std::clamp((x - a) / (b - a), 0.0, 1.0); };
    law.partial_moment = [a, b](double x) {
        const double t = std::clamp(x, a, b);
        return (t * t - a * a) / (2.0 * (b - a));
    };
    law.lower = a;
    law.upper = b;
    return law;
}

namespace {

std::vector<double> boundaries(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<double> mid(n + 1);
    mid[0] = -std::numeric_limits<double>::infinity();
    mid[n] = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < n; ++i) mid[i] = 0.5 * (x[i - 1] + x[i]);
    return mid;
}

double max_abs(const std::vector<double>& v) {
    double r = 0.0;
    for (double e : v) r = std::max(r, std::abs(e));
    return r;
}

double norm2(const std::vector<double>& v) {
    double r = 0.0;
    for (double e : v) r += e * e;
    return std::sqrt(r);
}

double quantile(const ScalarLaw& law, double p) {
    double lo = law.lower, hi = law.upper;
    while (law.cdf(lo) > p) lo -= (hi - lo);
    while (law.cdf(hi) < p) hi += (hi - lo);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (law.cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace

std::vector<double> distortion_gradient_1d(const ScalarLaw& law, std::span<const double> x) {
    const auto mid = boundaries(x);
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double mass = law.cdf(mid[i + 1]) - law.cdf(mid[i]);
        const double moment = law.partial_moment(mid[i + 1]) - law.partial_moment(mid[i]);
        g[i] = 2.0 * (x[i] * mass - moment);
    }
    return g;
}

Grid newton_1d(const ScalarLaw& law, std::size_t n, const NewtonOptions& options) {
    if (n == 0) throw InputError("grid size must be positive");
    if (!law.density || !law.cdf || !law.partial_moment) throw InputError("scalar law is incomplete");

    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = quantile(law, (static_cast<double>(i) + 0.5) / static_cast<double>(n));

    auto ordered = [](const std::vector<double>& v) {
        for (std::size_t i = 0; i < v.size(); ++i)
            if (!std::isfinite(v[i]) || (i > 0 && !(v[i] > v[i - 1]))) return false;
        return true;
    };

    std::vector<double> g = distortion_gradient_1d(law, x);
    std::vector<double> diag(n), upper(n), lower(n), rhs(n), step(n), trial(n);
    for (std::size_t iter = 0;; ++iter) {
        if (max_abs(g) <= options.tolerance) break;
        if (iter >= options.max_iterations)
            throw ConvergenceError("newton_1d did not converge in " + std::to_string(options.max_iterations) +
                                       " iterations",
                                   max_abs(g));

        // Tridiagonal Hessian of the distortion.
        const auto mid = boundaries(x);
        for (std::size_t i = 0; i < n; ++i) {
            const double mass = law.cdf(mid[i + 1]) - law.cdf(mid[i]);
            const double right = i + 1 < n ? 0.5 * law.density(mid[i + 1]) * (x[i + 1] - x[i]) : 0.0;
            const double left = i > 0 ? 0.5 * law.density(mid[i]) * (x[i] - x[i - 1]) : 0.0;
            diag[i] = 2.0 * mass - right - left;
            upper[i] = -right;
            lower[i] = -left;
            rhs[i] = -g[i];
        }
        // Thomas algorithm.
        for (std::size_t i = 1; i < n; ++i) {
            const double w = lower[i] / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        step[n - 1] = rhs[n - 1] / diag[n - 1];
        for (std::size_t i = n - 1; i-- > 0;) step[i] = (rhs[i] - upper[i] * step[i + 1]) / diag[i];

        const double current = norm2(g);
        double lambda = 1.0;
        bool accepted = false;
        std::vector<double> trial_g;
        for (std::size_t h = 0; h <= options.max_halvings; ++h, lambda *= 0.5) {
            for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] + lambda * step[i];
            if (!ordered(trial)) continue;
            trial_g = distortion_gradient_1d(law, trial);
            if (norm2(trial_g) < current) {
                accepted = true;
                break;
            }
        }
        if (!accepted) throw ConvergenceError("newton_1d line search failed", max_abs(g));
        x = trial;
        g = std::move(trial_g);
    }

    const auto mid = boundaries(x);
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = law.cdf(mid[i + 1]) - law.cdf(mid[i]);
    return Grid::from_values(std::move(x), std::move(w));
}

double ls_error(const Grid& grid, const SampleSource& source, double s, std::size_t generator_batch) {
    if (!(s > 0.0)) throw InputError("L^s exponent must be positive");
    check_source_dim(grid, source);
    std::vector<double> storage;
    const auto samples = source.materialize(generator_batch, storage);
    const std::size_t d = grid.dim();
    const std::size_t m = samples.size() / d;
    if (m == 0) throw InputError("L^s error needs at least one sample");

    const VoronoiLocator locator(grid);
    const std::size_t chunks = (m + kChunk - 1) / kChunk;
    std::vector<double> partial(chunks, 0.0);
    double total = 0.0;
    for_each_chunk_ordered(
        chunks, default_workers(),
        [&](std::size_t c) {
            double acc = 0.0;
            const std::size_t end = std::min(m, (c + 1) * kChunk);
            for (std::size_t k = c * kChunk; k < end; ++k) {
                double sq = 0.0;
                locator.locate(samples.data() + k * d, &sq);
                acc += std::pow(sq, 0.5 * s);
            }
            partial[c] = acc;
        },
        [&](std::size_t c) { total += partial[c]; });
    return std::pow(total / static_cast<double>(m), 1.0 / s);
}

Grid scale_grid(const Grid& base, std::span<const double> shift, const GridScale& scale) {
    const std::size_t d = base.dim();
    if (shift.size() != d) throw InputError("shift dimension does not match grid dimension");
    std::vector<double> out(base.points().begin(), base.points().end());
    if (const double* a = std::get_if<double>(&scale)) {
        if (!(*a > 0.0)) throw InputError("scalar grid scale must be positive");
        for (std::size_t i = 0; i < base.size(); ++i)
            for (std::size_t k = 0; k < d; ++k) out[i * d + k] = shift[k] + *a * out[i * d + k];
    } else {
        const auto& m = std::get<Eigen::MatrixXd>(scale);
        if (m.rows() != static_cast<Eigen::Index>(d) || m.cols() != static_cast<Eigen::Index>(d))
            throw InputError("matrix grid scale must be d x d");
        if (!m.fullPivLu().isInvertible()) throw InputError("matrix grid scale is singular");
        for (std::size_t i = 0; i < base.size(); ++i) {
            const Eigen::Map<const Eigen::VectorXd> x(base.point(i).data(), static_cast<Eigen::Index>(d));
            const Eigen::VectorXd y = m * x;
            for (std::size_t k = 0; k < d; ++k) out[i * d + k] = shift[k] + y(static_cast<Eigen::Index>(k));
        }
    }
    std::vector<double> w(base.weights().begin(), base.weights().end());
    return Grid(d, std::move(out), std::move(w));
}

} // namespace qs
