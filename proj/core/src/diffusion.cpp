#include "quantschemes/diffusion.hpp"

#include "quantschemes/error.hpp"
#include "quantschemes/parallel.hpp"
#include "quantschemes/random.hpp"

#include <cmath>
#include <string>

namespace qs {

void TimeMesh::validate() const {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InputError("time horizon must be positive");
    if (steps == 0) throw InputError("time mesh needs at least one step");
}

void DiffusionModel::validate() const {
    if (dim_x == 0 || dim_w == 0) throw InputError("diffusion dimensions must be positive");
    if (!drift || !diffusion) throw InputError("diffusion model needs drift and diffusion coefficients");
    if (x0.size() != dim_x)
        throw InputError("x0 has dimension " + std::to_string(x0.size()) + ", model has " + std::to_string(dim_x));
    if (!(lip_b >= 0.0) || !(lip_sigma >= 0.0)) throw InputError("Lipschitz constants must be nonnegative");
}

DiffusionModel brownian_model(std::size_t d, std::vector<double> x0) {
    DiffusionModel m;
    m.dim_x = d;
    m.dim_w = d;
    m.x0 = x0.empty() ? std::vector<double>(d, 0.0) : std::move(x0);
    m.drift = [](double, std::span<const double>, std::span<double> out) {
        for (double& v : out) v = 0.0;
    };
    m.diffusion = [d](double, std::span<const double>, std::span<double> out) {
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c) out[r * d + c] = r == c ? 1.0 : 0.0;
    };
    return m;
}

DiffusionModel geometric_brownian_model(double x0, double mu, double sigma) {
    DiffusionModel m;
    m.x0 = {x0};
    m.drift = [mu](double, std::span<const double> x, std::span<double> out) { out[0] = mu * x[0]; };
    m.diffusion = [sigma](double, std::span<const double> x, std::span<double> out) { out[0] = sigma * x[0]; };
    m.lip_b = std::abs(mu);
    m.lip_sigma = std::abs(sigma);
    return m;
}

DiffusionModel ornstein_uhlenbeck_model(double x0, double theta, double s) {
    DiffusionModel m;
    m.x0 = {x0};
    m.drift = [theta](double, std::span<const double> x, std::span<double> out) { out[0] = -theta * x[0]; };
    m.diffusion = [s](double, std::span<const double>, std::span<double> out) { out[0] = s; };
    m.lip_b = std::abs(theta);
    return m;
}

std::vector<double> PathBatch::layer(std::size_t k) const {
    std::vector<double> out(num_paths * dim_x);
    for (std::size_t p = 0; p < num_paths; ++p) {
        const auto s = state(p, k);
        std::copy(s.begin(), s.end(), out.begin() + static_cast<std::ptrdiff_t>(p * dim_x));
    }
    return out;
}

namespace detail {

void simulate_chunk(const DiffusionModel& model, const TimeMesh& mesh, std::uint64_t seed, std::size_t first,
                    std::size_t count, double* states, double* increments) {
    const std::size_t d = model.dim_x;
    const std::size_t q = model.dim_w;
    const std::size_t n = mesh.steps;
    const double dt = mesh.step();
    const double sqrt_dt = std::sqrt(dt);
    Rng rng = substream(seed, first / kPathChunk);
    std::normal_distribution<double> normal;
    std::vector<double> b(d), sigma(d * q);

    for (std::size_t p = 0; p < count; ++p) {
        double* x = states + p * (n + 1) * d;
        double* dw = increments + p * n * q;
        std::copy(model.x0.begin(), model.x0.end(), x);
        for (std::size_t k = 0; k < n; ++k) {
            const double t = mesh.knot(k);
            const std::span<const double> xk(x + k * d, d);
            double* next = x + (k + 1) * d;
            double* inc = dw + k * q;
            for (std::size_t c = 0; c < q; ++c) inc[c] = sqrt_dt * normal(rng);
            model.drift(t, xk, b);
            model.diffusion(t, xk, sigma);
            for (std::size_t r = 0; r < d; ++r) {
                double v = xk[r] + dt * b[r];
                for (std::size_t c = 0; c < q; ++c) v += sigma[r * q + c] * inc[c];
                if (!std::isfinite(v))
                    throw NumericError("non-finite Euler state at step " + std::to_string(k + 1) + " of path " +
                                       std::to_string(first + p));
                next[r] = v;
            }
        }
    }
}

} // namespace detail

PathBatch euler_paths(const DiffusionModel& model, const TimeMesh& mesh, std::size_t num_paths, std::uint64_t seed) {
    model.validate();
    mesh.validate();
    if (num_paths == 0) throw InputError("need at least one path");
    PathBatch batch;
    batch.num_paths = num_paths;
    batch.steps = mesh.steps;
    batch.dim_x = model.dim_x;
    batch.dim_w = model.dim_w;
    batch.states.resize(num_paths * (mesh.steps + 1) * model.dim_x);
    batch.increments.resize(num_paths * mesh.steps * model.dim_w);
    const std::size_t chunks = (num_paths + kPathChunk - 1) / kPathChunk;
    for_each_chunk_ordered(
        chunks, default_workers(),
        [&](std::size_t c) {
            const std::size_t first = c * kPathChunk;
            const std::size_t count = std::min(kPathChunk, num_paths - first);
            detail::simulate_chunk(model, mesh, seed, first, count,
                                   batch.states.data() + first * (mesh.steps + 1) * model.dim_x,
                                   batch.increments.data() + first * mesh.steps * model.dim_w);
        },
        [](std::size_t) {});
    return batch;
}

} // namespace qs
