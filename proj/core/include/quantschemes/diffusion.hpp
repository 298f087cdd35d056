#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace qs {

/// Uniform time mesh t_k = k T / n on [0, T].
struct TimeMesh {
    double horizon = 1.0;
    std::size_t steps = 1;

    double step() const noexcept { return horizon / static_cast<double>(steps); }
    double knot(std::size_t k) const noexcept {
        return k == steps ? horizon : horizon * static_cast<double>(k) / static_cast<double>(steps);
    }
    void validate() const;

    friend bool operator==(const TimeMesh&, const TimeMesh&) = default;
};

/// Writes the drift b(t, x) (length d) or the diffusion sigma(t, x) (d x q, row-major) into `out`.
using Coefficient = std::function<void(double t, std::span<const double> x, std::span<double> out)>;

/// dX_t = b(t, X_t) dt + sigma(t, X_t) dW_t with X_0 = x0, W a q-dimensional Brownian motion.
struct DiffusionModel {
    std::size_t dim_x = 1;
    std::size_t dim_w = 1;
    Coefficient drift;
    Coefficient diffusion;
    std::vector<double> x0;
    double lip_b = 0.0;
    double lip_sigma = 0.0;

    void validate() const;
};

/// X = x0 + W in dimension d (q = d).
DiffusionModel brownian_model(std::size_t d, std::vector<double> x0 = {});
/// dX = mu X dt + sigma X dW, scalar.
DiffusionModel geometric_brownian_model(double x0, double mu, double sigma);
/// dX = -theta X dt + s dW, scalar.
DiffusionModel ornstein_uhlenbeck_model(double x0, double theta, double s);

/// Euler-scheme paths together with the Brownian increments that drove them.
struct PathBatch {
    std::size_t num_paths = 0;
    std::size_t steps = 0;
    std::size_t dim_x = 0;
    std::size_t dim_w = 0;
    std::vector<double> states;     // num_paths x (steps+1) x dim_x
    std::vector<double> increments; // num_paths x steps x dim_w

    std::span<const double> state(std::size_t path, std::size_t k) const noexcept {
        return {states.data() + (path * (steps + 1) + k) * dim_x, dim_x};
    }
    std::span<const double> increment(std::size_t path, std::size_t k) const noexcept {
        return {increments.data() + (path * steps + k) * dim_w, dim_w};
    }
    /// All path states at time index k (num_paths x dim_x).
    std::vector<double> layer(std::size_t k) const;
};

/// Paths are generated in fixed chunks; chunk c draws from substream (seed, c).
inline constexpr std::size_t kPathChunk = 1u << 14;

/// X_{k+1} = X_k + Delta b(t_k, X_k) + sigma(t_k, X_k) dW_{k+1}, dW ~ N(0, Delta I_q).
PathBatch euler_paths(const DiffusionModel& model, const TimeMesh& mesh, std::size_t num_paths, std::uint64_t seed);

namespace detail {
/// Simulates paths [first, first + count) of the stream of `seed`; `first` must be chunk-aligned.
void simulate_chunk(const DiffusionModel& model, const TimeMesh& mesh, std::uint64_t seed, std::size_t first,
                    std::size_t count, double* states, double* increments);
} // namespace detail

} // namespace qs
