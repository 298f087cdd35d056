#pragma once

#include "quantschemes/chain.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qs {

/// Conditional observation density g_k(x, y_{k-1}, x', y_k), k = 1..n.
using ObservationDensity = std::function<double(std::size_t k, std::span<const double> x_prev,
                                                std::span<const double> y_prev, std::span<const double> x,
                                                std::span<const double> y)>;

struct FilterModel {
    std::shared_ptr<const QuantizedChain> chain;
    ObservationDensity g;
    std::vector<std::vector<double>> observations; // y_0..y_n

    std::size_t steps() const noexcept { return chain ? chain->transitions.size() : 0; }
    void validate() const;
};

/// H_{y,k}: entry (i, j) = g_k(x_i^{k-1}, y_{k-1}, x_j^k, y_k) p_ij, on the sparsity pattern of the
/// transition from layer k-1 to layer k.
struct FilterKernel {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> row_offsets;
    std::vector<std::uint32_t> columns;
    std::vector<double> values;

    double at(std::size_t i, std::size_t j) const;
    std::vector<double> dense() const;
};

FilterKernel quantized_kernels(const FilterModel& model, std::size_t k);

struct FilterState {
    std::vector<std::vector<double>> normalized; // per layer, sums to 1
    std::vector<double> log_mass;                // log of the un-normalized mass per layer
    std::vector<double> normalized_final;
    double log_total_mass = 0.0;

    /// pi_{y,k} = exp(log_mass[k]) * normalized[k].
    std::vector<double> unnormalized(std::size_t k) const;
};

/// pi_{y,0} = p^0, pi_{y,k} = pi_{y,k-1} H_{y,k}, renormalized after every step.
FilterState forward_filter(const FilterModel& model);

/// value * exp(log_scale).
struct ScaledValue {
    double value = 0.0;
    double log_scale = 0.0;
    double resolve() const;
};

/// u_n = f, u_{k-1} = H_{y,k} u_k, result sum_i p^0_i u_0(x_i^0) = pi_{y,n} f.
ScaledValue backward_value_scaled(const FilterModel& model, std::span<const double> f_values);
double backward_value(const FilterModel& model, std::span<const double> f_values);

/// sum_i Pi_{y,n}^i f(x_i^n).
double filter_expectation(const FilterState& state, std::span<const double> f_values);

/// Per-coordinate posterior mean and variance on the last layer.
struct PosteriorMoments {
    std::vector<double> mean;
    std::vector<double> variance;
};
PosteriorMoments posterior_moments(const FilterState& state, const Grid& last_layer);

/// Y_k = X_k + sigma eps_k: g = phi_sigma(y - x').
ObservationDensity linear_gaussian_density(double sigma_obs);
/// Y_k = Y_{k-1} + phi(X_{k-1}) + sigma eps_k: g = phi_0((y - y_prev - phi(x)) / sigma) / sigma.
ObservationDensity increment_density(double sigma, std::function<double(double)> phi);

struct BuiltinFilterParams {
    double sigma = 1.0;
    /// Observation drift of the increment model; sin(x^3) when empty.
    std::function<double(double)> phi;
};

/// "linear-gaussian" or "sin-cube" on a scalar signal chain.
FilterModel builtin_model(std::string_view name, std::shared_ptr<const QuantizedChain> chain,
                          const BuiltinFilterParams& params, std::vector<std::vector<double>> observations);

struct SimulatedTrajectory {
    std::vector<double> signal;                    // X_0..X_n
    std::vector<std::vector<double>> observations; // Y_0..Y_n
};

/// One Euler path of the scalar signal and the matching observations of the named builtin model.
/// Y_0 = X_0 + sigma eps_0 for linear-gaussian, Y_0 = 0 for sin-cube.
SimulatedTrajectory simulate_trajectory(std::string_view name, const DiffusionModel& signal, const TimeMesh& mesh,
                                        const BuiltinFilterParams& params, std::uint64_t seed);

struct KalmanResult {
    std::vector<double> mean;
    std::vector<double> variance;
};

/// Exact filter of X_{k+1} = a X_k + s sqrt(Delta) eps, Y_k = X_k + sigma_obs eta, X_0 = x0 known,
/// with a = 1 - theta Delta; y_0 is ignored because X_0 is deterministic.
KalmanResult kalman_filter(double x0, double theta, double s, const TimeMesh& mesh, double sigma_obs,
                           std::span<const double> observations);

/// One row per k, q_obs comma-separated values; a non-numeric first line is treated as a header.
std::vector<std::vector<double>> read_observations_csv(std::istream& in);
void write_observations_csv(const std::vector<std::vector<double>>& observations, std::ostream& out);
/// Rows "k,i,weight" of the normalized per-layer filter.
void write_filter_csv(const FilterState& state, std::ostream& out);
/// {log_total_mass, posterior_mean, posterior_variance}.
std::string filter_summary_json(const FilterState& state, const Grid& last_layer);

} // namespace qs
