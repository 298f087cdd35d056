#pragma once

#include "quantschemes/diffusion.hpp"
#include "quantschemes/grid.hpp"
#include "quantschemes/quantizer.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <variant>
#include <vector>

namespace qs {

/// Quantized transition from layer k to layer k+1, stored row-compressed: only transitions that
/// were observed (or filled in for dead rows) are kept. Companion weights pi^{W,k}_{ij} sit next to
/// the probabilities, q values per stored entry.
struct TransitionStep {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t dim_w = 0;
    std::vector<std::size_t> row_offsets; // rows + 1
    std::vector<std::uint32_t> columns;
    std::vector<double> probabilities;
    std::vector<double> companions; // nnz x dim_w
    std::vector<std::uint32_t> dead_rows;

    std::size_t nonzeros() const noexcept { return columns.size(); }
    double probability(std::size_t i, std::size_t j) const;
    /// pi^{W}_{ij}; zero vector when (i, j) is not stored.
    std::vector<double> companion(std::size_t i, std::size_t j) const;
    std::span<const double> companion_at(std::size_t entry) const noexcept {
        return {companions.data() + entry * dim_w, dim_w};
    }
    std::vector<double> dense_probabilities() const;
    bool is_dead(std::size_t i) const;

    friend bool operator==(const TransitionStep&, const TransitionStep&) = default;
};

/// The quantization tree: per-layer grids, marginal weights, transitions and companion weights.
struct QuantizedChain {
    TimeMesh mesh;
    std::size_t dim_x = 1;
    std::size_t dim_w = 1;
    std::vector<Grid> layers;                 // n + 1
    std::vector<std::vector<double>> marginals; // n + 1
    std::vector<TransitionStep> transitions;  // n
    std::uint64_t mc_paths = 0;
    std::uint64_t seed = 0;
    bool centered = false;

    std::size_t steps() const noexcept { return transitions.size(); }
    std::size_t dead_row_count() const;
    /// Throws InputError when a structural invariant fails (shapes, stochastic rows, centering).
    void validate() const;

    friend bool operator==(const QuantizedChain&, const QuantizedChain&) = default;
};

/// Maps a base N(0, I) grid to the layer-k grid (time t_k).
using LayerMap = std::function<Grid(std::size_t k, double t, const Grid& base)>;

struct ScaledGaussianLayers {
    std::map<std::size_t, Grid> base_grids; // keyed by size
    LayerMap map;
};

struct LloydOnSamples {
    std::size_t num_paths = 100'000;
    StopCriteria stop{};
};

using LayerGridMethod = std::variant<ScaledGaussianLayers, LloydOnSamples>;

/// Layer grids Gamma_0..Gamma_n of the requested sizes. A deterministic start with N_0 = 1 gives
/// Gamma_0 = {x0}.
std::vector<Grid> build_layer_grids(const DiffusionModel& model, const TimeMesh& mesh,
                                    const std::vector<std::size_t>& sizes, const LayerGridMethod& method,
                                    std::uint64_t seed);

/// x0 + sqrt(t) * base.
LayerMap brownian_layer_map(std::vector<double> x0);
/// x0 exp((mu - sigma^2/2) t + sigma sqrt(t) base), scalar.
LayerMap lognormal_layer_map(double x0, double mu, double sigma);
/// mean(t) + stddev(t) * base, scalar.
LayerMap gaussian_layer_map(std::function<double(double)> mean, std::function<double(double)> stddev);

struct ChainOptions {
    bool center = true;
    bool companions = true;
};

/// One Monte Carlo pass over Euler paths: nearest-neighbor projection on every layer, then
/// p^k_i = count(i)/M, p^k_ij = count(i->j)/count(i), pi^{W,k}_ij = sum_{i->j} dW_{k+1} / count(i).
/// Centering subtracts p_ij * (row sum) so every visited companion row sums to zero.
/// Unvisited rows become uniform rows with zero companions and are listed in `dead_rows`.
QuantizedChain estimate_companions(const DiffusionModel& model, const TimeMesh& mesh, std::vector<Grid> layers,
                                   std::size_t num_paths, std::uint64_t seed, const ChainOptions& options = {});

/// Monte Carlo estimates of ||X_k - Proj_{Gamma_k}(X_k)||_2^2 for every layer.
std::vector<double> layer_quantization_errors(const DiffusionModel& model, const TimeMesh& mesh,
                                              const std::vector<Grid>& layers, std::size_t num_paths,
                                              std::uint64_t seed);

} // namespace qs
