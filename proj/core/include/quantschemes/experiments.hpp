#pragma once

#include "quantschemes/bsde.hpp"
#include "quantschemes/chain.hpp"
#include "quantschemes/filter.hpp"
#include "quantschemes/grid.hpp"
#include "quantschemes/grid_io.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace qs {

/// Least-squares fit error ~ a_hat * N^exponent + b_hat.
struct RateFit {
    double a_hat = 0.0;
    double b_hat = 0.0;
    double exponent = -1.0;
    double residual = 0.0; // residual sum of squares
};

/// Needs at least 3 pairs with distinct sizes.
RateFit fit_rate(const std::vector<double>& sizes, const std::vector<double>& errors, double exponent);
/// Residual sum of squares of the best constant model.
double constant_model_residual(const std::vector<double>& errors);
/// Least-squares slope of log(error) against log(size). Errors must be positive.
double loglog_slope(const std::vector<double>& sizes, const std::vector<double>& errors);

/// Optimal N(0, I_d) grids of any size: Newton for d = 1, Lloyd on a frozen Gaussian batch for
/// d >= 2, or files "d<d>_N<N>.txt" from a directory when one is given.
class GaussianGridProvider {
public:
    explicit GaussianGridProvider(std::size_t dim, std::uint64_t seed = 1, std::size_t lloyd_samples = 1'000'000);

    void use_directory(std::filesystem::path dir, GridLayout layout = GridLayout::standard);
    void set_lloyd_stop(const StopCriteria& stop) { stop_ = stop; }

    std::size_t dim() const noexcept { return dim_; }
    const Grid& get(std::size_t size);

private:
    std::size_t dim_;
    std::uint64_t seed_;
    std::size_t lloyd_samples_;
    StopCriteria stop_;
    std::optional<std::filesystem::path> dir_;
    GridLayout layout_ = GridLayout::standard;
    std::vector<double> batch_;
    std::map<std::size_t, Grid> cache_;
};

struct ExperimentConfig {
    std::string experiment;
    std::size_t steps = 0;       // n, 0 means the experiment default
    double horizon = 0.0;        // T, 0 means the experiment default
    std::size_t grid_size = 0;   // uniform N on layers 1..n
    std::vector<std::size_t> sizes; // explicit N_0..N_n (or N_1..N_n with N_0 = 1)
    std::vector<std::size_t> sweep;
    std::uint64_t mc_paths = 1'000'000;
    std::uint64_t seed = 20240611;
    std::size_t dim = 2;
    std::string filter_model = "linear-gaussian";
    std::size_t trajectories = 20;
    std::size_t reference_size = 2000;
    std::optional<std::filesystem::path> grid_dir;
    bool legacy_layout = false;
    std::filesystem::path out = "out";

    void validate() const;
    /// Grid sizes of the sweep, the single configured size, or `fallback`.
    std::vector<std::size_t> sweep_sizes(std::size_t fallback) const;
    /// Per-layer sizes N_0..N_n for one value of the sweep.
    std::vector<std::size_t> layer_sizes(std::size_t grid_size, std::size_t steps) const;
};

struct BsdeSweepRow {
    std::size_t grid_size = 0;
    double y0 = 0.0;
    std::vector<double> z0;
    double y_error = 0.0;
    double z_error = 0.0; // max over components
    std::size_t dead_rows = 0;
};

struct BsdeReport {
    std::string experiment;
    std::size_t dim = 1;
    double y_reference = 0.0;
    double z_reference = 0.0;
    double z_published = 0.0;
    std::vector<BsdeSweepRow> rows;
    std::optional<RateFit> fit;
    double constant_residual = 0.0;
    std::optional<double> slope;
};

/// Bid-ask spread for a call combination in a Black-Scholes market with different borrowing and
/// lending rates. Reference (Y0, Z0) = (2.96, 0.55).
BsdeReport run_bidask(const ExperimentConfig& config);

/// dX = dW in dimension d, driver (z_1 + ... + z_d)(y - (2 + d)/(2d)), terminal e_T/(1 + e_T),
/// e_t = exp(t + W^1_t + ... + W^d_t). Y0 = 1/2, Z0 components = 1/4.
BsdeReport run_multidim(const ExperimentConfig& config, GaussianGridProvider* grids = nullptr);

struct FilterSweepRow {
    std::size_t grid_size = 0;
    double error = 0.0; // root mean square over trajectories of the posterior-mean error at t_n
    double mean_error = 0.0;
    double max_error = 0.0;
};

struct FilterReport {
    std::string model;
    std::vector<FilterSweepRow> rows;
    std::optional<double> slope;
    std::optional<RateFit> fit;
};

/// Scalar Ornstein-Uhlenbeck signal observed either linearly (compared with the Kalman filter) or
/// through sin(x^3) increments (compared with a fine-grid quantized filter).
FilterReport run_filter_demo(const ExperimentConfig& config);

/// Signal and observation parameters of the filter demo.
struct FilterDemoModel {
    double x0 = 0.0;
    double theta = 1.0;
    double s = 1.0;
    double sigma_obs = 0.5;
    double horizon = 1.0;
    std::size_t steps = 10;
};
FilterDemoModel filter_demo_model(const ExperimentConfig& config);

/// Chain for the OU signal on scaled-Gaussian layers matching the Euler-chain moments.
QuantizedChain ou_signal_chain(const FilterDemoModel& model, std::size_t grid_size, std::uint64_t mc_paths,
                               std::uint64_t seed);

void write_bsde_report_csv(const BsdeReport& report, std::ostream& out);
void write_filter_report_csv(const FilterReport& report, std::ostream& out);
std::string bsde_report_json(const BsdeReport& report, const ExperimentConfig& config);
std::string filter_report_json(const FilterReport& report, const ExperimentConfig& config);
std::string rate_fit_json(const RateFit& fit, double constant_residual, std::optional<double> slope);

/// Library version embedded in reports.
inline constexpr const char* kVersion = "1.0.0";

} // namespace qs
