#pragma once

#include "quantschemes/grid.hpp"
#include "quantschemes/sample_source.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <variant>
#include <vector>

namespace qs {

/// Empirical quadratic distortion D_{N,2} of a grid and its gradient with respect to the points.
struct DistortionReport {
    double value = 0.0;
    std::vector<double> gradient; // N*d, row-major
    std::vector<std::uint64_t> cell_counts;
};

struct StopCriteria {
    std::size_t max_iterations = 200;
    double relative_distortion_tolerance = 1e-8;
    double stationarity_tolerance = 1e-6;

    void validate() const;
};

/// Batch size drawn from generator sources by the measurement routines.
inline constexpr std::size_t kDefaultMeasurementBatch = 1'000'000;

/// value = (1/M) sum_m min_i |xi_m - x_i|^2, gradient_i = (2/M) sum_{xi_m in C_i} (x_i - xi_m).
DistortionReport distortion_and_gradient(const Grid& grid, const SampleSource& source,
                                         std::size_t generator_batch = kDefaultMeasurementBatch);

struct LloydResult {
    Grid grid;                           // with empirical cell frequencies as weights
    DistortionReport report;             // at the returned grid
    std::size_t iterations = 0;          // number of fixed-point updates performed
    std::vector<double> distortion_history; // distortion of every grid visited, in order
    double stationarity_defect = 0.0;    // max_i |cell mean - x_i| / (1 + |x_i|) over nonempty cells
    std::size_t reseeded_cells = 0;
};

/// Lloyd's fixed-point iteration (x_i <- mean of cell i) on a frozen batch.
LloydResult lloyd(const Grid& initial, const SampleSource& source, const StopCriteria& stop);

/// Step schedule gamma_t = a / (b + t).
struct ClvqSchedule {
    double a = 1.0;
    double b = 9.0;

    double step(std::size_t t) const { return a / (b + static_cast<double>(t)); }
};

/// Competitive learning vector quantization (stochastic gradient descent on the distortion).
/// Weights of the returned grid are cell frequencies over `frequency_pass` further draws.
Grid clvq(const Grid& initial, const SampleSource& source, std::size_t steps,
          ClvqSchedule schedule = {}, std::size_t frequency_pass = 100'000);

/// One-dimensional law given through its density, c.d.f. and first partial moment
/// K(t) = integral_{-inf}^t xi density(xi) d xi. [lower, upper] brackets the bulk of the mass.
struct ScalarLaw {
    std::function<double(double)> density;
    std::function<double(double)> cdf;
    std::function<double(double)> partial_moment;
    double lower = -1.0;
    double upper = 1.0;
};

ScalarLaw standard_gaussian_law();
ScalarLaw uniform_law(double a, double b);

struct NewtonOptions {
    std::size_t max_iterations = 500;
    double tolerance = 1e-10; // max-norm of the distortion gradient
    std::size_t max_halvings = 30;
};

/// Stationary quadratic quantizer of size n for a scalar law, by damped Newton iteration on the
/// distortion gradient. Weights are the exact Voronoi cell masses.
Grid newton_1d(const ScalarLaw& law, std::size_t n, const NewtonOptions& options = {});

/// Exact distortion gradient of a sorted 1D grid under `law`.
std::vector<double> distortion_gradient_1d(const ScalarLaw& law, std::span<const double> points);

/// L^s quantization error ((1/M) sum_m dist(xi_m, grid)^s)^(1/s).
double ls_error(const Grid& grid, const SampleSource& source, double s,
                std::size_t generator_batch = kDefaultMeasurementBatch);

using GridScale = std::variant<double, Eigen::MatrixXd>;

/// Maps every point to shift + scale * x_i; weights are kept.
Grid scale_grid(const Grid& base, std::span<const double> shift, const GridScale& scale);

} // namespace qs
