#pragma once

#include "quantschemes/chain.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace qs {

/// Driver f(t, x, y, z) and terminal condition h(x) of the Markovian BSDE
/// Y_t = h(X_T) + int_t^T f(s, X_s, Y_s, Z_s) ds - int_t^T Z_s dW_s.
struct DriverSpec {
    std::function<double(double t, std::span<const double> x, double y, std::span<const double> z)> f;
    std::function<double(std::span<const double> x)> h;
    double lip_f = 0.0;
    double lip_h = 0.0;
};

struct QuantizedBsdeSolution {
    std::vector<std::vector<double>> y_values;     // per layer, N_k values
    std::vector<std::vector<double>> zeta_values;  // per step k < n, N_k x q values
    double y0 = 0.0;
    std::vector<double> z0;
    std::vector<std::string> warnings;
};

enum class ZetaFormula {
    /// (1/Delta) sum_j pi_ij y_{k+1}(x_j)
    raw,
    /// (1/Delta) sum_j pi_ij (y_{k+1}(x_j) - alpha_k(x_i))
    centered,
};

/// Explicit-inner quantized dynamic programming:
///   y_n = h on Gamma_n,
///   alpha_k(x_i) = sum_j p_ij y_{k+1}(x_j),
///   zeta_k(x_i)  = (1/Delta) sum_j pi^W_ij y_{k+1}(x_j),
///   y_k(x_i)     = alpha_k(x_i) + Delta f(t_k, x_i, alpha_k(x_i), zeta_k(x_i)).
/// y0/z0 are the layer-0 values when N_0 = 1, marginal-weighted averages otherwise.
QuantizedBsdeSolution solve_bsde(const QuantizedChain& chain, const DriverSpec& driver,
                                 ZetaFormula formula = ZetaFormula::raw);

/// (1/Delta) sum_j pi^{W,k}_ij y_next(x_j), per point of layer k (N_k x q).
std::vector<double> zeta_raw(const QuantizedChain& chain, std::size_t k, std::span<const double> y_next);

/// (1/Delta) sum_j pi^{W,k}_ij (y_next(x_j) - y_curr(x_i)), per point of layer k (N_k x q).
std::vector<double> zeta_centered(const QuantizedChain& chain, std::size_t k, std::span<const double> y_next,
                                  std::span<const double> y_curr);

/// Constants of the a priori L^2 error bound
///   ||Y_k - Yhat_k||^2 <= sum_{i>=k} e^{(1+[f])(t_i - t_k)} K_i ||X_i - Xhat_i||^2.
struct BoundConstants {
    double c_bsigma = 0.0;
    double kappa0 = 0.0;
    double kappa1 = 0.0;
    std::vector<double> c1;        // k = 0..n-1
    std::vector<double> c2;        // k = 0..n-1
    std::vector<double> k_weights; // k = 0..n, k_weights[n] = lip_h^2
    double lip_f = 0.0;
    double horizon = 1.0;
    std::size_t steps = 1;

    /// e^{(1 + [f]_Lip)(t_i - t_k)}
    double exp_factor(std::size_t i, std::size_t k) const;
};

BoundConstants bound_constants(double lip_b, double lip_sigma, double lip_f, double lip_h, double horizon,
                               std::size_t n, std::size_t n0, std::size_t q);

/// Right-hand side of the bound at layer k given measured ||X_i - Xhat_i||_2^2, i = 0..n.
double error_bound(const BoundConstants& constants, std::span<const double> layer_squared_errors, std::size_t k = 0);

struct GridAllocation {
    std::vector<std::size_t> sizes;
    double bound_factor = 0.0; // sum_i c_i N_i^{-2/d}
};

/// Budget split N_i = max(1, floor(c_i^{d/(d+2)} / sum_k c_k^{d/(d+2)} N)) minimizing sum_i c_i N_i^{-2/d}.
GridAllocation allocate_grid_sizes(std::span<const double> c, std::size_t budget, std::size_t d);

/// Rows "k,i,x_1..x_d,y,zeta_1..zeta_q" (zeta empty on the last layer).
void write_solution_csv(const QuantizedBsdeSolution& solution, const QuantizedChain& chain, std::ostream& out);
/// JSON object {y0, z0, n, sizes, seed, warnings}.
std::string solution_summary_json(const QuantizedBsdeSolution& solution, const QuantizedChain& chain);

} // namespace qs
