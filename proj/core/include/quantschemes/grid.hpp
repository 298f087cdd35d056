#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace qs {

/// A quantization grid (codebook): N points in R^d, optionally with one probability weight per
/// point. Point order is the identity of the Voronoi cells: index i names cell C_i.
class Grid {
public:
    /// `points` is row-major, N*dim values. `weights` is empty or holds N probabilities.
    Grid(std::size_t dim, std::vector<double> points, std::vector<double> weights = {});

    /// One-dimensional grid from a list of scalars.
    static Grid from_values(std::vector<double> values, std::vector<double> weights = {});

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return points_.size() / dim_; }

    std::span<const double> point(std::size_t i) const noexcept {
        return {points_.data() + i * dim_, dim_};
    }
    std::span<const double> points() const noexcept { return points_; }

    bool has_weights() const noexcept { return !weights_.empty(); }
    std::span<const double> weights() const noexcept { return weights_; }

    Grid with_weights(std::vector<double> weights) const;
    Grid without_weights() const { return Grid(dim_, points_); }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    std::size_t dim_;
    std::vector<double> points_;
    std::vector<double> weights_;
};

struct Neighbor {
    std::size_t index;
    double distance;
};

/// Closest grid point in Euclidean norm, ties resolved to the smallest index.
Neighbor nearest_neighbor(const Grid& grid, std::span<const double> point);

/// Squared Euclidean distance.
inline double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) {
        const double diff = a[c] - b[c];
        s += diff * diff;
    }
    return s;
}

/// Repeated nearest-neighbor queries against one grid. Returns exactly what `nearest_neighbor`
/// returns (same index, same tie rule); in dimension one it uses a sorted copy and bisection.
class VoronoiLocator {
public:
    explicit VoronoiLocator(const Grid& grid);

    /// Cell index of `point`; `sq_dist` receives the squared distance when non-null.
    std::uint32_t locate(std::span<const double> point, double* sq_dist = nullptr) const;
    std::uint32_t locate(const double* point, double* sq_dist = nullptr) const {
        return locate(std::span<const double>(point, dim_), sq_dist);
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return n_; }

private:
    std::uint32_t locate_1d(double x, double* sq_dist) const;

    std::size_t dim_;
    std::size_t n_;
    std::vector<double> points_;        // row-major copy
    std::vector<double> sorted_values_; // d == 1 only
    std::vector<std::uint32_t> sorted_index_;
};

} // namespace qs
