#include "quantschemes/grid.hpp"

#include "quantschemes/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace qs {

Grid::Grid(std::size_t dim, std::vector<double> points, std::vector<double> weights)
    : dim_(dim), points_(std::move(points)), weights_(std::move(weights)) {
    if (dim_ == 0) throw InputError("grid dimension must be positive");
    if (points_.empty()) throw InputError("grid must hold at least one point");
    if (points_.size() % dim_ != 0)
        throw InputError("grid coordinate count " + std::to_string(points_.size()) +
                         " is not a multiple of dimension " + std::to_string(dim_));
    if (!weights_.empty()) {
        if (weights_.size() != size())
            throw InputError("grid has " + std::to_string(size()) + " points but " +
                             std::to_string(weights_.size()) + " weights");
        double total = 0.0;
        for (double w : weights_) {
            if (!(w >= 0.0)) throw InputError("grid weights must be nonnegative");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw InputError("grid weights sum to " + std::to_string(total) + ", expected 1");
    }
}

Grid Grid::from_values(std::vector<double> values, std::vector<double> weights) {
    return Grid(1, std::move(values), std::move(weights));
}

Grid Grid::with_weights(std::vector<double> weights) const {
    return Grid(dim_, points_, std::move(weights));
}

Neighbor nearest_neighbor(const Grid& grid, std::span<const double> point) {
    if (point.size() != grid.dim())
        throw InputError("point has dimension " + std::to_string(point.size()) +
                         ", grid has dimension " + std::to_string(grid.dim()));
    std::size_t best = 0;
    double best_sq = squared_distance(grid.point(0), point);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double sq = squared_distance(grid.point(i), point);
        if (sq < best_sq) {
            best_sq = sq;
            best = i;
        }
    }
    return {best, std::sqrt(best_sq)};
}

VoronoiLocator::VoronoiLocator(const Grid& grid)
    : dim_(grid.dim()), n_(grid.size()), points_(grid.points().begin(), grid.points().end()) {
    if (dim_ == 1) {
        sorted_index_.resize(n_);
        std::iota(sorted_index_.begin(), sorted_index_.end(), 0u);
        std::sort(sorted_index_.begin(), sorted_index_.end(), [&](std::uint32_t a, std::uint32_t b) {
            return points_[a] < points_[b] || (points_[a] == points_[b] && a < b);
        });
        sorted_values_.resize(n_);
        for (std::size_t r = 0; r < n_; ++r) sorted_values_[r] = points_[sorted_index_[r]];
    }
}

std::uint32_t VoronoiLocator::locate_1d(double x, double* sq_dist) const {
    const auto first = sorted_values_.begin();
    const std::size_t pos =
        static_cast<std::size_t>(std::upper_bound(first, sorted_values_.end(), x) - first);
    auto sq = [&](std::size_t r) {
        const double diff = sorted_values_[r] - x;
        return diff * diff;
    };
    double best_sq = pos < n_ ? sq(pos) : sq(pos - 1);
    if (pos > 0) best_sq = std::min(best_sq, sq(pos - 1));

    // Squared distance is monotone away from x in sorted order, so every tied point sits in the
    // contiguous run around `pos`.
    std::uint32_t best = static_cast<std::uint32_t>(n_);
    for (std::size_t r = pos; r > 0 && sq(r - 1) == best_sq; --r)
        best = std::min(best, sorted_index_[r - 1]);
    for (std::size_t r = pos; r < n_ && sq(r) == best_sq; ++r) best = std::min(best, sorted_index_[r]);
    if (sq_dist) *sq_dist = best_sq;
    return best;
}

std::uint32_t VoronoiLocator::locate(std::span<const double> point, double* sq_dist) const {
    if (dim_ == 1) return locate_1d(point[0], sq_dist);
    std::uint32_t best = 0;
    double best_sq = squared_distance({points_.data(), dim_}, point);
    for (std::size_t i = 1; i < n_; ++i) {
        const double* p = points_.data() + i * dim_;
        double s = 0.0;
        for (std::size_t c = 0; c < dim_ && s < best_sq; ++c) {
            const double diff = p[c] - point[c];
            s += diff * diff;
        }
        if (s < best_sq) {
            best_sq = s;
            best = static_cast<std::uint32_t>(i);
        }
    }
    if (sq_dist) *sq_dist = best_sq;
    return best;
}

} // namespace qs
