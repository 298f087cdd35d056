#include "quantschemes/sample_source.hpp"

#include "quantschemes/error.hpp"

#include <string>

namespace qs {

SampleSource SampleSource::batch(std::size_t dim, std::vector<double> points, std::uint64_t seed) {
    if (dim == 0) throw InputError("sample dimension must be positive");
    if (points.empty()) throw InputError("sample batch is empty");
    if (points.size() % dim != 0)
        throw InputError("batch coordinate count " + std::to_string(points.size()) +
                         " is not a multiple of dimension " + std::to_string(dim));
    SampleSource s(dim, seed);
    s.points_ = std::move(points);
    return s;
}

SampleSource SampleSource::generator(Distribution law, std::size_t dim, std::uint64_t seed) {
    switch (law) {
    case Distribution::standard_gaussian:
        return generator(
            [](Rng& rng, std::span<double> out) {
                std::normal_distribution<double> normal;
                for (double& v : out) v = normal(rng);
            },
            dim, seed);
    case Distribution::uniform_cube:
        return generator(
            [](Rng& rng, std::span<double> out) {
                std::uniform_real_distribution<double> unif;
                for (double& v : out) v = unif(rng);
            },
            dim, seed);
    }
    throw InputError("unknown distribution");
}

SampleSource SampleSource::generator(Sampler sampler, std::size_t dim, std::uint64_t seed) {
    if (dim == 0) throw InputError("sample dimension must be positive");
    if (!sampler) throw InputError("sampler must be callable");
    SampleSource s(dim, seed);
    s.sampler_ = std::move(sampler);
    return s;
}

std::span<const double> SampleSource::samples() const {
    if (!is_batch()) throw InputError("sample source is a generator, not a frozen batch");
    return points_;
}

std::vector<double> SampleSource::draw(std::size_t count) const {
    if (is_batch()) return points_;
    std::vector<double> out(count * dim_);
    Rng rng = stream();
    for (std::size_t m = 0; m < count; ++m) sampler_(rng, {out.data() + m * dim_, dim_});
    return out;
}

std::span<const double> SampleSource::materialize(std::size_t count, std::vector<double>& storage) const {
    if (is_batch()) return points_;
    storage = draw(count);
    return storage;
}

} // namespace qs
