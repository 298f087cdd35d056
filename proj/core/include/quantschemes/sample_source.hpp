#pragma once

#include "quantschemes/random.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace qs {

enum class Distribution { standard_gaussian, uniform_cube };

/// Fills one point (span of length dim) from the generator.
using Sampler = std::function<void(Rng&, std::span<double>)>;

/// Empirical stand-in for the law of X: either a frozen batch of M points, or a seeded i.i.d.
/// generator. Generators restart from their seed on every `draw`, so draws are reproducible.
class SampleSource {
public:
    static SampleSource batch(std::size_t dim, std::vector<double> points, std::uint64_t seed = 0);
    static SampleSource generator(Distribution law, std::size_t dim, std::uint64_t seed);
    static SampleSource generator(Sampler sampler, std::size_t dim, std::uint64_t seed);

    bool is_batch() const noexcept { return !sampler_; }
    std::size_t dim() const noexcept { return dim_; }
    std::uint64_t seed() const noexcept { return seed_; }

    /// Frozen batch (row-major). Throws InputError in generator mode.
    std::span<const double> samples() const;
    std::size_t batch_size() const noexcept { return points_.size() / dim_; }

    /// Generator mode: the first `count` points of the seeded stream. Batch mode: the batch.
    std::vector<double> draw(std::size_t count) const;

    /// Fresh generator positioned at the start of the stream.
    Rng stream() const { return substream(seed_, 0); }
    void draw_one(Rng& rng, std::span<double> out) const { sampler_(rng, out); }

    /// Batch view when frozen, otherwise `count` generated points stored in `storage`.
    std::span<const double> materialize(std::size_t count, std::vector<double>& storage) const;

private:
    SampleSource(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}

    std::size_t dim_;
    std::uint64_t seed_;
    std::vector<double> points_;
    Sampler sampler_;
};

} // namespace qs
