#pragma once

#include <cstdint>

#include "legend/matrix.hpp"

namespace legend {

// Splittable, platform-stable PRNG based on splitmix64. Each (seed, stream)
// pair yields an independent deterministic sequence; no libc or libstdc++
// distribution code is involved, so outputs are identical everywhere.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0);

    // Derive an independent stream from the same root seed.
    SeededRng split(std::uint64_t stream) const;

    std::uint64_t next_u64();

    // Uniform in [0, 1), 53-bit resolution.
    double next_double();

    double uniform(double lo, double hi);

    // Uniform integer in [0, n); n > 0.
    std::uint64_t next_below(std::uint64_t n);

    // N(0, std^2) via Box-Muller; consumes two uniforms per sample.
    double gaussian(double stddev);

    // Gamma(shape, 1) via Marsaglia-Tsang; shape > 0.
    double gamma(double shape);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t state_;
};

// rows x cols matrix of i.i.d. N(0, std^2) entries; std >= 0.
Matrix gaussian_matrix(SeededRng& rng, std::size_t rows, std::size_t cols, double stddev);

}  // namespace legend
