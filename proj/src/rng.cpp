#include "legend/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace legend {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream) {
    // Mix seed and stream so nearby streams are decorrelated.
    std::uint64_t s = stream * 0xDA942042E4DD58B5ULL;
    std::uint64_t mixed = seed ^ splitmix64(s);
    state_ = mixed;
    // Burn the first output so state 0 does not emit 0 patterns.
    (void)splitmix64(state_);
}

SeededRng SeededRng::split(std::uint64_t stream) const {
    return SeededRng(seed_, stream);
}

std::uint64_t SeededRng::next_u64() { return splitmix64(state_); }

double SeededRng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
}

std::uint64_t SeededRng::next_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("next_below: n must be positive");
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % n;
}

double SeededRng::gaussian(double stddev) {
    if (stddev < 0.0) throw std::invalid_argument("gaussian: stddev must be >= 0");
    if (stddev == 0.0) {
        // Still consume the uniforms so the call sequence stays aligned.
        (void)next_double();
        (void)next_double();
        return 0.0;
    }
    double u1 = next_double();
    double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return stddev * std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
}

double SeededRng::gamma(double shape) {
    if (shape <= 0.0) throw std::invalid_argument("gamma: shape must be positive");
    if (shape < 1.0) {
        const double u = next_double();
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = gaussian(1.0);
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        const double u = next_double();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

Matrix gaussian_matrix(SeededRng& rng, std::size_t rows, std::size_t cols, double stddev) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.gaussian(stddev);
    return m;
}

}  // namespace legend
