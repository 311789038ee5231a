#include "dynde/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dynde {

Ordering compare_feasibility(const Evaluation& a, const Evaluation& b) {
    const bool fa = a.feasible();
    const bool fb = b.feasible();
    if (fa != fb) {
        return fa ? Ordering::FirstBetter : Ordering::SecondBetter;
    }
    const double ka = fa ? a.objective : a.violation;
    const double kb = fb ? b.objective : b.violation;
    if (ka < kb) return Ordering::FirstBetter;
    if (kb < ka) return Ordering::SecondBetter;
    return Ordering::Tie;
}

double aggregate_violation(std::span<const double> g_values) {
    double total = 0.0;
    for (double g : g_values) {
        if (g > 0.0) total += g;
    }
    return total;
}

Position clamp_to_bounds(Position p, const Bounds& bounds) {
    for (double& x : p) {
        x = std::clamp(x, bounds.lower, bounds.upper);
    }
    return p;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(mix_seed(seed, stream_id)) {}

double RngStream::uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double low, double high) {
    return low + (high - low) * uniform01();
}

std::size_t RngStream::index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("RngStream::index: empty range");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    // Rejection removes the modulo bias.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r = engine_();
    while (r >= limit) r = engine_();
    return static_cast<std::size_t>(r % bound);
}

double RngStream::normal() {
    if (spare_normal_) {
        const double v = *spare_normal_;
        spare_normal_.reset();
        return v;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform01() - 1.0;
        v = 2.0 * uniform01() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_normal_ = v * factor;
    return u * factor;
}

Position random_position(std::size_t dimension, const Bounds& bounds, RngStream& rng) {
    Position p(dimension);
    for (double& x : p) x = rng.uniform(bounds.lower, bounds.upper);
    return p;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double diff = a[j] - b[j];
        s += diff * diff;
    }
    return s;
}

}  // namespace dynde
