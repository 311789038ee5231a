#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace dynde {

/// A point in the search box [L, U]^d.
using Position = std::vector<double>;

struct Bounds {
    double lower = -5.0;
    double upper = 5.0;

    double range() const { return upper - lower; }
};

/// Objective value and aggregate constraint violation of one position, tagged
/// with the environment period it was computed in.
struct Evaluation {
    double objective = 0.0;
    double violation = 0.0;
    int time_index = 0;

    bool feasible() const { return violation == 0.0; }
};

struct Individual {
    Position position;
    std::optional<Evaluation> eval;
};

using Population = std::vector<Individual>;

enum class Ordering { FirstBetter, SecondBetter, Tie };

/// Deb's feasibility rules under minimization: feasible beats infeasible,
/// two feasible compare by objective, two infeasible compare by violation.
Ordering compare_feasibility(const Evaluation& a, const Evaluation& b);

inline bool strictly_better(const Evaluation& a, const Evaluation& b) {
    return compare_feasibility(a, b) == Ordering::FirstBetter;
}

/// Sum of positive parts of the constraint values g_i(x) <= 0.
double aggregate_violation(std::span<const double> g_values);

Position clamp_to_bounds(Position p, const Bounds& bounds);

/// Purpose tags for independent random streams within one run.
enum class StreamId : std::uint64_t {
    Evolution = 1,
    Environment = 2,
    Diversity = 3,
    Predictor = 4,
    Oracle = 5,
};

/// Mixes two 64-bit values into a well-spread seed (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Deterministic random stream. The engine is mt19937_64, whose output
/// sequence is fixed by the standard; the distributions are implemented here
/// because the standard library ones are implementation-defined.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);
    RngStream(std::uint64_t seed, StreamId stream)
        : RngStream(seed, static_cast<std::uint64_t>(stream)) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01();
    double uniform(double low, double high);
    /// Uniform integer in [0, n). n must be positive.
    std::size_t index(std::size_t n);
    /// Standard normal draw (Marsaglia polar method).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
    std::optional<double> spare_normal_;
};

Position random_position(std::size_t dimension, const Bounds& bounds, RngStream& rng);

double squared_distance(std::span<const double> a, std::span<const double> b);

}  // namespace dynde
