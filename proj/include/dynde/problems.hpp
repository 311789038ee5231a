#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dynde/core.hpp"

namespace dynde {

enum class Landscape { Sphere, Rosenbrock, Rastrigin };
enum class Experiment { Exp1, Exp2, Exp3, Exp4 };

std::string to_string(Landscape id);
std::string to_string(Experiment id);
Landscape parse_landscape(const std::string& name);
Experiment parse_experiment(const std::string& name);

/// Parameters of one environment-change rule.
///   Exp1: b <- b + U(lk, uk)
///   Exp2: b <- p * sin(b) + N(0, noise_sigma)
///   Exp3: offset <- offset + 0.1 t
///   Exp4: offset <- offset + p_t * sin(pi t / 2),  p_t ~ U(p_low, p_high)
struct ExperimentSpec {
    Experiment experiment = Experiment::Exp1;
    double lk = -1.0;
    double uk = 1.0;
    double p = 1.0;
    double noise_sigma = 0.5;
    double p_low = 0.5;
    double p_high = 3.0;
    /// Initial constraint boundary; derived from the landscape when unset.
    std::optional<double> b0;
    /// Constraint coefficients; all ones when empty.
    std::vector<double> a;

    void validate() const;
};

struct EnvironmentState {
    int time_index = 0;
    Position offset;
    double b = 0.0;
    std::vector<double> a;
    /// Amplitude drawn at the most recent Exp4 change.
    double amplitude = 0.0;
};

/// Untranslated landscape value at z.
double eval_base(Landscape id, std::span<const double> z);

/// a.x - b; positive values are violations.
double constraint_value(const EnvironmentState& env, std::span<const double> x);

/// Location of the unconstrained minimum of eval_base.
Position canonical_optimum(Landscape id, std::size_t dimension);

Evaluation evaluate(const EnvironmentState& env, Landscape id, std::span<const double> x);

EnvironmentState initial_environment(const ExperimentSpec& spec, Landscape id,
                                     std::size_t dimension, const Bounds& bounds);

EnvironmentState advance_environment(const EnvironmentState& env, const ExperimentSpec& spec,
                                     RngStream& rng);

/// Environment states for periods 0..periods-1, drawn from the Environment stream
/// of env_seed. Every run of a (landscape, experiment) cell shares this sequence.
std::vector<EnvironmentState> environment_trajectory(const ExperimentSpec& spec, Landscape id,
                                                     std::size_t dimension, const Bounds& bounds,
                                                     int periods, std::uint64_t env_seed);

struct BestKnownEntry {
    Position position;
    double objective = 0.0;
    /// Signed constraint value a.x - b at the position; ties the entry to its environment.
    double constraint = 0.0;
};

/// Reference optimum per period.
class BestKnownTable {
public:
    void set(int t, BestKnownEntry entry);
    bool contains(int t) const { return entries_.count(t) != 0; }
    /// Throws std::out_of_range when t is missing.
    const BestKnownEntry& at(int t) const;
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::map<int, BestKnownEntry>& entries() const { return entries_; }

    /// `t,f_star,x_1..x_d` with 17 significant digits.
    void write_csv(const std::filesystem::path& path) const;
    static BestKnownTable read_csv(const std::filesystem::path& path);

private:
    std::map<int, BestKnownEntry> entries_;
};

std::pair<Position, double> best_known(const BestKnownTable& table, int t);

/// Exact minimizer of the sphere over box and halfspace: x_i = clamp(o_i - lambda a_i),
/// with lambda >= 0 found by bisection so the constraint is met.
BestKnownEntry sphere_exact_optimum(const EnvironmentState& env, const Bounds& bounds);

BestKnownTable analytic_sphere_best_known(std::span<const EnvironmentState> trajectory,
                                          const Bounds& bounds);

struct OracleConfig {
    int restarts = 4;
    long budget_per_time = 100000;
    int np = 20;
    double cr = 0.3;
    double f_low = 0.2;
    double f_high = 0.8;
    std::uint64_t seed = 1;
};

/// Per period, independent DE restarts on the frozen environment; keeps the
/// feasibility-best point seen. Each restart's evaluation sequence does not
/// depend on the budget, so a larger budget can only improve an entry.
BestKnownTable generate_best_known(std::span<const EnvironmentState> trajectory, Landscape id,
                                   const Bounds& bounds, const OracleConfig& config);

}  // namespace dynde
