#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dynde/core.hpp"
#include "dynde/predictor.hpp"
#include "dynde/problems.hpp"

namespace dynde {

/// DE/rand/1/bin settings.
struct DEParams {
    int np = 20;
    double cr = 0.3;
    double f_low = 0.2;
    double f_high = 0.8;

    void validate() const;
};

struct NoDiversity {};
/// Offspring competes with its `n` nearest population members.
struct Crowding {
    int n = 5;
};
/// `rate` worst members replaced by random positions on each detected change.
struct RandomImmigrants {
    int rate = 7;
};
/// Whole population replaced by random positions on each detected change.
struct Restart {};
/// Random insertions plus enlarged F and CR for a while after each change.
struct HyperMutation {
    int rate = 7;
    double f_low = 0.6;
    double f_high = 0.8;
    double cr = 0.7;
    int duration_generations = 6;
};

using DiversityMechanism = std::variant<NoDiversity, Crowding, RandomImmigrants, Restart, HyperMutation>;

struct NoNN {};
struct NNReaction {
    int n_p = 5;
};
using ReactionStrategy = std::variant<NoNN, NNReaction>;

std::string diversity_name(const DiversityMechanism& m);
std::string reaction_name(const ReactionStrategy& r);

struct HyperState {
    int generations_remaining = 0;
    double f_low = 0.6;
    double f_high = 0.8;
    double cr = 0.7;

    bool active() const { return generations_remaining > 0; }
    void activate(const HyperMutation& h);
    void tick() {
        if (generations_remaining > 0) --generations_remaining;
    }
};

struct EffectiveParams {
    double f_low;
    double f_high;
    double cr;
};

EffectiveParams hyper_params_current(const DEParams& params, const HyperState& hyper);

/// Anything that can score a position. Implementations decide which
/// environment applies and what the evaluation costs.
class Evaluator {
public:
    virtual ~Evaluator() = default;
    virtual Evaluation evaluate(std::span<const double> x) = 0;
};

/// Evaluates against one frozen environment and counts calls.
class StaticEvaluator final : public Evaluator {
public:
    StaticEvaluator(EnvironmentState env, Landscape landscape)
        : env_(std::move(env)), landscape_(landscape) {}

    Evaluation evaluate(std::span<const double> x) override {
        ++count_;
        return dynde::evaluate(env_, landscape_, x);
    }

    long count() const { return count_; }
    const EnvironmentState& environment() const { return env_; }
    void set_environment(EnvironmentState env) { env_ = std::move(env); }

private:
    EnvironmentState env_;
    Landscape landscape_;
    long count_ = 0;
};

enum class ClockMode { Virtual, WallClock };

/// Seconds charged per operation by the virtual clock.
struct ClockCosts {
    double eval = 4.7e-4;
    double nn_train = 0.11;
    double nn_predict = 0.01;
};

enum class NnPhase { Train, Predict };

/// Budget authority. The current period is floor(elapsed / tau). In virtual
/// mode elapsed time is the exact sum of charged costs; in wall-clock mode it
/// is real time since construction.
class Clock {
public:
    Clock(ClockMode mode, double tau, ClockCosts costs = {});

    ClockMode mode() const { return mode_; }
    double tau() const { return tau_; }
    const ClockCosts& costs() const { return costs_; }

    double elapsed() const;
    int time_index() const { return static_cast<int>(std::floor(elapsed() / tau_)); }

    void charge_evaluations(long n = 1) { evaluations_ += n; }
    long evaluations() const { return evaluations_; }
    long nn_trainings() const { return trainings_; }
    long nn_predictions() const { return predictions_; }
    /// Time attributed to network training and prediction so far.
    double nn_seconds() const;

    /// Runs fn as network work: charged at the configured cost in virtual
    /// mode, measured in wall-clock mode.
    template <class Fn>
    decltype(auto) nn_section(NnPhase phase, Fn&& fn) {
        (phase == NnPhase::Train ? trainings_ : predictions_) += 1;
        if (mode_ == ClockMode::Virtual) return std::forward<Fn>(fn)();
        struct Timer {
            Clock& clock;
            std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
            ~Timer() {
                clock.measured_nn_ +=
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            }
        } timer{*this};
        return std::forward<Fn>(fn)();
    }

private:
    ClockMode mode_;
    double tau_;
    ClockCosts costs_;
    std::chrono::steady_clock::time_point start_;
    long evaluations_ = 0;
    long trainings_ = 0;
    long predictions_ = 0;
    double measured_nn_ = 0.0;
};

/// Evaluates in whatever environment period the clock is currently in and
/// charges the clock for it. Environment changes are silent.
class DynamicEvaluator final : public Evaluator {
public:
    using Observer = std::function<void(std::span<const double>, const Evaluation&)>;

    DynamicEvaluator(std::span<const EnvironmentState> trajectory, Landscape landscape, Clock& clock)
        : trajectory_(trajectory), landscape_(landscape), clock_(clock) {}

    Evaluation evaluate(std::span<const double> x) override;

    void set_observer(Observer observer) { observer_ = std::move(observer); }
    /// Period of the most recent evaluation.
    int last_time_index() const { return last_time_; }
    /// Period the clock is in now, capped at the last available state.
    int current_time_index() const;

private:
    std::span<const EnvironmentState> trajectory_;
    Landscape landscape_;
    Clock& clock_;
    Observer observer_;
    int last_time_ = 0;
};

/// v = x_r0 + F (x_r1 - x_r2) with r0, r1, r2, i pairwise distinct; clamped.
Position mutant_rand_1(const Population& pop, std::size_t i, double f, RngStream& rng,
                       const Bounds& bounds);

/// Binomial crossover; coordinate j_rand always comes from the mutant.
Position crossover_binomial(std::span<const double> target, std::span<const double> mutant,
                            double cr, RngStream& rng);

/// Index of the member that `trial` replaces under crowding, or nullopt when
/// it beats none of its n nearest members.
std::optional<std::size_t> crowding_replacement(const Population& pop, const Position& trial,
                                                const Evaluation& trial_eval, int n);

/// One generation of DE/rand/1/bin. Members evaluated before `known_time`
/// indicate a missed re-evaluation and raise std::logic_error.
Population de_generation(Population pop, const DEParams& params, Evaluator& evaluator,
                         const DiversityMechanism& diversity, const HyperState& hyper,
                         RngStream& rng, const Bounds& bounds, int known_time = 0);

/// Re-evaluates the first and middle members and compares with their cached
/// evaluations exactly.
bool detect_change(const Population& pop, Evaluator& evaluator);

/// Change response, in order: diversity insertion, predicted-neighbour
/// insertion (only when `predicted` holds positions), re-evaluation of every
/// member.
Population react(Population pop, const ReactionStrategy& strategy,
                 const DiversityMechanism& diversity, Evaluator& evaluator,
                 const std::optional<std::vector<Position>>& predicted, HyperState& hyper,
                 RngStream& rng, const Bounds& bounds);

Population initial_population(std::size_t np, std::size_t dimension, const Bounds& bounds,
                              Evaluator& evaluator, RngStream& rng);

/// Index of the feasibility-best evaluated member.
std::size_t best_index(const Population& pop);

struct TraceRow {
    int t = 0;
    int generation = 0;
    double elapsed_s = 0.0;
    long evals_cum = 0;
    double best_f = 0.0;
    double best_violation = 0.0;
    double f_star = 0.0;
    double error = 0.0;
};

struct RunTrace {
    std::vector<TraceRow> rows;
    std::vector<std::string> warnings;
    long evaluations = 0;
    double elapsed_s = 0.0;
    double nn_seconds = 0.0;
    int changes_detected = 0;
    int trainings = 0;

    double nn_fraction() const { return elapsed_s > 0.0 ? nn_seconds / elapsed_s : 0.0; }
};

/// `t,generation,elapsed_s,evals_cum,best_f,best_violation,f_star,error`
void write_trace_csv(const std::filesystem::path& path, const RunTrace& trace);
RunTrace read_trace_csv(const std::filesystem::path& path);

struct RunConfig {
    Landscape landscape = Landscape::Sphere;
    ExperimentSpec experiment;
    std::size_t dimension = 30;
    Bounds bounds;
    DEParams de;
    DiversityMechanism diversity = NoDiversity{};
    ReactionStrategy reaction = NoNN{};
    PredictorConfig predictor;
    ClockMode clock_mode = ClockMode::Virtual;
    double tau = 1.0;
    ClockCosts costs;
    int num_changes = 100;
    std::uint64_t seed = 1;
    std::uint64_t env_seed = 1;
    /// Optional; f_star and error are NaN without it.
    std::shared_ptr<const BestKnownTable> best_known;

    void validate() const;
};

RunTrace run_dynamic(const RunConfig& config);

}  // namespace dynde
