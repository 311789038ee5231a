#include <stdexcept>

#include "dynde/engine.hpp"
#include "dynde/problems.hpp"

namespace dynde {

namespace {

// Keeps the feasibility-best point of every evaluation it performs.
class RecordingEvaluator final : public Evaluator {
public:
    RecordingEvaluator(const EnvironmentState& env, Landscape id) : env_(env), id_(id) {}

    Evaluation evaluate(std::span<const double> x) override {
        ++count_;
        const Evaluation e = dynde::evaluate(env_, id_, x);
        if (!best_eval_ || strictly_better(e, *best_eval_)) {
            best_eval_ = e;
            best_.assign(x.begin(), x.end());
        }
        return e;
    }

    long count() const { return count_; }
    const std::optional<Evaluation>& best_eval() const { return best_eval_; }
    const Position& best() const { return best_; }

private:
    const EnvironmentState& env_;
    Landscape id_;
    long count_ = 0;
    std::optional<Evaluation> best_eval_;
    Position best_;
};

}  // namespace

BestKnownTable generate_best_known(std::span<const EnvironmentState> trajectory, Landscape id,
                                   const Bounds& bounds, const OracleConfig& config) {
    if (config.restarts < 1) throw std::invalid_argument("oracle: restarts must be >= 1");
    if (config.budget_per_time < config.restarts) {
        throw std::invalid_argument("oracle: budget_per_time must cover every restart");
    }
    DEParams de{config.np, config.cr, config.f_low, config.f_high};
    de.validate();
    const long per_restart = config.budget_per_time / config.restarts;

    BestKnownTable table;
    for (const auto& env : trajectory) {
        RecordingEvaluator evaluator(env, id);
        for (int r = 0; r < config.restarts; ++r) {
            RngStream rng(mix_seed(mix_seed(config.seed, static_cast<std::uint64_t>(env.time_index)),
                                   static_cast<std::uint64_t>(r)),
                          StreamId::Oracle);
            const long start = evaluator.count();
            Population pop = initial_population(static_cast<std::size_t>(de.np), env.offset.size(),
                                                bounds, evaluator, rng);
            const HyperState idle;
            while (evaluator.count() - start < per_restart) {
                pop = de_generation(std::move(pop), de, evaluator, NoDiversity{}, idle, rng, bounds,
                                    env.time_index);
            }
        }
        const Position best = evaluator.best();
        table.set(env.time_index,
                  BestKnownEntry{best, evaluator.best_eval()->objective, constraint_value(env, best)});
    }
    return table;
}

}  // namespace dynde
