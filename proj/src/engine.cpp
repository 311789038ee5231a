#include "dynde/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dynde {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

void DEParams::validate() const {
    if (np < 4) throw std::invalid_argument("de.np must be >= 4 (rand/1 needs three distinct donors)");
    if (!(cr >= 0.0 && cr <= 1.0)) throw std::invalid_argument("de.cr must lie in [0, 1]");
    if (!(f_low > 0.0 && f_low <= f_high && f_high <= 2.0)) {
        throw std::invalid_argument("de.f range must satisfy 0 < low <= high <= 2");
    }
}

std::string diversity_name(const DiversityMechanism& m) {
    return std::visit(overloaded{
                          [](const NoDiversity&) { return std::string("No"); },
                          [](const Crowding&) { return std::string("CwN"); },
                          [](const RandomImmigrants&) { return std::string("RI"); },
                          [](const Restart&) { return std::string("Rst"); },
                          [](const HyperMutation&) { return std::string("HMu"); },
                      },
                      m);
}

std::string reaction_name(const ReactionStrategy& r) {
    return std::holds_alternative<NNReaction>(r) ? "NN" : "noNN";
}

void HyperState::activate(const HyperMutation& h) {
    generations_remaining = h.duration_generations;
    f_low = h.f_low;
    f_high = h.f_high;
    cr = h.cr;
}

EffectiveParams hyper_params_current(const DEParams& params, const HyperState& hyper) {
    if (hyper.active()) return {hyper.f_low, hyper.f_high, hyper.cr};
    return {params.f_low, params.f_high, params.cr};
}

// ---------------------------------------------------------------------------
// Clock and evaluators

Clock::Clock(ClockMode mode, double tau, ClockCosts costs)
    : mode_(mode), tau_(tau), costs_(costs), start_(std::chrono::steady_clock::now()) {
    if (!(tau > 0.0)) throw std::invalid_argument("clock: tau must be > 0");
    if (mode == ClockMode::Virtual && !(costs.eval > 0.0)) {
        throw std::invalid_argument("clock: virtual evaluation cost must be > 0");
    }
    if (costs.nn_train < 0.0 || costs.nn_predict < 0.0) {
        throw std::invalid_argument("clock: costs must be >= 0");
    }
}

double Clock::elapsed() const {
    if (mode_ == ClockMode::WallClock) {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }
    return static_cast<double>(evaluations_) * costs_.eval + nn_seconds();
}

double Clock::nn_seconds() const {
    if (mode_ == ClockMode::WallClock) return measured_nn_;
    return static_cast<double>(trainings_) * costs_.nn_train +
           static_cast<double>(predictions_) * costs_.nn_predict;
}

int DynamicEvaluator::current_time_index() const {
    const int last = static_cast<int>(trajectory_.size()) - 1;
    return std::min(clock_.time_index(), last);
}

Evaluation DynamicEvaluator::evaluate(std::span<const double> x) {
    const int t = current_time_index();
    const Evaluation e = dynde::evaluate(trajectory_[static_cast<std::size_t>(t)], landscape_, x);
    clock_.charge_evaluations(1);
    last_time_ = t;
    if (observer_) observer_(x, e);
    return e;
}

// ---------------------------------------------------------------------------
// Variation and selection

Position mutant_rand_1(const Population& pop, std::size_t i, double f, RngStream& rng,
                       const Bounds& bounds) {
    const std::size_t np = pop.size();
    if (np < 4) throw std::invalid_argument("mutant_rand_1: population must hold at least 4 members");
    std::size_t r0, r1, r2;
    do r0 = rng.index(np); while (r0 == i);
    do r1 = rng.index(np); while (r1 == i || r1 == r0);
    do r2 = rng.index(np); while (r2 == i || r2 == r0 || r2 == r1);

    const auto& x0 = pop[r0].position;
    const auto& x1 = pop[r1].position;
    const auto& x2 = pop[r2].position;
    Position v(x0.size());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = x0[j] + f * (x1[j] - x2[j]);
    return clamp_to_bounds(std::move(v), bounds);
}

Position crossover_binomial(std::span<const double> target, std::span<const double> mutant,
                            double cr, RngStream& rng) {
    if (target.size() != mutant.size()) {
        throw std::invalid_argument("crossover_binomial: dimension mismatch");
    }
    const std::size_t d = target.size();
    const std::size_t j_rand = rng.index(d);
    Position trial(target.begin(), target.end());
    for (std::size_t j = 0; j < d; ++j) {
        if (rng.uniform01() < cr || j == j_rand) trial[j] = mutant[j];
    }
    return trial;
}

std::optional<std::size_t> crowding_replacement(const Population& pop, const Position& trial,
                                                const Evaluation& trial_eval, int n) {
    std::vector<std::pair<double, std::size_t>> by_distance;
    by_distance.reserve(pop.size());
    for (std::size_t j = 0; j < pop.size(); ++j) {
        by_distance.emplace_back(squared_distance(pop[j].position, trial), j);
    }
    const std::size_t take = std::min(pop.size(), static_cast<std::size_t>(std::max(n, 0)));
    std::partial_sort(by_distance.begin(), by_distance.begin() + static_cast<std::ptrdiff_t>(take),
                      by_distance.end());
    for (std::size_t q = 0; q < take; ++q) {
        const std::size_t j = by_distance[q].second;
        if (strictly_better(trial_eval, *pop[j].eval)) return j;
    }
    return std::nullopt;
}

Population de_generation(Population pop, const DEParams& params, Evaluator& evaluator,
                         const DiversityMechanism& diversity, const HyperState& hyper,
                         RngStream& rng, const Bounds& bounds, int known_time) {
    if (pop.size() < 4) throw std::invalid_argument("de_generation: population must hold at least 4 members");
    for (std::size_t i = 0; i < pop.size(); ++i) {
        if (!pop[i].eval) throw std::logic_error("de_generation: member " + std::to_string(i) + " is unevaluated");
        if (pop[i].eval->time_index < known_time) {
            throw std::logic_error("de_generation: member " + std::to_string(i) +
                                   " carries a stale evaluation from time " +
                                   std::to_string(pop[i].eval->time_index));
        }
    }

    const EffectiveParams eff = hyper_params_current(params, hyper);
    const auto* crowding = std::get_if<Crowding>(&diversity);
    Population next = pop;
    for (std::size_t i = 0; i < pop.size(); ++i) {
        const double f = rng.uniform(eff.f_low, eff.f_high);
        const Position mutant = mutant_rand_1(pop, i, f, rng, bounds);
        Position trial = crossover_binomial(pop[i].position, mutant, eff.cr, rng);
        const Evaluation te = evaluator.evaluate(trial);
        if (crowding) {
            if (auto j = crowding_replacement(next, trial, te, crowding->n)) {
                next[*j] = Individual{std::move(trial), te};
            }
        } else if (strictly_better(te, *pop[i].eval)) {
            next[i] = Individual{std::move(trial), te};
        }
    }
    return next;
}

bool detect_change(const Population& pop, Evaluator& evaluator) {
    if (pop.empty()) return false;
    const std::size_t sentinels[2] = {0, pop.size() / 2};
    bool changed = false;
    for (std::size_t s : sentinels) {
        const auto& member = pop[s];
        if (!member.eval) throw std::logic_error("detect_change: sentinel has no cached evaluation");
        const Evaluation now = evaluator.evaluate(member.position);
        if (now.objective != member.eval->objective || now.violation != member.eval->violation) {
            changed = true;
        }
    }
    return changed;
}

namespace {

// Indices ordered worst first under the feasibility rules. Unevaluated
// members come first; ties keep index order.
std::vector<std::size_t> worst_first(const Population& pop, const std::vector<bool>& exclude) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < pop.size(); ++i) {
        if (!exclude[i]) idx.push_back(i);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const auto& ea = pop[a].eval;
        const auto& eb = pop[b].eval;
        if (!ea || !eb) return !ea && eb;
        return strictly_better(*eb, *ea);
    });
    return idx;
}

}  // namespace

Population react(Population pop, const ReactionStrategy& strategy,
                 const DiversityMechanism& diversity, Evaluator& evaluator,
                 const std::optional<std::vector<Position>>& predicted, HyperState& hyper,
                 RngStream& rng, const Bounds& bounds) {
    const std::size_t np = pop.size();
    const std::size_t d = np ? pop.front().position.size() : 0;
    std::vector<bool> inserted(np, false);

    auto immigrate = [&](int rate) {
        const auto order = worst_first(pop, inserted);
        const std::size_t n = std::min(order.size(), static_cast<std::size_t>(std::max(rate, 0)));
        for (std::size_t q = 0; q < n; ++q) {
            const std::size_t i = order[q];
            pop[i] = Individual{random_position(d, bounds, rng), std::nullopt};
            inserted[i] = true;
        }
    };

    std::visit(overloaded{
                   [](const NoDiversity&) {},
                   [](const Crowding&) {},
                   [&](const RandomImmigrants& ri) { immigrate(ri.rate); },
                   [&](const Restart&) { immigrate(static_cast<int>(np)); },
                   [&](const HyperMutation& h) {
                       immigrate(h.rate);
                       hyper.activate(h);
                   },
               },
               diversity);

    if (const auto* nn = std::get_if<NNReaction>(&strategy); nn && predicted) {
        auto order = worst_first(pop, inserted);
        // With every member freshly inserted (restart), overwrite from the back.
        for (std::size_t i = np; i-- > 0;) {
            if (inserted[i]) order.push_back(i);
        }
        const std::size_t n = std::min({order.size(), predicted->size(),
                                        static_cast<std::size_t>(std::max(nn->n_p, 0))});
        for (std::size_t q = 0; q < n; ++q) {
            pop[order[q]] = Individual{clamp_to_bounds((*predicted)[q], bounds), std::nullopt};
        }
    }

    for (auto& member : pop) member.eval = evaluator.evaluate(member.position);
    return pop;
}

Population initial_population(std::size_t np, std::size_t dimension, const Bounds& bounds,
                              Evaluator& evaluator, RngStream& rng) {
    Population pop;
    pop.reserve(np);
    for (std::size_t i = 0; i < np; ++i) {
        Position p = random_position(dimension, bounds, rng);
        const Evaluation e = evaluator.evaluate(p);
        pop.push_back(Individual{std::move(p), e});
    }
    return pop;
}

std::size_t best_index(const Population& pop) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pop.size(); ++i) {
        if (!pop[i].eval) continue;
        if (!pop[best].eval || strictly_better(*pop[i].eval, *pop[best].eval)) best = i;
    }
    return best;
}

// ---------------------------------------------------------------------------
// Traces

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void write_trace_csv(const std::filesystem::path& path, const RunTrace& trace) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "t,generation,elapsed_s,evals_cum,best_f,best_violation,f_star,error\n";
    for (const auto& r : trace.rows) {
        out << r.t << ',' << r.generation << ',' << fmt17(r.elapsed_s) << ',' << r.evals_cum << ','
            << fmt17(r.best_f) << ',' << fmt17(r.best_violation) << ',' << fmt17(r.f_star) << ','
            << fmt17(r.error) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

RunTrace read_trace_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "t,generation,elapsed_s,evals_cum,best_f,best_violation,f_star,error") {
        throw std::runtime_error(path.string() + ": unexpected trace header");
    }
    RunTrace trace;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> c;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) c.push_back(cell);
        if (c.size() != 8) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected 8 columns");
        }
        TraceRow r;
        r.t = std::stoi(c[0]);
        r.generation = std::stoi(c[1]);
        r.elapsed_s = std::strtod(c[2].c_str(), nullptr);
        r.evals_cum = std::stol(c[3]);
        r.best_f = std::strtod(c[4].c_str(), nullptr);
        r.best_violation = std::strtod(c[5].c_str(), nullptr);
        r.f_star = std::strtod(c[6].c_str(), nullptr);
        r.error = std::strtod(c[7].c_str(), nullptr);
        trace.rows.push_back(r);
    }
    if (!trace.rows.empty()) {
        trace.elapsed_s = trace.rows.back().elapsed_s;
        trace.evaluations = trace.rows.back().evals_cum;
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Dynamic run

void RunConfig::validate() const {
    de.validate();
    experiment.validate();
    predictor.validate();
    if (dimension < 1) throw std::invalid_argument("dimension must be >= 1");
    if (!(bounds.lower < bounds.upper)) throw std::invalid_argument("bounds: lower must be < upper");
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
    if (num_changes < 1) throw std::invalid_argument("num_changes must be >= 1");
    std::visit(overloaded{
                   [](const NoDiversity&) {},
                   [&](const Crowding& c) {
                       if (c.n < 1 || c.n > de.np) throw std::invalid_argument("crowding N must lie in [1, NP]");
                   },
                   [&](const RandomImmigrants& ri) {
                       if (ri.rate < 0 || ri.rate > de.np) throw std::invalid_argument("replacement rate must lie in [0, NP]");
                   },
                   [](const Restart&) {},
                   [&](const HyperMutation& h) {
                       if (h.rate < 0 || h.rate > de.np) throw std::invalid_argument("replacement rate must lie in [0, NP]");
                       if (h.duration_generations < 0) throw std::invalid_argument("hyper-mutation duration must be >= 0");
                       if (!(h.cr >= 0.0 && h.cr <= 1.0)) throw std::invalid_argument("hyper-mutation cr must lie in [0, 1]");
                       if (!(h.f_low > 0.0 && h.f_low <= h.f_high && h.f_high <= 2.0)) {
                           throw std::invalid_argument("hyper-mutation f range must satisfy 0 < low <= high <= 2");
                       }
                   },
               },
               diversity);
    if (const auto* nn = std::get_if<NNReaction>(&reaction)) {
        if (nn->n_p < 1 || nn->n_p >= de.np) throw std::invalid_argument("n_p must lie in [1, NP)");
    }
}

namespace {

// Feasibility-best evaluation seen in the current period.
struct PeriodBest {
    int t = -1;
    Evaluation best;

    void offer(const Evaluation& e) {
        if (e.time_index != t) {
            t = e.time_index;
            best = e;
        } else if (strictly_better(e, best)) {
            best = e;
        }
    }
};

}  // namespace

RunTrace run_dynamic(const RunConfig& config) {
    config.validate();
    const auto trajectory = environment_trajectory(config.experiment, config.landscape,
                                                   config.dimension, config.bounds,
                                                   config.num_changes + 1, config.env_seed);
    Clock clock(config.clock_mode, config.tau, config.costs);
    DynamicEvaluator evaluator(trajectory, config.landscape, clock);
    RngStream de_rng(config.seed, StreamId::Evolution);
    RngStream diversity_rng(config.seed, StreamId::Diversity);

    const auto* nn = std::get_if<NNReaction>(&config.reaction);
    std::optional<Predictor> predictor;
    if (nn) {
        PredictorConfig pc = config.predictor;
        pc.n_p = nn->n_p;
        predictor.emplace(config.dimension, config.bounds, pc, config.seed);
    }

    PeriodBest period_best;
    evaluator.set_observer([&](std::span<const double> x, const Evaluation& e) {
        period_best.offer(e);
        if (predictor) predictor->observe(Position(x.begin(), x.end()), e);
    });

    RunTrace trace;
    Population pop = initial_population(static_cast<std::size_t>(config.de.np), config.dimension,
                                        config.bounds, evaluator, de_rng);
    int known_time = pop.front().eval->time_index;
    HyperState hyper;
    int row_t = -1;
    int generation = 0;

    while (clock.time_index() < config.num_changes) {
        if (detect_change(pop, evaluator)) {
            ++trace.changes_detected;
            known_time = evaluator.current_time_index();
            std::optional<std::vector<Position>> predicted;
            if (predictor) {
                predictor->collect(known_time);
                if (predictor->ready()) {
                    clock.nn_section(NnPhase::Train, [&] { predictor->train(); });
                    ++trace.trainings;
                }
                if (predictor->trained()) {
                    predicted = clock.nn_section(NnPhase::Predict,
                                                 [&] { return predictor->predict_neighbors(known_time); });
                }
            }
            pop = react(std::move(pop), config.reaction, config.diversity, evaluator, predicted, hyper,
                        diversity_rng, config.bounds);
        }
        pop = de_generation(std::move(pop), config.de, evaluator, config.diversity, hyper, de_rng,
                            config.bounds, known_time);
        hyper.tick();

        const int t = evaluator.last_time_index();
        if (t >= config.num_changes) break;
        if (t != row_t) {
            if (t > row_t + 1) {
                trace.warnings.push_back("periods " + std::to_string(row_t + 1) + ".." +
                                         std::to_string(t - 1) +
                                         " ended before a generation completed; tau is too small");
            }
            row_t = t;
            generation = 0;
        }
        ++generation;

        TraceRow row;
        row.t = t;
        row.generation = generation;
        row.elapsed_s = clock.elapsed();
        row.evals_cum = clock.evaluations();
        row.best_f = period_best.best.objective;
        row.best_violation = period_best.best.violation;
        if (config.best_known) {
            row.f_star = config.best_known->at(t).objective;
            row.error = std::abs(row.f_star - row.best_f);
        } else {
            row.f_star = std::numeric_limits<double>::quiet_NaN();
            row.error = std::numeric_limits<double>::quiet_NaN();
        }
        trace.rows.push_back(row);
    }

    trace.evaluations = clock.evaluations();
    trace.elapsed_s = clock.elapsed();
    trace.nn_seconds = clock.nn_seconds();
    return trace;
}

}  // namespace dynde
