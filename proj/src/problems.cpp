#include "dynde/problems.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dynde {

std::string to_string(Landscape id) {
    switch (id) {
        case Landscape::Sphere: return "sphere";
        case Landscape::Rosenbrock: return "rosenbrock";
        case Landscape::Rastrigin: return "rastrigin";
    }
    return "unknown";
}

std::string to_string(Experiment id) {
    switch (id) {
        case Experiment::Exp1: return "exp1";
        case Experiment::Exp2: return "exp2";
        case Experiment::Exp3: return "exp3";
        case Experiment::Exp4: return "exp4";
    }
    return "unknown";
}

Landscape parse_landscape(const std::string& name) {
    if (name == "sphere") return Landscape::Sphere;
    if (name == "rosenbrock") return Landscape::Rosenbrock;
    if (name == "rastrigin") return Landscape::Rastrigin;
    throw std::invalid_argument("unknown function '" + name + "'");
}

Experiment parse_experiment(const std::string& name) {
    if (name == "exp1") return Experiment::Exp1;
    if (name == "exp2") return Experiment::Exp2;
    if (name == "exp3") return Experiment::Exp3;
    if (name == "exp4") return Experiment::Exp4;
    throw std::invalid_argument("unknown experiment '" + name + "'");
}

void ExperimentSpec::validate() const {
    if (!(lk < uk)) throw std::invalid_argument("experiment: lk must be < uk");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("experiment: noise_sigma must be >= 0");
    if (!(p_low < p_high)) throw std::invalid_argument("experiment: p_range low must be < high");
    if (b0 && !std::isfinite(*b0)) throw std::invalid_argument("experiment: b0 must be finite");
}

double eval_base(Landscape id, std::span<const double> z) {
    switch (id) {
        case Landscape::Sphere: {
            double s = 0.0;
            for (double v : z) s += v * v;
            return s;
        }
        case Landscape::Rosenbrock: {
            double s = 0.0;
            for (std::size_t i = 0; i + 1 < z.size(); ++i) {
                const double a = z[i + 1] - z[i] * z[i];
                const double b = 1.0 - z[i];
                s += 100.0 * a * a + b * b;
            }
            return s;
        }
        case Landscape::Rastrigin: {
            double s = 10.0 * static_cast<double>(z.size());
            for (double v : z) s += v * v - 10.0 * std::cos(2.0 * std::numbers::pi * v);
            return s;
        }
    }
    return 0.0;
}

Position canonical_optimum(Landscape id, std::size_t dimension) {
    return Position(dimension, id == Landscape::Rosenbrock ? 1.0 : 0.0);
}

Evaluation evaluate(const EnvironmentState& env, Landscape id, std::span<const double> x) {
    const std::size_t d = x.size();
    // Reused per thread to avoid an allocation per evaluation.
    thread_local std::vector<double> z;
    z.resize(d);
    double lhs = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        z[i] = x[i] - env.offset[i];
        lhs += env.a[i] * x[i];
    }
    const double g = lhs - env.b;
    return Evaluation{eval_base(id, z), aggregate_violation(std::span<const double>(&g, 1)),
                      env.time_index};
}

double constraint_value(const EnvironmentState& env, std::span<const double> x) {
    double lhs = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) lhs += env.a[i] * x[i];
    return lhs - env.b;
}

EnvironmentState initial_environment(const ExperimentSpec& spec, Landscape id,
                                     std::size_t dimension, const Bounds& bounds) {
    spec.validate();
    EnvironmentState env;
    env.time_index = 0;
    env.offset.assign(dimension, 0.0);
    env.a = spec.a.empty() ? std::vector<double>(dimension, 1.0) : spec.a;
    if (env.a.size() != dimension) {
        throw std::invalid_argument("experiment: constraint coefficient count must equal dimension");
    }
    if (spec.b0) {
        env.b = *spec.b0;
    } else if (spec.experiment == Experiment::Exp1 || spec.experiment == Experiment::Exp2) {
        // Feasible but close to active at the initial optimum.
        const Position opt = canonical_optimum(id, dimension);
        env.b = std::inner_product(env.a.begin(), env.a.end(), opt.begin(), 0.0) + 2.0;
    } else {
        // Never active anywhere inside the box.
        const double reach = std::max(std::abs(bounds.lower), std::abs(bounds.upper));
        double s = 0.0;
        for (double ai : env.a) s += std::abs(ai) * reach;
        env.b = s + 2.0;
    }
    return env;
}

namespace {

// sin(pi t / 2) evaluated exactly for integer t.
double quarter_turn_sine(int t) {
    switch (((t % 4) + 4) % 4) {
        case 1: return 1.0;
        case 3: return -1.0;
        default: return 0.0;
    }
}

}  // namespace

EnvironmentState advance_environment(const EnvironmentState& env, const ExperimentSpec& spec,
                                     RngStream& rng) {
    EnvironmentState next = env;
    const int t = env.time_index;
    switch (spec.experiment) {
        case Experiment::Exp1:
            next.b = env.b + rng.uniform(spec.lk, spec.uk);
            break;
        case Experiment::Exp2:
            next.b = spec.p * std::sin(env.b) + rng.normal(0.0, spec.noise_sigma);
            break;
        case Experiment::Exp3: {
            const double step = 0.1 * static_cast<double>(t);
            for (double& o : next.offset) o += step;
            break;
        }
        case Experiment::Exp4: {
            next.amplitude = rng.uniform(spec.p_low, spec.p_high);
            const double step = next.amplitude * quarter_turn_sine(t);
            for (double& o : next.offset) o += step;
            break;
        }
    }
    next.time_index = t + 1;
    return next;
}

std::vector<EnvironmentState> environment_trajectory(const ExperimentSpec& spec, Landscape id,
                                                     std::size_t dimension, const Bounds& bounds,
                                                     int periods, std::uint64_t env_seed) {
    if (periods < 1) throw std::invalid_argument("trajectory needs at least one period");
    RngStream rng(env_seed, StreamId::Environment);
    std::vector<EnvironmentState> states;
    states.reserve(static_cast<std::size_t>(periods));
    states.push_back(initial_environment(spec, id, dimension, bounds));
    for (int t = 1; t < periods; ++t) {
        states.push_back(advance_environment(states.back(), spec, rng));
    }
    return states;
}

void BestKnownTable::set(int t, BestKnownEntry entry) {
    entries_[t] = std::move(entry);
}

const BestKnownEntry& BestKnownTable::at(int t) const {
    auto it = entries_.find(t);
    if (it == entries_.end()) {
        throw std::out_of_range("best-known table has no entry for time index " + std::to_string(t));
    }
    return it->second;
}

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void BestKnownTable::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const std::size_t d = entries_.empty() ? 0 : entries_.begin()->second.position.size();
    out << "t,f_star,g";
    for (std::size_t i = 1; i <= d; ++i) out << ",x_" << i;
    out << '\n';
    for (const auto& [t, e] : entries_) {
        out << t << ',' << format_double(e.objective) << ',' << format_double(e.constraint);
        for (double x : e.position) out << ',' << format_double(x);
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

BestKnownTable BestKnownTable::read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("t,f_star,g", 0) != 0) {
        throw std::runtime_error(path.string() + ": missing header 't,f_star,g,...'");
    }
    const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    BestKnownTable table;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != columns) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": wrong column count");
        }
        BestKnownEntry e;
        const int t = std::stoi(cells[0]);
        e.objective = std::strtod(cells[1].c_str(), nullptr);
        e.constraint = std::strtod(cells[2].c_str(), nullptr);
        for (std::size_t i = 3; i < cells.size(); ++i) {
            e.position.push_back(std::strtod(cells[i].c_str(), nullptr));
        }
        table.set(t, std::move(e));
    }
    return table;
}

std::pair<Position, double> best_known(const BestKnownTable& table, int t) {
    const auto& e = table.at(t);
    return {e.position, e.objective};
}

BestKnownEntry sphere_exact_optimum(const EnvironmentState& env, const Bounds& bounds) {
    const std::size_t d = env.offset.size();
    auto project = [&](double lambda) {
        Position x(d);
        for (std::size_t i = 0; i < d; ++i) {
            x[i] = std::clamp(env.offset[i] - lambda * env.a[i], bounds.lower, bounds.upper);
        }
        return x;
    };
    auto lhs = [&](const Position& x) {
        return std::inner_product(env.a.begin(), env.a.end(), x.begin(), 0.0);
    };

    Position x = project(0.0);
    if (lhs(x) > env.b) {
        double lo = 0.0;
        double hi = 1.0;
        for (int i = 0; i < 200 && lhs(project(hi)) > env.b; ++i) hi *= 2.0;
        for (int i = 0; i < 300; ++i) {
            const double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) break;
            if (lhs(project(mid)) > env.b) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // The upper end of the bracket is on the feasible side.
        x = project(hi);
    }
    const Evaluation e = evaluate(env, Landscape::Sphere, x);
    const double g = constraint_value(env, x);
    return BestKnownEntry{std::move(x), e.objective, g};
}

BestKnownTable analytic_sphere_best_known(std::span<const EnvironmentState> trajectory,
                                          const Bounds& bounds) {
    BestKnownTable table;
    for (const auto& env : trajectory) {
        table.set(env.time_index, sphere_exact_optimum(env, bounds));
    }
    return table;
}

}  // namespace dynde
