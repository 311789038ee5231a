#include <cmath>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "dynde/problems.hpp"

using namespace dynde;

namespace {

EnvironmentState plain_env(std::size_t d, double b) {
    EnvironmentState env;
    env.offset.assign(d, 0.0);
    env.a.assign(d, 1.0);
    env.b = b;
    return env;
}

// Independent scalar reference for the Rastrigin formula.
double rastrigin_reference(const std::vector<double>& z) {
    long double total = 10.0L * static_cast<long double>(z.size());
    for (double v : z) total += static_cast<long double>(v) * v - 10.0L * std::cos(2.0L * std::numbers::pi_v<long double> * v);
    return static_cast<double>(total);
}

ExperimentSpec spec_of(Experiment e) {
    ExperimentSpec s;
    s.experiment = e;
    return s;
}

}  // namespace

TEST_CASE("base landscapes") {
    CHECK(eval_base(Landscape::Sphere, Position(30, 0.0)) == 0.0);
    CHECK(eval_base(Landscape::Rosenbrock, Position(30, 1.0)) == 0.0);
    Position z(30, 0.0);
    z[0] = 0.5;
    CHECK(eval_base(Landscape::Rastrigin, z) == doctest::Approx(20.25).epsilon(1e-14));
    CHECK(eval_base(Landscape::Rastrigin, z) == doctest::Approx(rastrigin_reference(z)).epsilon(1e-14));
    CHECK(eval_base(Landscape::Rosenbrock, Position{0.0, 0.0}) == 1.0);
    CHECK(eval_base(Landscape::Sphere, Position{1.0, -2.0}) == 5.0);
}

TEST_CASE("rastrigin matches the reference on random points") {
    RngStream rng(1, 1);
    for (int i = 0; i < 200; ++i) {
        const Position z = random_position(1 + rng.index(30), Bounds{}, rng);
        CHECK(eval_base(Landscape::Rastrigin, z) == doctest::Approx(rastrigin_reference(z)).epsilon(1e-12));
    }
}

TEST_CASE("rastrigin equals sphere on integer points") {
    RngStream rng(2, 1);
    for (int i = 0; i < 300; ++i) {
        Position z(1 + rng.index(12));
        for (double& v : z) v = static_cast<double>(static_cast<int>(rng.index(11)) - 5);
        CHECK(eval_base(Landscape::Rastrigin, z) == eval_base(Landscape::Sphere, z));
    }
}

TEST_CASE("canonical optima") {
    CHECK(canonical_optimum(Landscape::Sphere, 3) == Position(3, 0.0));
    CHECK(canonical_optimum(Landscape::Rastrigin, 3) == Position(3, 0.0));
    CHECK(canonical_optimum(Landscape::Rosenbrock, 3) == Position(3, 1.0));
}

TEST_CASE("evaluate") {
    const Evaluation e1 = evaluate(plain_env(30, 1000.0), Landscape::Sphere, Position(30, 0.0));
    CHECK(e1.objective == 0.0);
    CHECK(e1.violation == 0.0);

    const Evaluation e2 = evaluate(plain_env(30, -10.0), Landscape::Sphere, Position(30, 0.0));
    CHECK(e2.objective == 0.0);
    CHECK(e2.violation == 10.0);
    CHECK_FALSE(e2.feasible());

    EnvironmentState env = plain_env(30, 1000.0);
    env.offset[0] = 1.0;
    env.time_index = 4;
    Position x(30, 0.0);
    x[0] = 1.0;
    const Evaluation e3 = evaluate(env, Landscape::Sphere, x);
    CHECK(e3.objective == 0.0);
    CHECK(e3.violation == 0.0);
    CHECK(e3.time_index == 4);
}

TEST_CASE("translation identity") {
    RngStream rng(3, 1);
    for (Landscape id : {Landscape::Sphere, Landscape::Rosenbrock, Landscape::Rastrigin}) {
        for (int i = 0; i < 200; ++i) {
            const std::size_t d = 2 + rng.index(8);
            EnvironmentState env = plain_env(d, 1e9);
            env.offset = random_position(d, Bounds{-2.0, 2.0}, rng);
            const Position x = random_position(d, Bounds{}, rng);
            Position z(d);
            for (std::size_t j = 0; j < d; ++j) z[j] = x[j] - env.offset[j];
            CHECK(evaluate(env, id, x).objective == eval_base(id, z));
        }
    }
}

TEST_CASE("violation is the positive part of the linear constraint") {
    RngStream rng(4, 1);
    for (int i = 0; i < 200; ++i) {
        EnvironmentState env = plain_env(5, rng.uniform(-3.0, 3.0));
        for (double& a : env.a) a = rng.uniform(-1.0, 1.0);
        const Position x = random_position(5, Bounds{}, rng);
        const double g = std::inner_product(env.a.begin(), env.a.end(), x.begin(), 0.0) - env.b;
        CHECK(evaluate(env, Landscape::Sphere, x).violation == doctest::Approx(std::max(0.0, g)).epsilon(1e-12));
    }
}

TEST_CASE("experiment rules") {
    RngStream rng(5, StreamId::Environment);
    SUBCASE("exp3") {
        EnvironmentState env = plain_env(4, 100.0);
        const auto spec = spec_of(Experiment::Exp3);
        env = advance_environment(env, spec, rng);
        CHECK(env.offset == Position(4, 0.0));
        CHECK(env.time_index == 1);
        env = advance_environment(env, spec, rng);
        CHECK(env.offset == Position(4, 0.1));
        CHECK(env.time_index == 2);
    }
    SUBCASE("exp4") {
        EnvironmentState env = plain_env(3, 100.0);
        env.time_index = 1;
        ExperimentSpec spec = spec_of(Experiment::Exp4);
        spec.p_low = 2.0;
        spec.p_high = std::nextafter(2.0, 3.0);
        env = advance_environment(env, spec, rng);
        for (double o : env.offset) CHECK(o == doctest::Approx(2.0).epsilon(1e-14));
        CHECK(env.time_index == 2);
        // sin(pi) = 0: the offset holds at even times.
        const Position before = env.offset;
        env = advance_environment(env, spec, rng);
        CHECK(env.offset == before);
    }
    SUBCASE("exp1") {
        EnvironmentState env = plain_env(3, 5.0);
        ExperimentSpec spec = spec_of(Experiment::Exp1);
        spec.lk = 0.7;
        spec.uk = std::nextafter(0.7, 1.0);
        env = advance_environment(env, spec, rng);
        CHECK(env.b == doctest::Approx(5.7).epsilon(1e-14));
    }
    SUBCASE("exp2 uses p sin(b) plus zero-mean noise") {
        ExperimentSpec spec = spec_of(Experiment::Exp2);
        RngStream copy = rng;
        const EnvironmentState env = advance_environment(plain_env(3, 1.3), spec, rng);
        CHECK(env.b == spec.p * std::sin(1.3) + copy.normal(0.0, 0.5));
        spec.noise_sigma = 0.0;
        CHECK(advance_environment(plain_env(3, 1.3), spec, rng).b == std::sin(1.3));
    }
}

TEST_CASE("exp3 consumes no random draws") {
    RngStream used(6, StreamId::Environment), fresh(6, StreamId::Environment);
    EnvironmentState env = plain_env(3, 100.0);
    for (int i = 0; i < 20; ++i) env = advance_environment(env, spec_of(Experiment::Exp3), used);
    CHECK(used.next_u64() == fresh.next_u64());
    const auto a = environment_trajectory(spec_of(Experiment::Exp3), Landscape::Sphere, 3, Bounds{}, 15, 1);
    const auto b = environment_trajectory(spec_of(Experiment::Exp3), Landscape::Sphere, 3, Bounds{}, 15, 99);
    for (std::size_t t = 0; t < a.size(); ++t) CHECK(a[t].offset == b[t].offset);
}

TEST_CASE("each experiment changes only its own field") {
    for (Experiment e : {Experiment::Exp1, Experiment::Exp2, Experiment::Exp3, Experiment::Exp4}) {
        const auto traj = environment_trajectory(spec_of(e), Landscape::Rastrigin, 4, Bounds{}, 30, 17);
        REQUIRE(traj.size() == 30);
        bool b_moved = false, offset_moved = false;
        for (std::size_t t = 1; t < traj.size(); ++t) {
            CHECK(traj[t].time_index == static_cast<int>(t));
            CHECK(traj[t].a == traj[0].a);
            CHECK(std::isfinite(traj[t].b));
            b_moved = b_moved || traj[t].b != traj[t - 1].b;
            offset_moved = offset_moved || traj[t].offset != traj[t - 1].offset;
        }
        const bool constraint_rule = e == Experiment::Exp1 || e == Experiment::Exp2;
        CHECK(b_moved == constraint_rule);
        CHECK(offset_moved == !constraint_rule);
    }
}

TEST_CASE("default constraint boundary") {
    const Bounds box;
    const auto e1 = initial_environment(spec_of(Experiment::Exp1), Landscape::Rosenbrock, 5, box);
    CHECK(e1.b == 7.0);  // sum of the optimum (all ones) plus 2
    const auto e3 = initial_environment(spec_of(Experiment::Exp3), Landscape::Sphere, 5, box);
    RngStream rng(7, 1);
    for (int i = 0; i < 100; ++i) {
        CHECK(evaluate(e3, Landscape::Sphere, random_position(5, box, rng)).violation == 0.0);
    }
    ExperimentSpec custom = spec_of(Experiment::Exp3);
    custom.b0 = -1.5;
    CHECK(initial_environment(custom, Landscape::Sphere, 5, box).b == -1.5);
}

TEST_CASE("experiment settings validation") {
    ExperimentSpec s;
    s.lk = 1.0;
    s.uk = 1.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = ExperimentSpec{};
    s.noise_sigma = -0.1;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = ExperimentSpec{};
    s.p_low = 3.0;
    s.p_high = 0.5;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("names round trip") {
    for (Landscape id : {Landscape::Sphere, Landscape::Rosenbrock, Landscape::Rastrigin}) {
        CHECK(parse_landscape(to_string(id)) == id);
    }
    for (Experiment e : {Experiment::Exp1, Experiment::Exp2, Experiment::Exp3, Experiment::Exp4}) {
        CHECK(parse_experiment(to_string(e)) == e);
    }
    CHECK_THROWS_AS(parse_landscape("ackley"), std::invalid_argument);
}

TEST_CASE("sphere optimum under an active halfspace") {
    const std::size_t d = 6;
    EnvironmentState env = plain_env(d, -2.0);
    env.offset = {0.5, -0.3, 1.0, 0.2, 0.0, 0.4};
    const double sum = std::accumulate(env.offset.begin(), env.offset.end(), 0.0);
    const double shift = (sum - env.b) / static_cast<double>(d);
    const BestKnownEntry got = sphere_exact_optimum(env, Bounds{});
    CHECK(got.objective == doctest::Approx((sum - env.b) * (sum - env.b) / d).epsilon(1e-12));
    for (std::size_t i = 0; i < d; ++i) CHECK(got.position[i] == doctest::Approx(env.offset[i] - shift).epsilon(1e-12));
    CHECK(evaluate(env, Landscape::Sphere, got.position).violation <= 1e-9);
    CHECK(got.constraint == constraint_value(env, got.position));

    env.b = 100.0;
    const BestKnownEntry inactive = sphere_exact_optimum(env, Bounds{});
    CHECK(inactive.position == env.offset);
    CHECK(inactive.objective == 0.0);
}

TEST_CASE("best-known lookup and csv round trip") {
    BestKnownTable table;
    table.set(0, {{0.1, 1.0 / 3.0}, 2.0 / 7.0});
    table.set(1, {{-4.999999999999, 1e-300}, 123456.789, -0.1});
    CHECK(best_known(table, 1).second == 123456.789);
    CHECK_THROWS_AS(best_known(table, 5), std::out_of_range);

    const auto path = std::filesystem::temp_directory_path() / "dynde_bk_roundtrip.csv";
    table.write_csv(path);
    const BestKnownTable back = BestKnownTable::read_csv(path);
    REQUIRE(back.size() == 2);
    for (int t : {0, 1}) {
        CHECK(back.at(t).objective == table.at(t).objective);
        CHECK(back.at(t).position == table.at(t).position);
        CHECK(back.at(t).constraint == table.at(t).constraint);
    }
    std::filesystem::remove(path);
}

TEST_CASE("oracle matches the analytic sphere optimum") {
    ExperimentSpec spec = spec_of(Experiment::Exp1);
    spec.b0 = -3.0;
    const auto traj = environment_trajectory(spec, Landscape::Sphere, 5, Bounds{}, 4, 11);
    OracleConfig oc;
    oc.budget_per_time = 100000;
    const BestKnownTable oracle = generate_best_known(traj, Landscape::Sphere, Bounds{}, oc);
    const BestKnownTable exact = analytic_sphere_best_known(traj, Bounds{});
    for (const auto& env : traj) {
        const double f = exact.at(env.time_index).objective;
        if (f > 0.0) {
            CHECK(std::abs(oracle.at(env.time_index).objective - f) / f < 1e-4);
        } else {
            CHECK(oracle.at(env.time_index).objective < 1e-8);
        }
        CHECK(evaluate(env, Landscape::Sphere, oracle.at(env.time_index).position).violation <= 1e-9);
    }
}

TEST_CASE("oracle recovers the zero optimum on sphere exp3") {
    // The exp3 optimum leaves the box after t=11, so only the periods before that are checked.
    const auto traj = environment_trajectory(spec_of(Experiment::Exp3), Landscape::Sphere, 5, Bounds{}, 10, 3);
    OracleConfig oc;
    oc.budget_per_time = 20000;
    const BestKnownTable table = generate_best_known(traj, Landscape::Sphere, Bounds{}, oc);
    for (const auto& [t, entry] : table.entries()) CHECK(entry.objective <= 1e-4);
}

TEST_CASE("oracle never worsens with a larger budget") {
    const auto traj = environment_trajectory(spec_of(Experiment::Exp3), Landscape::Rosenbrock, 5, Bounds{}, 6, 5);
    OracleConfig small;
    small.budget_per_time = 4000;
    OracleConfig large = small;
    large.budget_per_time = 8000;
    const BestKnownTable a = generate_best_known(traj, Landscape::Rosenbrock, Bounds{}, small);
    const BestKnownTable b = generate_best_known(traj, Landscape::Rosenbrock, Bounds{}, large);
    for (const auto& env : traj) {
        CHECK(b.at(env.time_index).objective <= a.at(env.time_index).objective);
        CHECK(evaluate(env, Landscape::Rosenbrock, b.at(env.time_index).position).violation <= 1e-9);
    }
}

TEST_CASE("oracle tables are feasible under active constraints") {
    ExperimentSpec spec = spec_of(Experiment::Exp2);
    const auto traj = environment_trajectory(spec, Landscape::Rastrigin, 4, Bounds{}, 5, 8);
    OracleConfig oc;
    oc.budget_per_time = 4000;
    const BestKnownTable table = generate_best_known(traj, Landscape::Rastrigin, Bounds{}, oc);
    for (const auto& env : traj) {
        CHECK(evaluate(env, Landscape::Rastrigin, table.at(env.time_index).position).violation <= 1e-9);
    }
}
