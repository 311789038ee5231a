#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "dynde/predictor.hpp"

using namespace dynde;

namespace {

Evaluation at_time(int t, double f, double v = 0.0) { return Evaluation{f, v, t}; }

// Fills periods 0..periods-1 with k entries each; entry r of period t is (t + r / 10).
TimeBestStore ladder(int k, int periods) {
    TimeBestStore store(k);
    for (int t = 0; t < periods; ++t) {
        for (int r = 0; r < k; ++r) store.offer(t, Position{t + r / 10.0}, at_time(t, r));
    }
    return store;
}

std::vector<TrainingPair> random_pairs(std::size_t d, int n, RngStream& rng) {
    std::vector<TrainingPair> pairs(static_cast<std::size_t>(n));
    for (auto& p : pairs) {
        for (int h = 0; h < 5; ++h) p.inputs.push_back(random_position(d, Bounds{-1.0, 1.0}, rng));
        p.target = random_position(d, Bounds{-1.0, 1.0}, rng);
    }
    return pairs;
}

// Single-path reference for the hand-computed forward example.
double scalar_forward(double w1, double b1, double w2, double b2, double x) {
    return w2 * std::max(0.0, w1 * x + b1) + b2;
}

}  // namespace

TEST_CASE("time-best store keeps the k best distinct positions") {
    TimeBestStore store(3);
    RngStream rng(1, 1);
    std::vector<double> values;
    for (int i = 0; i < 20; ++i) {
        const double f = rng.uniform(0.0, 10.0);
        values.push_back(f);
        store.offer(4, Position{f}, at_time(4, f));
    }
    std::sort(values.begin(), values.end());
    const auto& slot = store.at(4);
    REQUIRE(slot.size() == 3);
    for (int r = 0; r < 3; ++r) CHECK(slot[static_cast<std::size_t>(r)].eval.objective == values[static_cast<std::size_t>(r)]);

    store.offer(5, Position{1.0}, at_time(5, 1.0));
    store.offer(5, Position{1.0}, at_time(5, 1.0));
    store.offer(5, Position{2.0}, at_time(5, 0.5, 0.1));
    const auto& five = store.at(5);
    REQUIRE(five.size() == 2);
    CHECK(five[0].position == Position{1.0});  // feasible first
    CHECK(five[1].position == Position{2.0});
    CHECK_THROWS_AS(store.at(6), std::out_of_range);
}

TEST_CASE("store record and boundedness") {
    TimeBestStore store(3);
    RngStream rng(2, 1);
    for (int t = 0; t < 50; ++t) {
        std::vector<Individual> cands;
        for (int i = 0; i < 20; ++i) {
            const Position p = random_position(2, Bounds{}, rng);
            cands.push_back(Individual{p, at_time(t, p[0] * p[0])});
        }
        store.record(t, cands);
        CHECK(store.total_entries() == static_cast<std::size_t>(3 * (t + 1)));
    }
    CHECK(store.periods() == 50);
}

TEST_CASE("sample construction") {
    RngStream rng(3, 1);
    SUBCASE("k=3 history=5 draws 32 distinct of 243") {
        const TimeBestStore store = ladder(3, 6);
        const auto pairs = build_samples(store, 5, 32, rng);
        CHECK(pairs.size() == 32);
        std::set<std::vector<Position>> distinct;
        for (const auto& p : pairs) {
            distinct.insert(p.inputs);
            CHECK(p.inputs.size() == 5);
            CHECK(p.target == store.at(5).front().position);
            for (int h = 0; h < 5; ++h) CHECK(std::floor(p.inputs[static_cast<std::size_t>(h)][0]) == h);
        }
        CHECK(distinct.size() == 32);
        CHECK(build_samples(store, 5, 1000, rng).size() == 243);
    }
    SUBCASE("k=1 yields one pair per window") {
        const TimeBestStore store = ladder(1, 9);
        CHECK(build_samples(store, 5, 32, rng).size() == 4);
    }
    SUBCASE("insufficient history yields nothing") {
        CHECK(build_samples(ladder(3, 5), 5, 32, rng).empty());
        TimeBestStore holes(2);
        for (int t : {0, 1, 2, 4, 5, 6}) holes.offer(t, Position{double(t)}, at_time(t, 0));
        CHECK(build_samples(holes, 3, 8, rng).empty());
    }
    SUBCASE("target range") {
        const TimeBestStore store = ladder(1, 12);
        const auto pairs = build_samples(store, 5, 32, rng, 7, 9);
        REQUIRE(pairs.size() == 3);
        CHECK(pairs.front().target == Position{7.0});
        CHECK(pairs.back().target == Position{9.0});
    }
}

TEST_CASE("sampling without replacement is uniform over the full product") {
    // k=2, history=2: four combinations. Drawing 3 of them, each combination
    // should be left out a quarter of the time.
    const TimeBestStore store = ladder(2, 3);
    RngStream rng(4, 1);
    std::map<std::vector<Position>, int> counts;
    const int reps = 40000;
    for (int i = 0; i < reps; ++i) {
        const auto pairs = build_samples(store, 2, 3, rng);
        REQUIRE(pairs.size() == 3);
        std::set<std::vector<Position>> distinct;
        for (const auto& p : pairs) distinct.insert(p.inputs);
        CHECK(distinct.size() == 3);
        for (const auto& x : distinct) ++counts[x];
    }
    CHECK(counts.size() == 4);
    for (const auto& [combo, n] : counts) CHECK(std::abs(n - 0.75 * reps) < 0.02 * reps);

    // Full draw returns the whole product exactly.
    const auto all = build_samples(store, 2, 4, rng);
    std::set<std::vector<Position>> enumerated;
    for (const auto& p : all) enumerated.insert(p.inputs);
    std::set<std::vector<Position>> expected;
    for (double a : {0.0, 0.1}) {
        for (double b : {1.0, 1.1}) expected.insert({Position{a}, Position{b}});
    }
    CHECK(enumerated == expected);
}

TEST_CASE("forward pass") {
    RngStream rng(5, 1);
    SUBCASE("zero network outputs b2") {
        Network net(3, 5);
        net.b2()[0] = 1.5;
        net.b2()[1] = -2.0;
        net.b2()[2] = 0.25;
        const auto pairs = random_pairs(3, 1, rng);
        CHECK(net.forward(pairs[0].inputs) == Position{1.5, -2.0, 0.25});
    }
    SUBCASE("ReLU kill") {
        Network net = Network::random(3, 5, rng);
        for (auto& w : net.w1()) w = 0.0;
        for (auto& b : net.b1()) b = -1.0;
        for (auto& b : net.b2()) b = 0.75;
        const auto pairs = random_pairs(3, 1, rng);
        CHECK(net.forward(pairs[0].inputs) == Position{0.75, 0.75, 0.75});
    }
    SUBCASE("single path") {
        Network net(1, 5);
        net.w1()[0] = 1.0;
        net.w2()[0] = 1.0;
        const std::vector<Position> x{{2.0}, {7.0}, {-3.0}, {1.0}, {4.0}};
        CHECK(net.forward(x)[0] == 2.0);
        CHECK(net.forward(x)[0] == scalar_forward(1.0, 0.0, 1.0, 0.0, 2.0));
        net.b1()[0] = 0.5;
        net.w2()[0] = -3.0;
        net.b2()[0] = 0.25;
        CHECK(net.forward(x)[0] == scalar_forward(1.0, 0.5, -3.0, 0.25, 2.0));
    }
    SUBCASE("order of the history matters") {
        const Network net = Network::random(4, 5, rng);
        const auto pairs = random_pairs(4, 1, rng);
        std::vector<Position> reversed(pairs[0].inputs.rbegin(), pairs[0].inputs.rend());
        CHECK(net.forward(pairs[0].inputs) != net.forward(reversed));
    }
}

TEST_CASE("analytic gradient matches finite differences") {
    RngStream rng(6, 1);
    double worst = 0.0;
    for (int n = 0; n < 30; ++n) {
        const std::size_t d = 1 + rng.index(5);
        Network net = Network::random(d, 5, rng);
        for (auto& b : net.b1()) b = rng.uniform(-0.2, 0.2);
        const auto pairs = random_pairs(d, 1 + static_cast<int>(rng.index(5)), rng);
        const auto grad = net.gradient(pairs);
        auto params = net.parameters();
        REQUIRE(grad.size() == params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double keep = params[i];
            params[i] = keep + 1e-5;
            const double up = net.loss(pairs);
            params[i] = keep - 1e-5;
            const double down = net.loss(pairs);
            params[i] = keep;
            const double fd = (up - down) / 2e-5;
            worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6}));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("training") {
    RngStream rng(7, 1);
    SUBCASE("targets already matched: zero loss, weights unchanged") {
        Network net = Network::random(3, 5, rng);
        for (auto& w : net.w2()) w = 0.0;
        for (auto& b : net.b2()) b = 0.3;
        auto pairs = random_pairs(3, 6, rng);
        for (auto& p : pairs) p.target = Position(3, 0.3);
        const std::vector<double> before(net.parameters().begin(), net.parameters().end());
        const auto losses = net.train(pairs, 3, 4, 0.01, rng);
        for (double l : losses) CHECK(l == 0.0);
        CHECK(std::equal(before.begin(), before.end(), net.parameters().begin()));
    }
    SUBCASE("memorizes a single pair") {
        std::vector<double> finals;
        for (std::uint64_t seed = 1; seed <= 50; ++seed) {
            RngStream r(seed, 1);
            Network net = Network::random(3, 5, r);
            const auto pairs = random_pairs(3, 1, r);
            const double start = net.loss(pairs);
            const auto losses = net.train(pairs, 200, 4, 0.01, r);
            CHECK(losses.size() == 200);
            finals.push_back(net.loss(pairs));
            CHECK(finals.back() < start);
        }
        const auto passing = std::count_if(finals.begin(), finals.end(), [](double l) { return l < 1e-3; });
        std::nth_element(finals.begin(), finals.begin() + 25, finals.end());
        CHECK(finals[25] < 1e-3);
        CHECK(passing >= 40);
    }
    SUBCASE("loss is nonincreasing over the first epochs on a linear trend") {
        int monotone = 0;
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            RngStream r(seed, 8);
            Network net = Network::random(3, 5, r);
            std::vector<TrainingPair> pairs;
            for (int t = 5; t < 40; ++t) {
                TrainingPair p;
                for (int h = t - 5; h < t; ++h) p.inputs.push_back(Position(3, -0.9 + 0.04 * h));
                p.target = Position(3, -0.9 + 0.04 * t);
                pairs.push_back(p);
            }
            const auto losses = net.train(pairs, 4, 4, 0.01, r);
            monotone += std::is_sorted(losses.rbegin(), losses.rend()) ? 1 : 0;
        }
        CHECK(monotone >= 9);
    }
}

TEST_CASE("weight snapshot round trip") {
    RngStream rng(9, 1);
    const Network net = Network::random(4, 5, rng);
    const auto path = std::filesystem::temp_directory_path() / "dynde_net.txt";
    net.write_snapshot(path);
    const Network back = Network::read_snapshot(path);
    CHECK(back.dimension() == 4);
    CHECK(back.history() == 5);
    CHECK(std::equal(net.parameters().begin(), net.parameters().end(), back.parameters().begin()));
    std::filesystem::remove(path);
}

TEST_CASE("noisy neighbours") {
    RngStream rng(10, 1);
    const Bounds box;
    const Position base{0.5, -1.0, 2.0};
    const auto same = noisy_neighbors(base, 5, 0.0, box, rng);
    REQUIRE(same.size() == 5);
    for (const auto& p : same) CHECK(p == base);

    const auto noisy = noisy_neighbors(base, 5, 0.01, box, rng);
    REQUIRE(noisy.size() == 5);
    CHECK(noisy[0] == base);
    for (std::size_t i = 1; i < 5; ++i) CHECK(noisy[i] != base);

    const auto outside = noisy_neighbors(Position{9.0, -12.0, 0.0}, 5, 0.05, box, rng);
    for (const auto& p : outside) {
        for (double c : p) {
            CHECK(c >= -5.0);
            CHECK(c <= 5.0);
        }
    }
}

TEST_CASE("predictor lifecycle") {
    PredictorConfig cfg;
    Predictor predictor(2, Bounds{}, cfg, 3);
    CHECK_FALSE(predictor.train());
    CHECK_FALSE(predictor.predict_neighbors(3));

    CHECK(predictor.to_unit(Position{-5.0, 5.0}) == Position{-1.0, 1.0});
    CHECK(predictor.from_unit(Position{0.0, 0.5}) == Position{0.0, 2.5});

    RngStream rng(11, 1);
    for (int t = 0; t < 6; ++t) {
        for (int i = 0; i < 10; ++i) {
            const Position p = random_position(2, Bounds{}, rng);
            predictor.observe(p, at_time(t, p[0] * p[0] + p[1] * p[1]));
        }
    }
    // One complete window (targets 5) so far: 32 samples >= min_batch.
    CHECK(predictor.collect(5) == 0);
    CHECK(predictor.collect(6) == 32);
    CHECK(predictor.collect(6) == 0);
    CHECK(predictor.ready());
    const auto losses = predictor.train();
    REQUIRE(losses);
    CHECK(losses->size() == 4);
    CHECK(predictor.trained());
    const auto out = predictor.predict_neighbors(6);
    REQUIRE(out);
    CHECK(out->size() == 5);
    CHECK_FALSE(predictor.predict_neighbors(9));
}

TEST_CASE("not ready below the minimum batch") {
    PredictorConfig cfg;
    cfg.max_new_per_time = 8;
    Predictor predictor(2, Bounds{}, cfg, 3);
    for (int t = 0; t < 7; ++t) predictor.observe(Position{0.1 * t, 0.0}, at_time(t, 0.0));
    predictor.collect(7);
    CHECK(predictor.sample_count() == 2);
    CHECK_FALSE(predictor.ready());
    CHECK_FALSE(predictor.train());
}

TEST_CASE("predictor configuration validation") {
    PredictorConfig cfg;
    cfg.k = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = PredictorConfig{};
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
