#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dynde/harness.hpp"

namespace fs = std::filesystem;
using namespace dynde;

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct Overrides {
    std::string config;
    std::string seed;
    std::string clock;
    std::string taus;
    std::string methods;
};

SuiteConfig build_config(const Overrides& o) {
    SuiteConfig c = o.config.empty() ? parse_config("{}") : load_config(o.config);
    if (!o.seed.empty()) {
        try {
            std::size_t used = 0;
            c.master_seed = std::stoull(o.seed, &used);
            if (used != o.seed.size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw ConfigError("--seed: expected a non-negative integer");
        }
    }
    if (!o.clock.empty()) {
        if (o.clock == "virtual") {
            c.clock_mode = ClockMode::Virtual;
        } else if (o.clock == "wall") {
            c.clock_mode = ClockMode::WallClock;
        } else {
            throw ConfigError("--clock: expected 'virtual' or 'wall'");
        }
    }
    if (!o.taus.empty()) {
        c.taus.clear();
        for (const auto& t : split_list(o.taus)) {
            char* end = nullptr;
            const double v = std::strtod(t.c_str(), &end);
            if (end == t.c_str() || *end != '\0') throw ConfigError("--tau: '" + t + "' is not a number");
            c.taus.push_back(v);
        }
    }
    if (!o.methods.empty()) c.methods = split_list(o.methods);
    c.validate();
    return c;
}

void print_ranks(const RankTable& ranks) {
    std::printf("%-10s %14s %14s\n", "method", "mean_rank_mof", "mean_rank_arr");
    for (const auto& name : all_method_names()) {
        auto it = ranks.mof.mean_rank.find(name);
        if (it == ranks.mof.mean_rank.end()) continue;
        std::printf("%-10s %14.3f %14.3f\n", name.c_str(), it->second, ranks.arr.mean_rank.at(name));
    }
    for (const auto& cell : ranks.mof.incomplete_cells) {
        std::fprintf(stderr, "warning: cell %s is incomplete and was not ranked\n", cell.c_str());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic constrained DE experiments"};
    app.require_subcommand(1);

    Overrides run_opts;
    std::string run_out = "results";
    bool quiet = false;
    auto* run = app.add_subcommand("run", "Run the experiment grid");
    run->add_option("--config", run_opts.config, "JSON configuration file")->check(CLI::ExistingFile);
    run->add_option("--out", run_out, "Output directory");
    run->add_option("--seed", run_opts.seed, "Master seed");
    run->add_option("--clock", run_opts.clock, "virtual or wall");
    run->add_option("--tau", run_opts.taus, "Comma separated tau list");
    run->add_option("--methods", run_opts.methods, "Comma separated method list");
    run->add_flag("--quiet", quiet, "Suppress progress output");

    Overrides bk_opts;
    std::string bk_out = "results";
    auto* bk = app.add_subcommand("best-known", "Generate best-known tables");
    bk->add_option("--config", bk_opts.config, "JSON configuration file")->check(CLI::ExistingFile);
    bk->add_option("--out", bk_out, "Output directory");
    bk->add_option("--seed", bk_opts.seed, "Master seed");
    bk->add_flag("--quiet", quiet, "Suppress progress output");

    std::string metrics_dir = "results";
    std::string metrics_config;
    auto* met = app.add_subcommand("metrics", "Recompute metrics.csv from stored traces");
    met->add_option("--out", metrics_dir, "Results directory");
    met->add_option("--config", metrics_config, "JSON configuration file")->check(CLI::ExistingFile);

    std::string rank_dir = "results";
    auto* rank = app.add_subcommand("rank", "Rank methods from metrics.csv");
    rank->add_option("--out", rank_dir, "Results directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*run) {
            const SuiteConfig config = build_config(run_opts);
            const SuiteResult result = run_suite(config, run_out, quiet ? nullptr : &std::cerr);
            std::size_t failed = 0;
            for (const auto& r : result.records) failed += r.ok() ? 0 : 1;
            if (!quiet) print_ranks(rank_methods(read_metrics_csv(fs::path(run_out) / "metrics.csv")));
            if (failed) {
                std::fprintf(stderr, "%zu of %zu runs failed; see failures.csv\n", failed, result.records.size());
                return 2;
            }
        } else if (*bk) {
            const SuiteConfig config = build_config(bk_opts);
            write_best_known_tables(config, bk_out, quiet ? nullptr : &std::cerr);
        } else if (*met) {
            SuccessThreshold success;
            if (!metrics_config.empty()) success = load_config(metrics_config).success;
            const auto records = recompute_metrics(metrics_dir, success);
            write_metrics_csv(fs::path(metrics_dir) / "metrics.csv", records);
            std::printf("%zu runs\n", records.size());
        } else if (*rank) {
            const RankTable ranks = rank_methods(read_metrics_csv(fs::path(rank_dir) / "metrics.csv"));
            write_ranks_csv(fs::path(rank_dir) / "ranks.csv", ranks);
            print_ranks(ranks);
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
