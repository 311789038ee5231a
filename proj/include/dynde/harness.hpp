#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dynde/engine.hpp"
#include "dynde/metrics.hpp"
#include "dynde/problems.hpp"

namespace dynde {

/// Invalid configuration document; the message names the offending key.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct DiversityDefaults {
    int crowding_n = 5;
    int replacement_rate_nonn = 7;
    int replacement_rate_nn = 2;
    double hyper_f_low = 0.6;
    double hyper_f_high = 0.8;
    double hyper_cr = 0.7;
    /// Hyper-mutation lasts round(factor * tau) generations.
    double hyper_duration_factor = 6.0;
};

struct SuiteConfig {
    std::vector<Landscape> functions{Landscape::Sphere, Landscape::Rosenbrock, Landscape::Rastrigin};
    std::vector<ExperimentSpec> experiments;  // filled with exp1..exp4 by default_suite_config()
    std::vector<double> taus{1.0, 5.0, 10.0, 20.0};
    std::vector<std::string> methods;         // all ten by default
    int runs = 20;
    int num_changes = 100;
    std::size_t dimension = 30;
    Bounds bounds;
    DEParams de;
    DiversityDefaults diversity;
    PredictorConfig predictor;
    ClockMode clock_mode = ClockMode::Virtual;
    ClockCosts costs;
    std::uint64_t master_seed = 1;
    int workers = 0;  // 0 = hardware concurrency
    OracleConfig oracle;
    bool analytic_sphere = true;
    SuccessThreshold success;

    void validate() const;
};

SuiteConfig default_suite_config();

/// Parses a JSON document. Missing keys take their defaults; unknown keys
/// and out-of-range values raise ConfigError.
SuiteConfig parse_config(const std::string& json_text);
SuiteConfig load_config(const std::filesystem::path& path);

/// noNN_No, NN_No, noNN_CwN, NN_CwN, noNN_RI, NN_RI, noNN_Rst, NN_Rst, noNN_HMu, NN_HMu
const std::vector<std::string>& all_method_names();

struct MethodSpec {
    std::string name;
    ReactionStrategy reaction;
    DiversityMechanism diversity;
};

MethodSpec make_method(const std::string& name, const SuiteConfig& config, double tau);

/// Builds the single-run configuration for one grid point.
RunConfig make_run_config(const SuiteConfig& config, Landscape function,
                          const ExperimentSpec& experiment, double tau, const MethodSpec& method,
                          std::uint64_t seed);

/// Shared by every method of a (function, experiment, tau) cell: methods are
/// compared on common seeds.
std::uint64_t run_seed(std::uint64_t master_seed, Landscape function, Experiment experiment,
                       double tau, int run);
/// One environment sequence per (function, experiment).
std::uint64_t environment_seed(std::uint64_t master_seed, Landscape function, Experiment experiment);

std::string format_tau(double tau);
std::string best_known_cell(Landscape function, Experiment experiment);
std::string trace_cell(Landscape function, Experiment experiment, double tau, const std::string& method);

std::vector<EnvironmentState> suite_trajectory(const SuiteConfig& config, Landscape function,
                                               const ExperimentSpec& experiment);

/// Reference table for one (function, experiment); analytic for the sphere
/// when enabled, DE restarts otherwise.
BestKnownTable compute_best_known(const SuiteConfig& config, Landscape function,
                                  const ExperimentSpec& experiment);

/// Throws std::runtime_error when the table does not match the environment
/// sequence the configuration produces.
void check_best_known(const BestKnownTable& table, const SuiteConfig& config, Landscape function,
                      const ExperimentSpec& experiment);

struct RunRecord {
    std::string method;
    Landscape function = Landscape::Sphere;
    Experiment experiment = Experiment::Exp1;
    double tau = 1.0;
    int run = 0;
    std::uint64_t seed = 0;
    MetricReport metrics;
    long evaluations = 0;
    double elapsed_s = 0.0;
    double nn_seconds = 0.0;
    double nn_fraction = 0.0;
    std::filesystem::path trace_path;
    std::vector<std::string> warnings;
    std::string error;  // non-empty when the run failed

    bool ok() const { return error.empty(); }
};

struct SuiteResult {
    std::vector<RunRecord> records;
    std::vector<std::string> generated_best_known;
    std::vector<std::string> loaded_best_known;
};

/// Writes best_known/<function>_<experiment>.csv for every configured cell.
std::vector<std::string> write_best_known_tables(const SuiteConfig& config,
                                                 const std::filesystem::path& out_dir,
                                                 std::ostream* log = nullptr);

/// Runs the whole grid. Output layout under out_dir:
///   best_known/<function>_<experiment>.csv   (reused when present)
///   traces/<function>_<experiment>_tau<tau>_<method>/<seed>.csv
///   metrics.csv, timing.csv, ranks.csv, failures.csv (only on failures)
SuiteResult run_suite(const SuiteConfig& config, const std::filesystem::path& out_dir,
                      std::ostream* log = nullptr);

/// Rebuilds metric records from persisted traces.
std::vector<RunRecord> recompute_metrics(const std::filesystem::path& out_dir,
                                         const SuccessThreshold& success = {});

void write_metrics_csv(const std::filesystem::path& path, const std::vector<RunRecord>& records);

struct MetricRow {
    std::string method;
    std::string function;
    std::string experiment;
    double tau = 0.0;
    std::uint64_t run_seed = 0;
    double mof = 0.0;
    double bebc = 0.0;
    double arr = 0.0;
    double sr = 0.0;
};

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

struct RankTable {
    RankResult mof;
    RankResult arr;
};

/// Ranks methods per (function, experiment, tau) cell on the mean over runs.
RankTable rank_methods(const std::vector<MetricRow>& rows);
void write_ranks_csv(const std::filesystem::path& path, const RankTable& ranks);

}  // namespace dynde
