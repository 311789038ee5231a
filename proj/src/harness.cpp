#include "dynde/harness.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace dynde {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

SuiteConfig default_suite_config() {
    SuiteConfig c;
    for (Experiment e : {Experiment::Exp1, Experiment::Exp2, Experiment::Exp3, Experiment::Exp4}) {
        ExperimentSpec spec;
        spec.experiment = e;
        c.experiments.push_back(spec);
    }
    c.methods = all_method_names();
    return c;
}

const std::vector<std::string>& all_method_names() {
    static const std::vector<std::string> names{
        "noNN_No", "NN_No", "noNN_CwN", "NN_CwN", "noNN_RI",
        "NN_RI",   "noNN_Rst", "NN_Rst", "noNN_HMu", "NN_HMu",
    };
    return names;
}

void SuiteConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (functions.empty()) fail("functions: at least one function is required");
    if (experiments.empty()) fail("experiments: at least one experiment is required");
    if (taus.empty()) fail("taus: at least one tau is required");
    for (double t : taus) {
        if (!(t > 0.0) || !std::isfinite(t)) fail("taus: every tau must be a positive number");
    }
    if (methods.empty()) fail("methods: at least one method is required");
    std::set<std::string> seen;
    for (const auto& m : methods) {
        if (std::find(all_method_names().begin(), all_method_names().end(), m) == all_method_names().end()) {
            fail("methods: unknown method '" + m + "'");
        }
        if (!seen.insert(m).second) fail("methods: duplicate method '" + m + "'");
    }
    if (runs < 1) fail("runs must be >= 1");
    if (num_changes < 1) fail("num_changes must be >= 1");
    if (dimension < 1) fail("dimension must be >= 1");
    if (!(bounds.lower < bounds.upper)) fail("bounds: lower must be < upper");
    if (workers < 0) fail("workers must be >= 0");
    try {
        de.validate();
    } catch (const std::invalid_argument& e) {
        fail(e.what());
    }
    try {
        predictor.validate();
    } catch (const std::invalid_argument& e) {
        fail(e.what());
    }
    for (const auto& e : experiments) {
        try {
            e.validate();
        } catch (const std::invalid_argument& err) {
            fail(err.what());
        }
        if (!e.a.empty() && e.a.size() != dimension) fail("experiments: 'a' must have dimension entries");
    }
    const auto& d = diversity;
    if (d.crowding_n < 1 || d.crowding_n > de.np) fail("diversity.crowding_n must lie in [1, de.np]");
    if (d.replacement_rate_nonn < 0 || d.replacement_rate_nonn > de.np) {
        fail("diversity.replacement_rate_nonn must lie in [0, de.np]");
    }
    if (d.replacement_rate_nn < 0 || d.replacement_rate_nn > de.np) {
        fail("diversity.replacement_rate_nn must lie in [0, de.np]");
    }
    if (!(d.hyper_f_low > 0.0 && d.hyper_f_low <= d.hyper_f_high && d.hyper_f_high <= 2.0)) {
        fail("diversity.hyper_f must satisfy 0 < low <= high <= 2");
    }
    if (!(d.hyper_cr >= 0.0 && d.hyper_cr <= 1.0)) fail("diversity.hyper_cr must lie in [0, 1]");
    if (!(d.hyper_duration_factor >= 0.0)) fail("diversity.hyper_duration_factor must be >= 0");
    if (predictor.n_p >= de.np) fail("predictor.n_p must be < de.np");
    if (clock_mode == ClockMode::Virtual && !(costs.eval > 0.0)) fail("clock.cost_eval must be > 0");
    if (costs.nn_train < 0.0) fail("clock.cost_nn_train must be >= 0");
    if (costs.nn_predict < 0.0) fail("clock.cost_nn_predict must be >= 0");
    if (oracle.restarts < 1) fail("best_known.restarts must be >= 1");
    if (oracle.budget_per_time < oracle.restarts) fail("best_known.budget_per_time must be >= restarts");
    try {
        DEParams{oracle.np, oracle.cr, oracle.f_low, oracle.f_high}.validate();
    } catch (const std::invalid_argument& e) {
        fail(std::string("best_known: ") + e.what());
    }
    if (!(success.epsilon > 0.0 && success.epsilon < 1.0)) fail("success.epsilon must lie in (0, 1)");
    if (!(success.epsilon_abs >= 0.0)) fail("success.epsilon_abs must be >= 0");
}

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(where + (where.empty() ? "" : ".") + key + ": unknown key");
    }
}

std::string key_path(const std::string& where, const std::string& key) {
    return where.empty() ? key : where + "." + key;
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!it->is_boolean()) throw ConfigError("");
        } else if constexpr (std::is_integral_v<T>) {
            if (!it->is_number_integer()) throw ConfigError("");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!it->is_number()) throw ConfigError("");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!it->is_string()) throw ConfigError("");
        }
        out = it->get<T>();
    } catch (const std::exception&) {
        throw ConfigError(key_path(where, key) + ": wrong type");
    }
}

void read_range(const json& obj, const char* key, double& low, double& high, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number()) {
        throw ConfigError(key_path(where, key) + ": expected [low, high]");
    }
    low = (*it)[0].get<double>();
    high = (*it)[1].get<double>();
}

ExperimentSpec parse_experiment_entry(const json& j, std::size_t index) {
    const std::string where = "experiments[" + std::to_string(index) + "]";
    ExperimentSpec spec;
    try {
        if (j.is_string()) {
            spec.experiment = parse_experiment(j.get<std::string>());
            return spec;
        }
        check_keys(j, {"type", "lk", "uk", "p", "noise_sigma", "p_range", "b0", "a"}, where);
        if (!j.contains("type") || !j["type"].is_string()) throw ConfigError(where + ".type: required string");
        spec.experiment = parse_experiment(j["type"].get<std::string>());
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where + ": " + e.what());
    }
    read(j, "lk", spec.lk, where);
    read(j, "uk", spec.uk, where);
    read(j, "p", spec.p, where);
    read(j, "noise_sigma", spec.noise_sigma, where);
    read_range(j, "p_range", spec.p_low, spec.p_high, where);
    if (j.contains("b0")) {
        double b0 = 0.0;
        read(j, "b0", b0, where);
        spec.b0 = b0;
    }
    if (j.contains("a")) {
        const auto& a = j["a"];
        if (!a.is_array()) throw ConfigError(where + ".a: expected an array of numbers");
        for (const auto& v : a) {
            if (!v.is_number()) throw ConfigError(where + ".a: expected an array of numbers");
            spec.a.push_back(v.get<double>());
        }
    }
    return spec;
}

}  // namespace

SuiteConfig parse_config(const std::string& json_text) {
    json doc;
    const bool blank = std::all_of(json_text.begin(), json_text.end(), [](unsigned char ch) { return std::isspace(ch); });
    if (!blank) {
        try {
            doc = json::parse(json_text);
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
    } else {
        doc = json::object();
    }
    check_keys(doc,
               {"functions", "experiments", "taus", "methods", "runs", "num_changes", "dimension",
                "bounds", "de", "diversity", "predictor", "clock", "master_seed", "workers",
                "best_known", "success"},
               "");

    SuiteConfig c = default_suite_config();
    if (doc.contains("functions")) {
        const auto& f = doc["functions"];
        if (!f.is_array()) throw ConfigError("functions: expected an array of names");
        c.functions.clear();
        for (const auto& v : f) {
            if (!v.is_string()) throw ConfigError("functions: expected an array of names");
            try {
                c.functions.push_back(parse_landscape(v.get<std::string>()));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("functions: ") + e.what());
            }
        }
    }
    if (doc.contains("experiments")) {
        const auto& e = doc["experiments"];
        if (!e.is_array()) throw ConfigError("experiments: expected an array");
        c.experiments.clear();
        for (std::size_t i = 0; i < e.size(); ++i) c.experiments.push_back(parse_experiment_entry(e[i], i));
    }
    if (doc.contains("taus")) {
        const auto& t = doc["taus"];
        if (!t.is_array()) throw ConfigError("taus: expected an array of numbers");
        c.taus.clear();
        for (const auto& v : t) {
            if (!v.is_number()) throw ConfigError("taus: expected an array of numbers");
            c.taus.push_back(v.get<double>());
        }
    }
    if (doc.contains("methods")) {
        const auto& m = doc["methods"];
        if (!m.is_array()) throw ConfigError("methods: expected an array of names");
        c.methods.clear();
        for (const auto& v : m) {
            if (!v.is_string()) throw ConfigError("methods: expected an array of names");
            c.methods.push_back(v.get<std::string>());
        }
    }
    read(doc, "runs", c.runs, "");
    read(doc, "num_changes", c.num_changes, "");
    if (doc.contains("dimension")) {
        int d = 0;
        read(doc, "dimension", d, "");
        if (d < 1) throw ConfigError("dimension must be >= 1");
        c.dimension = static_cast<std::size_t>(d);
    }
    read_range(doc, "bounds", c.bounds.lower, c.bounds.upper, "");
    if (doc.contains("master_seed")) {
        const auto& s = doc["master_seed"];
        if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) {
            throw ConfigError("master_seed: expected a non-negative integer");
        }
        c.master_seed = s.get<std::uint64_t>();
    }
    read(doc, "workers", c.workers, "");

    if (doc.contains("de")) {
        const auto& j = doc["de"];
        check_keys(j, {"np", "cr", "f"}, "de");
        read(j, "np", c.de.np, "de");
        read(j, "cr", c.de.cr, "de");
        read_range(j, "f", c.de.f_low, c.de.f_high, "de");
    }
    if (doc.contains("diversity")) {
        const auto& j = doc["diversity"];
        check_keys(j,
                   {"crowding_n", "replacement_rate_nonn", "replacement_rate_nn", "hyper_f", "hyper_cr",
                    "hyper_duration_factor"},
                   "diversity");
        read(j, "crowding_n", c.diversity.crowding_n, "diversity");
        read(j, "replacement_rate_nonn", c.diversity.replacement_rate_nonn, "diversity");
        read(j, "replacement_rate_nn", c.diversity.replacement_rate_nn, "diversity");
        read_range(j, "hyper_f", c.diversity.hyper_f_low, c.diversity.hyper_f_high, "diversity");
        read(j, "hyper_cr", c.diversity.hyper_cr, "diversity");
        read(j, "hyper_duration_factor", c.diversity.hyper_duration_factor, "diversity");
    }
    if (doc.contains("predictor")) {
        const auto& j = doc["predictor"];
        check_keys(j,
                   {"k", "history", "epochs", "batch_size", "min_batch", "n_p", "learning_rate",
                    "noise_sigma", "max_new_per_time"},
                   "predictor");
        auto& p = c.predictor;
        read(j, "k", p.k, "predictor");
        read(j, "history", p.history, "predictor");
        read(j, "epochs", p.epochs, "predictor");
        read(j, "batch_size", p.batch_size, "predictor");
        read(j, "min_batch", p.min_batch, "predictor");
        read(j, "n_p", p.n_p, "predictor");
        read(j, "learning_rate", p.learning_rate, "predictor");
        read(j, "noise_sigma", p.noise_sigma, "predictor");
        read(j, "max_new_per_time", p.max_new_per_time, "predictor");
    }
    if (doc.contains("clock")) {
        const auto& j = doc["clock"];
        check_keys(j, {"mode", "cost_eval", "cost_nn_train", "cost_nn_predict"}, "clock");
        std::string mode = "virtual";
        read(j, "mode", mode, "clock");
        if (mode == "virtual") {
            c.clock_mode = ClockMode::Virtual;
        } else if (mode == "wall") {
            c.clock_mode = ClockMode::WallClock;
        } else {
            throw ConfigError("clock.mode: expected 'virtual' or 'wall'");
        }
        read(j, "cost_eval", c.costs.eval, "clock");
        read(j, "cost_nn_train", c.costs.nn_train, "clock");
        read(j, "cost_nn_predict", c.costs.nn_predict, "clock");
    }
    if (doc.contains("best_known")) {
        const auto& j = doc["best_known"];
        check_keys(j, {"restarts", "budget_per_time", "np", "cr", "f", "analytic_sphere", "seed"}, "best_known");
        read(j, "restarts", c.oracle.restarts, "best_known");
        read(j, "budget_per_time", c.oracle.budget_per_time, "best_known");
        read(j, "np", c.oracle.np, "best_known");
        read(j, "cr", c.oracle.cr, "best_known");
        read_range(j, "f", c.oracle.f_low, c.oracle.f_high, "best_known");
        read(j, "analytic_sphere", c.analytic_sphere, "best_known");
        read(j, "seed", c.oracle.seed, "best_known");
    }
    if (doc.contains("success")) {
        const auto& j = doc["success"];
        check_keys(j, {"epsilon", "epsilon_abs"}, "success");
        read(j, "epsilon", c.success.epsilon, "success");
        read(j, "epsilon_abs", c.success.epsilon_abs, "success");
    }
    c.validate();
    return c;
}

SuiteConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Grid helpers

MethodSpec make_method(const std::string& name, const SuiteConfig& config, double tau) {
    const auto sep = name.find('_');
    if (sep == std::string::npos) throw std::invalid_argument("malformed method name '" + name + "'");
    const std::string reaction = name.substr(0, sep);
    const std::string diversity = name.substr(sep + 1);
    MethodSpec m;
    m.name = name;
    bool nn = false;
    if (reaction == "NN") {
        nn = true;
        m.reaction = NNReaction{config.predictor.n_p};
    } else if (reaction == "noNN") {
        m.reaction = NoNN{};
    } else {
        throw std::invalid_argument("unknown reaction in method '" + name + "'");
    }
    const auto& d = config.diversity;
    const int rate = nn ? d.replacement_rate_nn : d.replacement_rate_nonn;
    if (diversity == "No") {
        m.diversity = NoDiversity{};
    } else if (diversity == "CwN") {
        m.diversity = Crowding{d.crowding_n};
    } else if (diversity == "RI") {
        m.diversity = RandomImmigrants{rate};
    } else if (diversity == "Rst") {
        m.diversity = Restart{};
    } else if (diversity == "HMu") {
        m.diversity = HyperMutation{rate, d.hyper_f_low, d.hyper_f_high, d.hyper_cr,
                                    static_cast<int>(std::lround(d.hyper_duration_factor * tau))};
    } else {
        throw std::invalid_argument("unknown diversity mechanism in method '" + name + "'");
    }
    return m;
}

RunConfig make_run_config(const SuiteConfig& config, Landscape function,
                          const ExperimentSpec& experiment, double tau, const MethodSpec& method,
                          std::uint64_t seed) {
    RunConfig rc;
    rc.landscape = function;
    rc.experiment = experiment;
    rc.dimension = config.dimension;
    rc.bounds = config.bounds;
    rc.de = config.de;
    rc.diversity = method.diversity;
    rc.reaction = method.reaction;
    rc.predictor = config.predictor;
    rc.clock_mode = config.clock_mode;
    rc.tau = tau;
    rc.costs = config.costs;
    rc.num_changes = config.num_changes;
    rc.seed = seed;
    rc.env_seed = environment_seed(config.master_seed, function, experiment.experiment);
    return rc;
}

std::uint64_t run_seed(std::uint64_t master_seed, Landscape function, Experiment experiment,
                       double tau, int run) {
    std::uint64_t s = mix_seed(master_seed, 0x5EED0000ULL + static_cast<std::uint64_t>(function) * 16 +
                                                static_cast<std::uint64_t>(experiment));
    s = mix_seed(s, std::bit_cast<std::uint64_t>(tau));
    return mix_seed(s, static_cast<std::uint64_t>(run));
}

std::uint64_t environment_seed(std::uint64_t master_seed, Landscape function, Experiment experiment) {
    return mix_seed(master_seed, 0xE7E70000ULL + static_cast<std::uint64_t>(function) * 16 +
                                     static_cast<std::uint64_t>(experiment));
}

std::string format_tau(double tau) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%g", tau);
    return buf;
}

std::string best_known_cell(Landscape function, Experiment experiment) {
    return to_string(function) + "_" + to_string(experiment);
}

std::string trace_cell(Landscape function, Experiment experiment, double tau, const std::string& method) {
    return best_known_cell(function, experiment) + "_tau" + format_tau(tau) + "_" + method;
}

std::vector<EnvironmentState> suite_trajectory(const SuiteConfig& config, Landscape function,
                                               const ExperimentSpec& experiment) {
    return environment_trajectory(experiment, function, config.dimension, config.bounds,
                                  config.num_changes,
                                  environment_seed(config.master_seed, function, experiment.experiment));
}

BestKnownTable compute_best_known(const SuiteConfig& config, Landscape function,
                                  const ExperimentSpec& experiment) {
    const auto trajectory = suite_trajectory(config, function, experiment);
    if (function == Landscape::Sphere && config.analytic_sphere) {
        return analytic_sphere_best_known(trajectory, config.bounds);
    }
    OracleConfig oracle = config.oracle;
    oracle.seed = mix_seed(config.oracle.seed, environment_seed(config.master_seed, function, experiment.experiment));
    return generate_best_known(trajectory, function, config.bounds, oracle);
}

void check_best_known(const BestKnownTable& table, const SuiteConfig& config, Landscape function,
                      const ExperimentSpec& experiment) {
    const auto trajectory = suite_trajectory(config, function, experiment);
    for (const auto& env : trajectory) {
        if (!table.contains(env.time_index)) {
            throw std::runtime_error("best-known table lacks time index " + std::to_string(env.time_index));
        }
        const auto& entry = table.at(env.time_index);
        if (entry.position.size() != config.dimension) {
            throw std::runtime_error("best-known table has the wrong dimension");
        }
        const Evaluation e = evaluate(env, function, entry.position);
        if (e.objective != entry.objective || constraint_value(env, entry.position) != entry.constraint) {
            throw std::runtime_error("best-known table for " + best_known_cell(function, experiment.experiment) +
                                     " does not match the configured environment at t=" +
                                     std::to_string(env.time_index));
        }
    }
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::size_t method_rank(const std::string& name) {
    const auto& all = all_method_names();
    return static_cast<std::size_t>(std::find(all.begin(), all.end(), name) - all.begin());
}

void sort_records(std::vector<RunRecord>& records) {
    std::stable_sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
        auto key = [](const RunRecord& r) {
            return std::make_tuple(static_cast<int>(r.function), static_cast<int>(r.experiment), r.tau,
                                   method_rank(r.method), r.seed);
        };
        return key(a) < key(b);
    });
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
}

void write_timing_csv(const std::filesystem::path& path, const std::vector<RunRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "method,function,experiment,tau,run_seed,evaluations,elapsed_s,nn_s,nn_fraction\n";
    for (const auto& r : records) {
        if (!r.ok()) continue;
        out << r.method << ',' << to_string(r.function) << ',' << to_string(r.experiment) << ','
            << format_tau(r.tau) << ',' << r.seed << ',' << r.evaluations << ',' << fmt17(r.elapsed_s)
            << ',' << fmt17(r.nn_seconds) << ',' << fmt17(r.nn_fraction) << '\n';
    }
}

void write_failures_csv(const std::filesystem::path& path, const std::vector<RunRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "method,function,experiment,tau,run_seed,error\n";
    for (const auto& r : records) {
        if (r.ok()) continue;
        std::string msg = r.error;
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        out << r.method << ',' << to_string(r.function) << ',' << to_string(r.experiment) << ','
            << format_tau(r.tau) << ',' << r.seed << ',' << msg << '\n';
    }
}

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, const std::vector<RunRecord>& records) {
    std::vector<RunRecord> sorted = records;
    sort_records(sorted);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "method,function,experiment,tau,run_seed,mof,bebc,arr,sr\n";
    for (const auto& r : sorted) {
        if (!r.ok()) continue;
        out << r.method << ',' << to_string(r.function) << ',' << to_string(r.experiment) << ','
            << format_tau(r.tau) << ',' << r.seed << ',' << fmt17(r.metrics.mof) << ','
            << fmt17(r.metrics.bebc) << ',' << fmt17(r.metrics.arr) << ',' << fmt17(r.metrics.sr) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "method,function,experiment,tau,run_seed,mof,bebc,arr,sr") {
        throw std::runtime_error(path.string() + ": unexpected metrics header");
    }
    std::vector<MetricRow> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto c = split_csv(line);
        if (c.size() != 9) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected 9 columns");
        }
        MetricRow r;
        r.method = c[0];
        r.function = c[1];
        r.experiment = c[2];
        r.tau = std::strtod(c[3].c_str(), nullptr);
        r.run_seed = std::stoull(c[4]);
        r.mof = std::strtod(c[5].c_str(), nullptr);
        r.bebc = std::strtod(c[6].c_str(), nullptr);
        r.arr = std::strtod(c[7].c_str(), nullptr);
        r.sr = std::strtod(c[8].c_str(), nullptr);
        rows.push_back(r);
    }
    return rows;
}

RankTable rank_methods(const std::vector<MetricRow>& rows) {
    // Mean over runs per (method, cell).
    std::map<std::string, std::map<std::string, std::pair<double, double>>> sums;
    std::map<std::string, std::map<std::string, int>> counts;
    for (const auto& r : rows) {
        const std::string cell = r.function + "_" + r.experiment + "_tau" + format_tau(r.tau);
        auto& s = sums[r.method][cell];
        s.first += r.mof;
        s.second += r.arr;
        ++counts[r.method][cell];
    }
    std::map<std::string, std::map<std::string, double>> mof_values, arr_values;
    for (const auto& [method, cells] : sums) {
        for (const auto& [cell, s] : cells) {
            const double n = counts[method][cell];
            mof_values[method][cell] = s.first / n;
            arr_values[method][cell] = s.second / n;
        }
    }
    return RankTable{mean_ranks(mof_values, false), mean_ranks(arr_values, true)};
}

void write_ranks_csv(const std::filesystem::path& path, const RankTable& ranks) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "method,mean_rank_mof,mean_rank_arr\n";
    std::vector<std::string> methods;
    for (const auto& [m, v] : ranks.mof.mean_rank) methods.push_back(m);
    std::stable_sort(methods.begin(), methods.end(),
                     [](const std::string& a, const std::string& b) { return method_rank(a) < method_rank(b); });
    for (const auto& m : methods) {
        const auto arr_it = ranks.arr.mean_rank.find(m);
        out << m << ',' << fmt17(ranks.mof.mean_rank.at(m)) << ','
            << fmt17(arr_it == ranks.arr.mean_rank.end() ? 0.0 : arr_it->second) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Suite execution

std::vector<std::string> write_best_known_tables(const SuiteConfig& config,
                                                 const std::filesystem::path& out_dir, std::ostream* log) {
    config.validate();
    const auto dir = out_dir / "best_known";
    std::filesystem::create_directories(dir);
    std::vector<std::string> written;
    for (Landscape f : config.functions) {
        for (const auto& e : config.experiments) {
            const std::string cell = best_known_cell(f, e.experiment);
            if (log) *log << "best-known " << cell << " ..." << std::endl;
            compute_best_known(config, f, e).write_csv(dir / (cell + ".csv"));
            written.push_back(cell);
        }
    }
    return written;
}

namespace {

struct Job {
    Landscape function;
    const ExperimentSpec* experiment;
    double tau;
    std::string method;
    int run;
    std::shared_ptr<const BestKnownTable> table;
};

}  // namespace

SuiteResult run_suite(const SuiteConfig& config, const std::filesystem::path& out_dir, std::ostream* log) {
    config.validate();
    SuiteResult result;
    std::filesystem::create_directories(out_dir / "best_known");
    std::filesystem::create_directories(out_dir / "traces");

    std::map<std::string, std::shared_ptr<const BestKnownTable>> tables;
    for (Landscape f : config.functions) {
        for (const auto& e : config.experiments) {
            const std::string cell = best_known_cell(f, e.experiment);
            if (tables.count(cell)) continue;
            const auto path = out_dir / "best_known" / (cell + ".csv");
            std::shared_ptr<BestKnownTable> table;
            if (std::filesystem::exists(path)) {
                table = std::make_shared<BestKnownTable>(BestKnownTable::read_csv(path));
                check_best_known(*table, config, f, e);
                result.loaded_best_known.push_back(cell);
            } else {
                if (log) *log << "generating best-known " << cell << std::endl;
                table = std::make_shared<BestKnownTable>(compute_best_known(config, f, e));
                table->write_csv(path);
                result.generated_best_known.push_back(cell);
            }
            tables[cell] = table;
        }
    }

    std::vector<Job> jobs;
    for (Landscape f : config.functions) {
        for (const auto& e : config.experiments) {
            for (double tau : config.taus) {
                for (const auto& m : config.methods) {
                    for (int run = 0; run < config.runs; ++run) {
                        jobs.push_back(Job{f, &e, tau, m, run, tables[best_known_cell(f, e.experiment)]});
                    }
                }
            }
        }
    }

    result.records.resize(jobs.size());
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::mutex log_mutex;

    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const Job& job = jobs[i];
            RunRecord& rec = result.records[i];
            rec.method = job.method;
            rec.function = job.function;
            rec.experiment = job.experiment->experiment;
            rec.tau = job.tau;
            rec.run = job.run;
            rec.seed = run_seed(config.master_seed, job.function, job.experiment->experiment, job.tau, job.run);
            try {
                const MethodSpec method = make_method(job.method, config, job.tau);
                RunConfig rc = make_run_config(config, job.function, *job.experiment, job.tau, method, rec.seed);
                rc.best_known = job.table;
                const RunTrace trace = run_dynamic(rc);
                rec.metrics = compute_metrics(trace, config.success);
                rec.evaluations = trace.evaluations;
                rec.elapsed_s = trace.elapsed_s;
                rec.nn_seconds = trace.nn_seconds;
                rec.nn_fraction = trace.nn_fraction();
                rec.warnings = trace.warnings;
                const auto dir = out_dir / "traces" / trace_cell(job.function, rec.experiment, job.tau, job.method);
                std::filesystem::create_directories(dir);
                rec.trace_path = dir / (std::to_string(rec.seed) + ".csv");
                write_trace_csv(rec.trace_path, trace);
            } catch (const std::exception& e) {
                rec.error = e.what();
            }
            const std::size_t finished = ++done;
            if (log) {
                std::lock_guard lock(log_mutex);
                *log << "[" << finished << "/" << jobs.size() << "] "
                     << trace_cell(job.function, rec.experiment, job.tau, job.method) << " run " << job.run;
                if (rec.ok()) {
                    *log << " mof=" << rec.metrics.mof;
                } else {
                    *log << " FAILED: " << rec.error;
                }
                *log << std::endl;
            }
        }
    };

    unsigned threads = config.workers > 0 ? static_cast<unsigned>(config.workers)
                                          : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(jobs.size(), 1)));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    write_metrics_csv(out_dir / "metrics.csv", result.records);
    write_timing_csv(out_dir / "timing.csv", result.records);
    const bool any_failed = std::any_of(result.records.begin(), result.records.end(),
                                        [](const RunRecord& r) { return !r.ok(); });
    if (any_failed) write_failures_csv(out_dir / "failures.csv", result.records);
    write_ranks_csv(out_dir / "ranks.csv", rank_methods(read_metrics_csv(out_dir / "metrics.csv")));
    return result;
}

std::vector<RunRecord> recompute_metrics(const std::filesystem::path& out_dir, const SuccessThreshold& success) {
    const auto traces = out_dir / "traces";
    if (!std::filesystem::is_directory(traces)) {
        throw std::runtime_error("no traces directory under " + out_dir.string());
    }
    std::vector<RunRecord> records;
    for (const auto& cell_dir : std::filesystem::directory_iterator(traces)) {
        if (!cell_dir.is_directory()) continue;
        const std::string name = cell_dir.path().filename().string();
        // <function>_<experiment>_tau<tau>_<method>
        const auto p1 = name.find('_');
        const auto p2 = name.find('_', p1 + 1);
        const auto p3 = name.find('_', p2 + 1);
        if (p1 == std::string::npos || p2 == std::string::npos || p3 == std::string::npos ||
            name.compare(p2 + 1, 3, "tau") != 0) {
            throw std::runtime_error("unrecognised trace directory " + name);
        }
        RunRecord base;
        base.function = parse_landscape(name.substr(0, p1));
        base.experiment = parse_experiment(name.substr(p1 + 1, p2 - p1 - 1));
        base.tau = std::strtod(name.substr(p2 + 4, p3 - p2 - 4).c_str(), nullptr);
        base.method = name.substr(p3 + 1);
        for (const auto& file : std::filesystem::directory_iterator(cell_dir.path())) {
            if (file.path().extension() != ".csv") continue;
            RunRecord rec = base;
            rec.seed = std::stoull(file.path().stem().string());
            rec.trace_path = file.path();
            const RunTrace trace = read_trace_csv(file.path());
            rec.metrics = compute_metrics(trace, success);
            rec.evaluations = trace.evaluations;
            rec.elapsed_s = trace.elapsed_s;
            records.push_back(std::move(rec));
        }
    }
    sort_records(records);
    return records;
}

}  // namespace dynde
