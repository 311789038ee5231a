#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "dynde/engine.hpp"

namespace dynde {

/// Per-period summary derived from a trace.
struct PeriodMetrics {
    int t = 0;
    int generations = 0;
    double first_best = 0.0;
    double final_best = 0.0;
    double f_star = 0.0;
    double final_error = 0.0;
    double arr_term = 0.0;
    bool success = false;
};

struct MetricReport {
    double mof = 0.0;
    double bebc = 0.0;
    double arr = 0.0;
    double sr = 0.0;
    std::vector<PeriodMetrics> per_time;
};

struct SuccessThreshold {
    double epsilon = 0.1;
    double epsilon_abs = 1e-4;
};

/// Mean over every generation of |f_star(t) - f_best(t, G)|. Normalized by
/// the total generation count across all periods.
double mof(std::span<const TraceRow> rows);
/// Mean over periods of the last generation's error.
double bebc(std::span<const TraceRow> rows);
/// Mean over periods of sum_G |f_best(t,G) - f_best(t,1)| / (Gmax(t) |f_star(t) - f_best(t,1)|).
/// A period already optimal at its first generation contributes 1.
double arr(std::span<const TraceRow> rows);
/// Fraction of periods whose final error is within max(eps |f_star|, eps_abs).
double success_rate(std::span<const TraceRow> rows, double epsilon, double epsilon_abs);

std::vector<PeriodMetrics> per_period(std::span<const TraceRow> rows, const SuccessThreshold& sr = {});

MetricReport compute_metrics(std::span<const TraceRow> rows, const SuccessThreshold& sr = {});
inline MetricReport compute_metrics(const RunTrace& trace, const SuccessThreshold& sr = {}) {
    return compute_metrics(trace.rows, sr);
}

struct RankResult {
    /// Mean rank per method over every complete cell.
    std::map<std::string, double> mean_rank;
    /// Cells skipped because some method had no value there.
    std::vector<std::string> incomplete_cells;
};

/// Ranks methods within each cell (1 = best, ties share the average rank) and
/// averages the ranks across cells. Input is method -> cell -> value.
RankResult mean_ranks(const std::map<std::string, std::map<std::string, double>>& values,
                      bool higher_is_better = false);

}  // namespace dynde
