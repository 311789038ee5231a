#include "dynde/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace dynde {

namespace {

void require_f_star(const TraceRow& r) {
    if (std::isnan(r.f_star)) {
        throw std::invalid_argument("trace row at t=" + std::to_string(r.t) +
                                    " has no best-known value; metrics need a best-known table");
    }
}

// Contiguous runs of rows sharing a period.
std::vector<std::span<const TraceRow>> split_periods(std::span<const TraceRow> rows) {
    std::vector<std::span<const TraceRow>> out;
    std::size_t start = 0;
    for (std::size_t i = 1; i <= rows.size(); ++i) {
        if (i == rows.size() || rows[i].t != rows[start].t) {
            if (i > start) out.push_back(rows.subspan(start, i - start));
            start = i;
        }
    }
    return out;
}

double arr_term(std::span<const TraceRow> period) {
    const double first = period.front().best_f;
    const double f_star = period.front().f_star;
    if (first == f_star) return 1.0;
    double progress = 0.0;
    for (const auto& r : period) progress += std::abs(r.best_f - first);
    return progress / (static_cast<double>(period.size()) * std::abs(f_star - first));
}

bool within_precision(double error, double f_star, double epsilon, double epsilon_abs) {
    return error <= std::max(epsilon * std::abs(f_star), epsilon_abs);
}

}  // namespace

double mof(std::span<const TraceRow> rows) {
    if (rows.empty()) return 0.0;
    double total = 0.0;
    for (const auto& r : rows) {
        require_f_star(r);
        total += std::abs(r.f_star - r.best_f);
    }
    return total / static_cast<double>(rows.size());
}

double bebc(std::span<const TraceRow> rows) {
    const auto periods = split_periods(rows);
    if (periods.empty()) return 0.0;
    double total = 0.0;
    for (const auto& p : periods) {
        require_f_star(p.back());
        total += std::abs(p.back().f_star - p.back().best_f);
    }
    return total / static_cast<double>(periods.size());
}

double arr(std::span<const TraceRow> rows) {
    const auto periods = split_periods(rows);
    if (periods.empty()) return 0.0;
    double total = 0.0;
    for (const auto& p : periods) {
        require_f_star(p.front());
        total += arr_term(p);
    }
    return total / static_cast<double>(periods.size());
}

double success_rate(std::span<const TraceRow> rows, double epsilon, double epsilon_abs) {
    const auto periods = split_periods(rows);
    if (periods.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& p : periods) {
        const auto& last = p.back();
        require_f_star(last);
        if (within_precision(std::abs(last.f_star - last.best_f), last.f_star, epsilon, epsilon_abs)) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(periods.size());
}

std::vector<PeriodMetrics> per_period(std::span<const TraceRow> rows, const SuccessThreshold& sr) {
    std::vector<PeriodMetrics> out;
    for (const auto& p : split_periods(rows)) {
        require_f_star(p.back());
        PeriodMetrics m;
        m.t = p.front().t;
        m.generations = static_cast<int>(p.size());
        m.first_best = p.front().best_f;
        m.final_best = p.back().best_f;
        m.f_star = p.back().f_star;
        m.final_error = std::abs(m.f_star - m.final_best);
        m.arr_term = arr_term(p);
        m.success = within_precision(m.final_error, m.f_star, sr.epsilon, sr.epsilon_abs);
        out.push_back(m);
    }
    return out;
}

MetricReport compute_metrics(std::span<const TraceRow> rows, const SuccessThreshold& sr) {
    MetricReport report;
    report.mof = mof(rows);
    report.bebc = bebc(rows);
    report.arr = arr(rows);
    report.sr = success_rate(rows, sr.epsilon, sr.epsilon_abs);
    report.per_time = per_period(rows, sr);
    return report;
}

RankResult mean_ranks(const std::map<std::string, std::map<std::string, double>>& values,
                      bool higher_is_better) {
    RankResult result;
    std::set<std::string> cells;
    for (const auto& [method, by_cell] : values) {
        for (const auto& [cell, v] : by_cell) cells.insert(cell);
    }

    std::map<std::string, double> rank_sum;
    std::size_t complete = 0;
    for (const auto& cell : cells) {
        std::vector<std::pair<double, std::string>> entries;
        bool missing = false;
        for (const auto& [method, by_cell] : values) {
            auto it = by_cell.find(cell);
            if (it == by_cell.end()) {
                missing = true;
                break;
            }
            entries.emplace_back(higher_is_better ? -it->second : it->second, method);
        }
        if (missing) {
            result.incomplete_cells.push_back(cell);
            continue;
        }
        ++complete;
        std::sort(entries.begin(), entries.end());
        for (std::size_t i = 0; i < entries.size();) {
            std::size_t j = i;
            while (j < entries.size() && entries[j].first == entries[i].first) ++j;
            // Positions i..j-1 tie; ranks are 1-based.
            const double shared = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
            for (std::size_t q = i; q < j; ++q) rank_sum[entries[q].second] += shared;
            i = j;
        }
    }
    for (const auto& [method, by_cell] : values) {
        result.mean_rank[method] = complete ? rank_sum[method] / static_cast<double>(complete) : 0.0;
    }
    return result;
}

}  // namespace dynde
