#pragma once

#include <map>
#include <string>
#include <vector>

#include "femtoffr/config.hpp"
#include "femtoffr/rate_model.hpp"

namespace femtoffr {

struct AggregateEntry {
    std::vector<double> femto_se;  // pooled across drops, drop-major order
    double macro_rate_with_sum = 0.0;
    double macro_rate_without_sum = 0.0;
    long long conv_within = 0;  // receivers at/below target + 0.1 dB
    long long conv_total = 0;
    std::vector<double> noise_rise_db;  // pooled (cell, subband) pairs, UL
    std::vector<double> eta_per_drop;   // orthog bandwidth fractions
    long long cap_links = 0;            // orthog links exactly at eta * max_se

    double macro_mean_loss() const {
        return macro_rate_without_sum > 0.0
                   ? 1.0 - macro_rate_with_sum / macro_rate_without_sum
                   : 0.0;
    }
    double frac_converged() const {
        return conv_total > 0
                   ? static_cast<double>(conv_within) / conv_total
                   : 1.0;
    }
};

struct AggregateReport {
    ScenarioConfig config;
    int drops_completed = 0;
    int drops_failed = 0;
    std::vector<std::string> drop_errors;
    // key "<mode>_<direction>", e.g. "subband_dl"
    std::map<std::string, AggregateEntry> entries;
};

/// Per-drop evaluation of every requested (mode, direction) pair.
std::vector<RateReport> evaluate_drop(const ScenarioConfig& config,
                                      std::uint64_t drop_index);

/// Monte-Carlo over num_drops drops (parallel workers, deterministic
/// drop-ordered aggregation). Throws if more than 10% of drops fail.
AggregateReport run_scenario(const ScenarioConfig& config);

/// Write cdf_<mode>_<dir>.csv, summary.json and raw_links.csv.gz.
void emit_reports(const AggregateReport& report, const std::string& out_dir);

std::string summary_json(const AggregateReport& report);

/// Re-run one drop with full convergence tracing (subband machinery only).
std::vector<TraceRow> trace_drop(const ScenarioConfig& config,
                                 std::uint64_t drop_index, Direction direction);

/// Theorem-oracle suite over random desk-scale instances; returns counted
/// passes. Used by the `verify` subcommand and the acceptance tests.
struct VerifySummary {
    int pareto_pass = 0;
    int pareto_total = 0;
    int kkt_pass = 0;
    int kkt_total = 0;
    double worst_residual_optimal = 0.0;    // max over optimizer outputs
    double best_residual_perturbed = 1e300;  // min over constructed non-optima
};
VerifySummary run_verify(int instances, std::uint64_t seed);

int run_cli(int argc, char** argv);

}  // namespace femtoffr
