#pragma once

#include <string>
#include <vector>

namespace femtoffr {

// Everything a short-range receiver needs to compute its rate on one
// subband. Powers are received power densities (already multiplied by the
// link gain); items are the macro interferers, each carrying the spectral
// efficiency its own link runs at (negative = unknown/idle, not cancelable).
struct InterferenceItem {
    double power = 0.0;
    double rate_se = -1.0;
};

struct SubbandBudget {
    double own_power = 0.0;           // desired signal
    double noise = 0.0;               // thermal
    double other_interference = 0.0;  // cross-talk never canceled
    std::vector<InterferenceItem> items;  // itemized macro interference

    double total_interference() const;
};

struct LinkBudget {
    std::vector<double> weights;          // subband bandwidth fractions
    std::vector<SubbandBudget> subbands;  // one per subband
};

/// Spectral efficiency treating all interference as noise.
double ian_se(const SubbandBudget& budget, double gap_linear, double max_se);

/// Spectral efficiency with joint detection of the strongest macro
/// interferer: the pair (own rate, interferer rate) must sit inside the
/// two-user multiple-access region with the Shannon gap applied to both
/// links; falls back to treating interference as noise when joint decoding
/// is infeasible or the interferer is idle. Never below ian_se.
double jd_se(const SubbandBudget& budget, double gap_linear, double max_se);

/// Bandwidth-weighted totals over subbands, in bps/Hz of system bandwidth.
double femto_rate_ian(const LinkBudget& budget, double gap_linear, double max_se);
double femto_rate_jd(const LinkBudget& budget, double gap_linear, double max_se);

struct RateReport {
    std::string mode;
    std::string direction;
    std::vector<double> femto_se;  // per link, bps/Hz of system bandwidth
    double macro_mean_rate_with = 0.0;
    double macro_mean_rate_without = 0.0;
    double macro_mean_loss = 0.0;       // 1 - with/without
    double frac_converged = 1.0;        // receivers at/below target + 0.1 dB
    long long conv_within = 0;          // counts behind frac_converged
    long long conv_total = 0;
    std::vector<double> noise_rise_db;  // per (cell, subband); UL only
    double eta = 0.0;                   // bandwidth fraction; orthog only
    long long cap_links = 0;            // links exactly at the rate ceiling
};

/// p in [0, 100]; linear interpolation between order statistics.
double percentile(std::vector<double> values, double p);

}  // namespace femtoffr
