#include "femtoffr/rate_model.hpp"

#include <algorithm>
#include <cmath>

namespace femtoffr {

double SubbandBudget::total_interference() const {
    double total = other_interference;
    for (const auto& item : items) total += item.power;
    return total;
}

double ian_se(const SubbandBudget& budget, double gap_linear, double max_se) {
    if (budget.own_power <= 0.0) return 0.0;
    const double sinr =
        budget.own_power / (budget.total_interference() + budget.noise);
    return std::min(max_se, std::log2(1.0 + sinr / gap_linear));
}

double jd_se(const SubbandBudget& budget, double gap_linear, double max_se) {
    const double ian = ian_se(budget, gap_linear, max_se);
    if (budget.own_power <= 0.0 || budget.items.empty()) return ian;

    // Cancel the single strongest macro interferer.
    std::size_t strongest = 0;
    for (std::size_t i = 1; i < budget.items.size(); ++i) {
        if (budget.items[i].power > budget.items[strongest].power) strongest = i;
    }
    const InterferenceItem& item = budget.items[strongest];
    if (item.power <= 0.0 || item.rate_se < 0.0) return ian;

    double residual = budget.other_interference + budget.noise;
    for (std::size_t i = 0; i < budget.items.size(); ++i) {
        if (i != strongest) residual += budget.items[i].power;
    }
    const double gz = gap_linear * residual;
    // Joint decoding requires the interferer's rate to fit its single-user
    // bound at this receiver.
    if (item.rate_se > std::log2(1.0 + item.power / gz)) return ian;
    const double single = std::log2(1.0 + budget.own_power / gz);
    const double sum_bound =
        std::log2(1.0 + (budget.own_power + item.power) / gz) - item.rate_se;
    const double jd = std::min(single, sum_bound);
    return std::clamp(std::max(jd, ian), 0.0, max_se);
}

double femto_rate_ian(const LinkBudget& budget, double gap_linear,
                      double max_se) {
    double total = 0.0;
    for (std::size_t k = 0; k < budget.subbands.size(); ++k)
        total += budget.weights[k] * ian_se(budget.subbands[k], gap_linear, max_se);
    return total;
}

double femto_rate_jd(const LinkBudget& budget, double gap_linear,
                     double max_se) {
    double total = 0.0;
    for (std::size_t k = 0; k < budget.subbands.size(); ++k)
        total += budget.weights[k] * jd_se(budget.subbands[k], gap_linear, max_se);
    return total;
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double rank = std::clamp(p, 0.0, 100.0) / 100.0 *
                        static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(rank));
    const double frac = rank - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

}  // namespace femtoffr
