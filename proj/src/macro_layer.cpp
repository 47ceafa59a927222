#include "femtoffr/macro_layer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace femtoffr {

double link_se(double sinr, double gap_linear, double max_se) {
    return std::min(max_se, std::log2(1.0 + sinr / gap_linear));
}

std::vector<int> color_reuse3(const NetworkDrop& drop) {
    std::vector<int> coloring(drop.num_cells());
    for (int c = 0; c < drop.num_cells(); ++c) {
        const int sector = c % drop.config.sectors_per_site;
        coloring[c] = 1 + sector % 3;
    }
    return coloring;
}

SubbandPlan make_plan_ffr4(const NetworkDrop& drop, double p1) {
    SubbandPlan plan;
    plan.mode = SubbandPlan::Mode::FFR4;
    plan.K = 4;
    plan.p1 = p1;
    plan.width = {p1, (1.0 - p1) / 3.0, (1.0 - p1) / 3.0, (1.0 - p1) / 3.0};
    plan.reuse3_of_cell = color_reuse3(drop);
    return plan;
}

SubbandPlan make_plan_reuse1(const NetworkDrop& drop) {
    SubbandPlan plan;
    plan.mode = SubbandPlan::Mode::Reuse1;
    plan.K = 1;
    plan.p1 = 1.0;
    plan.width = {1.0};
    plan.reuse3_of_cell.assign(drop.num_cells(), -1);
    return plan;
}

MacroSchedule assign_macro_ues(const NetworkDrop& drop, const SubbandPlan& plan,
                               const LinkTables& tables,
                               const ChannelConfig& channel) {
    const int num_ues = drop.num_ues();
    const int num_cells = drop.num_cells();
    MacroSchedule sched;
    sched.K = plan.K;
    sched.num_cells = num_cells;
    sched.subband.assign(num_ues, 0);
    sched.share.assign(num_ues, 0.0);
    sched.pilot_sinr_db.assign(num_ues, 0.0);
    sched.occupied.assign(static_cast<std::size_t>(num_cells) * plan.K, 0);

    // Reuse-1 pilot SINR: every cell transmitting at a common reference
    // density (total power spread over the full band).
    const double ref_psd =
        channel.macro_total_power_w() / channel.system_bandwidth_hz;
    const double noise = channel.ue_noise_psd();
    for (int u = 0; u < num_ues; ++u) {
        const int serv = drop.macro_ues[u].serving_cell;
        double interference = 0.0;
        for (int c = 0; c < num_cells; ++c) {
            if (c != serv) interference += tables.mue_cell_gain(u, c) * ref_psd;
        }
        const double sinr =
            tables.mue_cell_gain(u, serv) * ref_psd / (interference + noise);
        sched.pilot_sinr_db[u] = linear_to_db(sinr);
    }

    std::vector<std::vector<int>> ues_of_cell(num_cells);
    for (int u = 0; u < num_ues; ++u)
        ues_of_cell[drop.macro_ues[u].serving_cell].push_back(u);

    for (int c = 0; c < num_cells; ++c) {
        auto& ues = ues_of_cell[c];
        std::sort(ues.begin(), ues.end(), [&](int a, int b) {
            if (sched.pilot_sinr_db[a] != sched.pilot_sinr_db[b])
                return sched.pilot_sinr_db[a] > sched.pilot_sinr_db[b];
            return a < b;
        });
        const int n = static_cast<int>(ues.size());
        const int top = (plan.mode == SubbandPlan::Mode::Reuse1)
                            ? n
                            : static_cast<int>(std::ceil(plan.p1 * n));
        for (int rank = 0; rank < n; ++rank) {
            const int u = ues[rank];
            sched.subband[u] =
                (rank < top) ? 0 : plan.reuse3_of_cell[c];
        }
        // Equal shares within each (cell, subband) group.
        std::vector<int> count(plan.K, 0);
        for (int u : ues) count[sched.subband[u]]++;
        for (int u : ues) sched.share[u] = 1.0 / count[sched.subband[u]];
        for (int k = 0; k < plan.K; ++k) {
            if (count[k] > 0)
                sched.occupied[static_cast<std::size_t>(c) * plan.K + k] = 1;
        }
    }
    return sched;
}

void set_dl_powers(MacroSchedule& schedule, const NetworkDrop& drop,
                   const SubbandPlan& plan, const ChannelConfig& channel) {
    const int num_cells = drop.num_cells();
    schedule.cell_dl_psd.assign(static_cast<std::size_t>(num_cells) * plan.K,
                                0.0);
    for (int c = 0; c < num_cells; ++c) {
        double occupied_bw = 0.0;
        for (int k = 0; k < plan.K; ++k) {
            if (schedule.cell_occupied(c, k))
                occupied_bw += plan.width[k] * channel.system_bandwidth_hz;
        }
        if (occupied_bw <= 0.0) continue;
        const double psd = channel.macro_total_power_w() / occupied_bw;
        for (int k = 0; k < plan.K; ++k) {
            if (schedule.cell_occupied(c, k))
                schedule.cell_dl_psd[static_cast<std::size_t>(c) * plan.K + k] =
                    psd;
        }
    }
}

void compute_dl_conditions(MacroSchedule& schedule, const NetworkDrop& drop,
                           const SubbandPlan& plan, const LinkTables& tables) {
    const int num_ues = drop.num_ues();
    const int num_cells = drop.num_cells();
    schedule.dl_signal.assign(num_ues, 0.0);
    schedule.dl_interference.assign(num_ues, 0.0);
    for (int u = 0; u < num_ues; ++u) {
        const int serv = drop.macro_ues[u].serving_cell;
        const int k = schedule.subband[u];
        schedule.dl_signal[u] =
            schedule.cell_dl_psd[static_cast<std::size_t>(serv) * plan.K + k] *
            tables.mue_cell_gain(u, serv);
        double interference = 0.0;
        for (int c = 0; c < num_cells; ++c) {
            if (c == serv) continue;
            interference +=
                schedule.cell_dl_psd[static_cast<std::size_t>(c) * plan.K + k] *
                tables.mue_cell_gain(u, c);
        }
        schedule.dl_interference[u] = interference;
    }
}

namespace {

struct UlCellGroup {
    int cell;
    std::vector<int> ues;
};

// Receive-density fixed point for one subband: find per-cell receive PSDs
// rho so that inter-cell macro interference at every cell equals the IoT
// target. Interference at a cell is linear in the other cells' rho (UE
// transmit PSD = rho / serving gain, capped at the device limit), so each
// round solves that linear system exactly for the current set of
// power-capped UEs, then refreshes the set until it stops changing.
void solve_subband_ul(MacroSchedule& sched, const NetworkDrop& drop,
                      const SubbandPlan& plan, const LinkTables& tables,
                      const ChannelConfig& channel,
                      const MacroControlParams& params, int k) {
    const int K = plan.K;
    std::vector<UlCellGroup> groups;
    for (int c = 0; c < drop.num_cells(); ++c) {
        if (!sched.cell_occupied(c, k)) continue;
        groups.push_back(UlCellGroup{c, {}});
    }
    for (int u = 0; u < drop.num_ues(); ++u) {
        if (sched.subband[u] != k) continue;
        const int serv = drop.macro_ues[u].serving_cell;
        for (auto& g : groups)
            if (g.cell == serv) g.ues.push_back(u);
    }
    const int n = static_cast<int>(groups.size());
    if (n == 0) return;

    const double noise = channel.bs_noise_psd();
    const double target_i = db_to_linear(params.iot_target_db) * noise;
    const double p_max = dbm_to_watts(channel.macro_ue_max_power_dbm);

    const int num_ues = drop.num_ues();
    std::vector<double> cap_psd(num_ues, 0.0), clip_at(num_ues, 0.0);
    for (const auto& g : groups) {
        for (int u : g.ues) {
            const double bw =
                sched.share[u] * plan.width[k] * channel.system_bandwidth_hz;
            cap_psd[u] = p_max / bw;
            clip_at[u] = cap_psd[u] * tables.mue_cell_gain(u, g.cell);
        }
    }

    auto flag = [&](int c) {
        sched.iot_flagged[static_cast<std::size_t>(c) * K + k] = 1;
    };

    std::vector<double> rho(n, 0.0);
    std::vector<char> pinned(n, 0);
    if (n == 1) {
        // No inter-cell interference exists; use the highest receive density
        // no UE has to clip for.
        double floor_rho = std::numeric_limits<double>::infinity();
        for (int u : groups[0].ues) floor_rho = std::min(floor_rho, clip_at[u]);
        rho[0] = floor_rho;
        flag(groups[0].cell);
    } else {
        std::vector<char> clipped(num_ues, 0);
        bool stable = false;
        for (int iter = 0; iter < params.iot_max_iterations && !stable;
             ++iter) {
            sched.iot_iterations++;
            Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
            Eigen::VectorXd b = Eigen::VectorXd::Constant(n, target_i);
            for (int cj = 0; cj < n; ++cj) {
                for (int u : groups[cj].ues) {
                    if (clipped[u]) {
                        for (int ci = 0; ci < n; ++ci) {
                            if (ci == cj) continue;
                            b(ci) -= sched.share[u] * cap_psd[u] *
                                     tables.mue_cell_gain(u, groups[ci].cell);
                        }
                    } else {
                        const double inv_serving =
                            1.0 / tables.mue_cell_gain(u, groups[cj].cell);
                        for (int ci = 0; ci < n; ++ci) {
                            if (ci == cj) continue;
                            A(ci, cj) +=
                                sched.share[u] * inv_serving *
                                tables.mue_cell_gain(u, groups[ci].cell);
                        }
                    }
                }
            }
            // Cells whose target is unreachable (capped interference alone
            // exceeds it) get pinned at their own no-clipping ceiling.
            for (int c = 0; c < n; ++c) {
                if (pinned[c]) continue;
                if (b(c) <= target_i * 1e-9) {
                    pinned[c] = 1;
                    double floor_rho = std::numeric_limits<double>::infinity();
                    for (int u : groups[c].ues)
                        floor_rho = std::min(floor_rho, clip_at[u]);
                    rho[c] = floor_rho;
                    flag(groups[c].cell);
                }
            }
            std::vector<int> free_idx;
            for (int c = 0; c < n; ++c)
                if (!pinned[c]) free_idx.push_back(c);
            const int m = static_cast<int>(free_idx.size());
            if (m > 0) {
                Eigen::MatrixXd Af(m, m);
                Eigen::VectorXd bf(m);
                for (int i = 0; i < m; ++i) {
                    bf(i) = b(free_idx[i]);
                    for (int c = 0; c < n; ++c) {
                        if (pinned[c]) bf(i) -= A(free_idx[i], c) * rho[c];
                    }
                    for (int jj = 0; jj < m; ++jj)
                        Af(i, jj) = A(free_idx[i], free_idx[jj]);
                }
                Eigen::VectorXd sol = Af.partialPivLu().solve(bf);
                bool pinned_new = false;
                for (int i = 0; i < m; ++i) {
                    if (!std::isfinite(sol(i)) || sol(i) <= 0.0) {
                        // Interference at this cell cannot be brought down to
                        // the target with positive power; pin and flag.
                        pinned[free_idx[i]] = 1;
                        double floor_rho =
                            std::numeric_limits<double>::infinity();
                        for (int u : groups[free_idx[i]].ues)
                            floor_rho = std::min(floor_rho, clip_at[u]);
                        rho[free_idx[i]] = floor_rho;
                        flag(groups[free_idx[i]].cell);
                        pinned_new = true;
                    } else {
                        rho[free_idx[i]] = sol(i);
                    }
                }
                if (pinned_new) continue;
            }
            bool changed = false;
            for (int c = 0; c < n; ++c) {
                for (int u : groups[c].ues) {
                    const char should_clip = rho[c] > clip_at[u] ? 1 : 0;
                    if (should_clip != clipped[u]) {
                        clipped[u] = should_clip;
                        changed = true;
                    }
                }
            }
            stable = !changed;
        }
        if (!stable) {
            throw IotConvergenceError(
                "uplink receive-density fixed point did not settle", rho);
        }
    }

    for (int c = 0; c < n; ++c) {
        for (int u : groups[c].ues) {
            const double serving_gain = tables.mue_cell_gain(u, groups[c].cell);
            const double psd = std::min(cap_psd[u], rho[c] / serving_gain);
            sched.ul_psd[u] = psd;
            sched.ul_rx_psd[u] = psd * serving_gain;
            sched.ul_clipped[u] = psd >= cap_psd[u] * (1.0 - 1e-12) ? 1 : 0;
        }
    }
    for (int c = 0; c < n; ++c) {
        double interference = 0.0;
        for (int cj = 0; cj < n; ++cj) {
            if (cj == c) continue;
            for (int u : groups[cj].ues) {
                interference += sched.share[u] * sched.ul_psd[u] *
                                tables.mue_cell_gain(u, groups[c].cell);
            }
        }
        sched.ul_floor[static_cast<std::size_t>(groups[c].cell) * K + k] =
            noise + interference;
    }
}

}  // namespace

void set_ul_powers(MacroSchedule& schedule, const NetworkDrop& drop,
                   const SubbandPlan& plan, const LinkTables& tables,
                   const ChannelConfig& channel,
                   const MacroControlParams& params) {
    const int num_ues = drop.num_ues();
    schedule.ul_psd.assign(num_ues, 0.0);
    schedule.ul_rx_psd.assign(num_ues, 0.0);
    schedule.ul_clipped.assign(num_ues, 0);
    schedule.ul_floor.assign(
        static_cast<std::size_t>(drop.num_cells()) * plan.K, 0.0);
    schedule.iot_flagged.assign(
        static_cast<std::size_t>(drop.num_cells()) * plan.K, 0);
    schedule.iot_iterations = 0;
    for (int k = 0; k < plan.K; ++k) {
        solve_subband_ul(schedule, drop, plan, tables, channel, params, k);
    }
}

std::vector<double> macro_rates(const MacroSchedule& schedule,
                                const NetworkDrop& drop,
                                const SubbandPlan& plan,
                                const ChannelConfig& channel,
                                const MacroControlParams& params,
                                Direction direction,
                                const std::vector<double>& q_per_ue) {
    const int num_ues = drop.num_ues();
    std::vector<double> rates(num_ues, 0.0);
    for (int u = 0; u < num_ues; ++u) {
        const int k = schedule.subband[u];
        const double q = q_per_ue.empty() ? 0.0 : q_per_ue[u];
        double sinr = 0.0;
        if (direction == Direction::DL) {
            sinr = schedule.dl_signal[u] /
                   (schedule.dl_interference[u] + channel.ue_noise_psd() + q);
        } else {
            const int serv = drop.macro_ues[u].serving_cell;
            const double floor =
                schedule.ul_floor[static_cast<std::size_t>(serv) * plan.K + k];
            sinr = schedule.ul_rx_psd[u] / (floor + q);
        }
        const double bw =
            schedule.share[u] * plan.width[k] * channel.system_bandwidth_hz;
        rates[u] = bw * link_se(sinr, params.gap_linear, params.max_se);
    }
    return rates;
}

}  // namespace femtoffr
