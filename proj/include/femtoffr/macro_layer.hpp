#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "femtoffr/channel.hpp"
#include "femtoffr/topology.hpp"

namespace femtoffr {

struct SubbandPlan {
    enum class Mode { FFR4, Reuse1 };
    Mode mode = Mode::FFR4;
    int K = 4;
    double p1 = 0.5;                  // bandwidth fraction of the reuse-1 subband
    std::vector<double> width;        // bandwidth fractions, sum to 1
    std::vector<int> reuse3_of_cell;  // per cell: its reuse-3 subband (1..3), -1 in Reuse1
};

/// Deterministic azimuth -> subband map (0 deg -> 1, 120 -> 2, 240 -> 3);
/// with this map the boresight-facing sectors of adjacent sites never share
/// a reuse-3 subband on the standard hex torus.
std::vector<int> color_reuse3(const NetworkDrop& drop);

SubbandPlan make_plan_ffr4(const NetworkDrop& drop, double p1);
SubbandPlan make_plan_reuse1(const NetworkDrop& drop);

struct MacroControlParams {
    double iot_target_db = 10.0;
    double iot_tol_db = 0.001;   // fixed-point convergence tolerance
    int iot_max_iterations = 500;
    double gap_linear = 2.0;     // 3 dB below Shannon
    double max_se = 5.0;         // bps/Hz ceiling
};

struct MacroSchedule {
    // per UE
    std::vector<int> subband;         // assigned subband index
    std::vector<double> share;        // bandwidth share within (cell, subband)
    std::vector<double> pilot_sinr_db;
    std::vector<double> ul_psd;       // UE transmit PSD, W/Hz
    std::vector<double> ul_rx_psd;    // achieved receive PSD at serving cell
    std::vector<char> ul_clipped;
    // per UE, femto-free DL conditions in the assigned subband
    std::vector<double> dl_signal;        // serving PSD * gain, W/Hz
    std::vector<double> dl_interference;  // other-cell macro PSD, W/Hz

    // per cell x subband
    std::vector<char> occupied;       // [c*K + k]
    std::vector<double> cell_dl_psd;  // [c*K + k], W/Hz
    std::vector<double> ul_floor;     // [c*K + k]: noise + inter-cell macro PSD
    std::vector<char> iot_flagged;    // [c*K + k]: target unreachable
    int iot_iterations = 0;

    int K = 0;
    int num_cells = 0;

    bool cell_occupied(int c, int k) const { return occupied[static_cast<std::size_t>(c) * K + k] != 0; }
};

struct IotConvergenceError : std::runtime_error {
    explicit IotConvergenceError(const std::string& what,
                                 std::vector<double> last)
        : std::runtime_error(what), last_iterate(std::move(last)) {}
    std::vector<double> last_iterate;
};

/// Rank each cell's UEs by reuse-1 pilot SINR and send the top ceil(p1*n)
/// to the reuse-1 subband, the rest to the cell's reuse-3 subband; equal
/// bandwidth shares within each (cell, subband).
MacroSchedule assign_macro_ues(const NetworkDrop& drop, const SubbandPlan& plan,
                               const LinkTables& tables,
                               const ChannelConfig& channel);

/// Uniform DL power density over each cell's occupied bandwidth.
void set_dl_powers(MacroSchedule& schedule, const NetworkDrop& drop,
                   const SubbandPlan& plan, const ChannelConfig& channel);

/// Equal receive power density per (cell, subband), scaled so every cell's
/// inter-cell macro interference sits at the IoT target; UE power caps are
/// honoured and unreachable targets are flagged.
void set_ul_powers(MacroSchedule& schedule, const NetworkDrop& drop,
                   const SubbandPlan& plan, const LinkTables& tables,
                   const ChannelConfig& channel,
                   const MacroControlParams& params);

/// Fill per-UE femto-free DL signal/interference terms from the DL powers.
void compute_dl_conditions(MacroSchedule& schedule, const NetworkDrop& drop,
                           const SubbandPlan& plan, const LinkTables& tables);

enum class Direction { DL, UL };

/// Per-UE rate in bps given femto interference PSD q at each UE's receiver
/// (per UE for DL, per serving (cell, subband) for UL); q may be empty for
/// the femto-free reference.
std::vector<double> macro_rates(const MacroSchedule& schedule,
                                const NetworkDrop& drop,
                                const SubbandPlan& plan,
                                const ChannelConfig& channel,
                                const MacroControlParams& params,
                                Direction direction,
                                const std::vector<double>& q_per_ue);

/// Spectral efficiency of one link: min(max_se, log2(1 + sinr/gap)).
double link_se(double sinr, double gap_linear, double max_se);

}  // namespace femtoffr
