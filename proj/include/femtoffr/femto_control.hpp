#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "femtoffr/rng.hpp"

namespace femtoffr {

// A self-contained power-control problem: N short-range transmitters, K
// subbands, M[k] macro receivers listening on subband k. Everything is in
// normalized units: powers are fractions of the device ceiling, interference
// is in multiples of the receiver's thermal noise, and gains fold both
// normalizations in. This keeps load factors near 1 regardless of the
// physical scales involved.
struct ControlInstance {
    int N = 0;
    int K = 0;
    std::vector<int> M;                  // receivers per subband
    std::vector<std::vector<double>> G;  // G[k]: M[k] x N, row-major
    std::vector<std::vector<double>> e;  // e[j][k]: noise-per-gain seen by j
    std::vector<double> weights;         // subband bandwidth fractions
    std::vector<double> lambda;          // per-transmitter spillage budget
    double cap = std::numeric_limits<double>::infinity();  // per-subband power box
    std::vector<std::vector<double>> s;       // s[k][i] load factors
    std::vector<std::vector<double>> target;  // target[k][i] interference targets

    int receivers_total() const;
    int q_offset(int k) const;  // offset of subband k in a flat receiver vector
};

/// q[i][k] = sum_j G_ijk p_jk, flattened receiver-major per subband.
std::vector<double> compute_interference(const ControlInstance& inst,
                                         const std::vector<double>& p_flat);

/// r[j][k] = sum_i G_ijk s_ik, flattened as r[k*N + j].
std::vector<double> compute_spillage(const ControlInstance& inst,
                                     const std::vector<std::vector<double>>& s);

/// Concave per-transmitter objective: sum_k w_k log2(1 + p_k / e_k).
double utility(const std::vector<double>& weights,
               const std::vector<double>& e_j, const std::vector<double>& p_j);

double utility_gradient(double weight, double e_jk, double p_jk);

struct Waterfill {
    std::vector<double> p;
    double nu = 0.0;  // spillage-constraint multiplier (0 when it is slack)
};

/// Maximize utility subject to sum_k r_k p_k <= lambda and 0 <= p_k <= cap.
/// Solved exactly by scanning the breakpoints of the water level.
Waterfill waterfill(const std::vector<double>& weights,
                    const std::vector<double>& e_j,
                    const std::vector<double>& r_j, double lambda, double cap);

/// Waterfill every transmitter of the instance; returns p[k*N + j].
std::vector<double> waterfill_all(const ControlInstance& inst,
                                  const std::vector<double>& r_flat);

struct LoadSpillageParams {
    int iterations = 50;
    double beta = 0.25;  // multiplicative update exponent
    double s_init = 1.0;
    double s_min = 1e-6;
    double s_max = 1e6;
    // Geometric moving-average weight on the interference measurement fed to
    // the load update (1 = unfiltered).
    double measure_smoothing = 1.0;
    // Geometric moving-average weight on the spillage prices the waterfill
    // responds to (1 = unfiltered). Undamped prices let a transmitter flip
    // its whole allocation between subbands every iteration, which shows up
    // as huge interference swings at the victims of the contested bands.
    double price_smoothing = 0.5;
    // Sign-based per-receiver step adaptation: when the violation flips sign
    // between iterations the local exponent shrinks (down to beta *
    // adapt_min), when it persists the exponent recovers toward beta. Power
    // boxes make q a flat-then-cliff function of the load, and without the
    // adaptation receivers near the cliff settle into period-2 hunting.
    double adapt_min = 0.25;
    // Control setback: the update steers interference to target - margin so
    // binding receivers equilibrate strictly below their limit instead of
    // exactly on it (compliance is always judged against the true target).
    double margin_db = 0.2;
};

// Per-receiver adaptation state carried across update_loads calls.
struct LoadUpdateState {
    std::vector<double> step_scale;      // in [adapt_min, 1]
    std::vector<signed char> prev_sign;  // sign of log(q/target)
};

/// s <- clip(s * (q/target)^(beta * step)); targets <= 0 drive s to s_max,
/// q = 0 drives s to s_min. Without `state` the step is always 1.
void update_loads(std::vector<std::vector<double>>& s,
                  const ControlInstance& inst, const std::vector<double>& q_flat,
                  const LoadSpillageParams& params,
                  LoadUpdateState* state = nullptr);

struct IterationStats {
    int iteration = 0;
    double frac_within_tol = 0.0;  // receivers at or below target + 0.1 dB
    double max_over_db = 0.0;      // worst overshoot above target
};

struct TraceRow {
    int iteration;
    int subband;
    int receiver;
    double q_db;
    double target_db;
    double s;
};

struct LoadSpillageResult {
    std::vector<double> p_flat;  // [k*N + j]
    std::vector<std::vector<double>> s;
    std::vector<double> q_flat;
    std::vector<IterationStats> trace;
};

/// Hook refreshing the e[j][k] noise terms between iterations (used to
/// freeze cross-talk between the short-range links at the previous power).
using NoiseRefresh =
    std::function<void(const std::vector<double>& p_flat,
                       std::vector<std::vector<double>>& e)>;

LoadSpillageResult run_load_spillage(const ControlInstance& inst,
                                     const LoadSpillageParams& params,
                                     const NoiseRefresh& refresh = {},
                                     std::vector<TraceRow>* full_trace = nullptr);

// Interference targets. DL: the added interference that erodes the victim's
// rate by loss_fraction (victims already at the spectral-efficiency cap get
// the amount that erodes exactly their cap margin). UL: a fixed rise of the
// interference-plus-noise floor.
double dl_interference_target(double signal, double femto_free_floor,
                              double gap_linear, double max_se,
                              double loss_fraction);
double ul_interference_target(double femto_free_floor, double rise_db);

struct ParetoVerdict {
    bool pass = true;
    std::string witness;  // description of the improving direction, if any
};

/// Exhaustive perturbation search at desk scale: pass means no nearby power
/// vector weakly improves every utility and every interference level with
/// at least one strict improvement.
ParetoVerdict pareto_oracle(const ControlInstance& inst,
                            const std::vector<double>& p_flat);

struct KktRecovery {
    std::vector<double> t;               // per transmitter
    std::vector<std::vector<double>> s;  // recovered load factors [k][i]
    double residual = 0.0;
};

/// Recover nonnegative multipliers (t_j, s_ik) making p stationary for the
/// spillage-constrained utility maximization; the residual is the smallest
/// achievable norm of the stationarity defect over unit-norm nonnegative
/// multiplier vectors. Near-zero residual certifies p as an optimizer output.
KktRecovery kkt_recover(const ControlInstance& inst,
                        const std::vector<double>& p_flat);

struct InstanceOptions {
    int max_transmitters = 3;
    int max_subbands = 2;
    int max_receivers = 2;     // per subband
    double gain_spread_db = 40.0;
    bool force_interior = false;  // redraw until waterfilling is strictly > 0
};

ControlInstance random_instance(Rng& rng, const InstanceOptions& opt);

}  // namespace femtoffr
