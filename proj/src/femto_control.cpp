#include "femtoffr/femto_control.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "femtoffr/kernels.hpp"
#include "femtoffr/units.hpp"

namespace femtoffr {

namespace {
constexpr double kLn2 = 0.6931471805599453;
}

int ControlInstance::receivers_total() const {
    return std::accumulate(M.begin(), M.end(), 0);
}

int ControlInstance::q_offset(int k) const {
    return std::accumulate(M.begin(), M.begin() + k, 0);
}

std::vector<double> compute_interference(const ControlInstance& inst,
                                         const std::vector<double>& p_flat) {
    std::vector<double> q(inst.receivers_total(), 0.0);
    int off = 0;
    for (int k = 0; k < inst.K; ++k) {
        kernels().gemv_acc(inst.G[k].data(), p_flat.data() + k * inst.N,
                           q.data() + off, inst.M[k], inst.N);
        off += inst.M[k];
    }
    return q;
}

std::vector<double> compute_spillage(const ControlInstance& inst,
                                     const std::vector<std::vector<double>>& s) {
    std::vector<double> r(static_cast<std::size_t>(inst.K) * inst.N, 0.0);
    for (int k = 0; k < inst.K; ++k) {
        kernels().gemv_t_acc(inst.G[k].data(), s[k].data(), r.data() + k * inst.N,
                             inst.M[k], inst.N);
    }
    return r;
}

double utility(const std::vector<double>& weights,
               const std::vector<double>& e_j, const std::vector<double>& p_j) {
    double u = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k)
        u += weights[k] * std::log2(1.0 + p_j[k] / e_j[k]);
    return u;
}

double utility_gradient(double weight, double e_jk, double p_jk) {
    return weight / (kLn2 * (e_jk + p_jk));
}

Waterfill waterfill(const std::vector<double>& weights,
                    const std::vector<double>& e_j,
                    const std::vector<double>& r_j, double lambda, double cap) {
    const int K = static_cast<int>(weights.size());
    if (lambda <= 0.0) throw std::invalid_argument("waterfill: lambda <= 0");
    for (int k = 0; k < K; ++k) {
        if (r_j[k] <= 0.0) throw std::invalid_argument("waterfill: spillage <= 0");
        if (e_j[k] <= 0.0) throw std::invalid_argument("waterfill: noise <= 0");
    }

    Waterfill out;
    out.p.assign(K, 0.0);

    // Unconstrained box solution first: if the full box fits the budget the
    // multiplier is zero.
    if (std::isfinite(cap)) {
        double budget_at_cap = 0.0;
        for (int k = 0; k < K; ++k) budget_at_cap += r_j[k] * cap;
        if (budget_at_cap <= lambda) {
            out.p.assign(K, cap);
            out.nu = 0.0;
            return out;
        }
    }

    // p_k(nu) = clip(a_k/(nu r_k) - e_k, 0, cap) with a_k = w_k/ln2. The
    // spent budget phi(nu) = sum r_k p_k(nu) decreases in nu; scan its
    // breakpoints from high nu down and solve phi(nu) = lambda on the
    // segment that brackets it (phi is C + A/nu there).
    struct Event {
        double nu;
        double d_active_a;  // change to A when nu drops past this point
        double d_const;     // change to C
    };
    std::vector<Event> events;
    events.reserve(2 * K);
    std::vector<double> a(K);
    for (int k = 0; k < K; ++k) {
        a[k] = weights[k] / kLn2;
        const double nu_enter = a[k] / (r_j[k] * e_j[k]);
        events.push_back(Event{nu_enter, a[k], -r_j[k] * e_j[k]});
        if (std::isfinite(cap)) {
            const double nu_cap = a[k] / (r_j[k] * (e_j[k] + cap));
            events.push_back(
                Event{nu_cap, -a[k], r_j[k] * e_j[k] + r_j[k] * cap});
        }
    }
    std::sort(events.begin(), events.end(),
              [](const Event& x, const Event& y) { return x.nu > y.nu; });

    double A = 0.0, C = 0.0;
    double nu_star = -1.0;
    const std::size_t num_events = events.size();
    for (std::size_t idx = 0; idx <= num_events; ++idx) {
        const double lo = (idx < num_events) ? events[idx].nu : 0.0;
        const double hi = (idx == 0) ? std::numeric_limits<double>::infinity()
                                     : events[idx - 1].nu;
        if (A > 0.0 && lambda > C) {
            const double candidate = A / (lambda - C);
            if (candidate >= lo && candidate <= hi) {
                nu_star = candidate;
                break;
            }
        }
        if (idx < num_events) {
            A += events[idx].d_active_a;
            C += events[idx].d_const;
        }
    }
    if (nu_star <= 0.0) {
        // phi is continuous, decreasing, -> 0 as nu -> inf and exceeds
        // lambda at nu -> 0 (cap case handled above), so this is unreachable
        // barring NaN input.
        throw std::runtime_error("waterfill: no water level found");
    }

    for (int k = 0; k < K; ++k) {
        const double raw = a[k] / (nu_star * r_j[k]) - e_j[k];
        out.p[k] = std::clamp(raw, 0.0, cap);
    }
    out.nu = nu_star;
    return out;
}

std::vector<double> waterfill_all(const ControlInstance& inst,
                                  const std::vector<double>& r_flat) {
    std::vector<double> p(static_cast<std::size_t>(inst.K) * inst.N, 0.0);
    std::vector<double> e_j(inst.K), r_j(inst.K);
    for (int j = 0; j < inst.N; ++j) {
        for (int k = 0; k < inst.K; ++k) {
            e_j[k] = inst.e[j][k];
            r_j[k] = r_flat[static_cast<std::size_t>(k) * inst.N + j];
        }
        const Waterfill wf =
            waterfill(inst.weights, e_j, r_j, inst.lambda[j], inst.cap);
        for (int k = 0; k < inst.K; ++k)
            p[static_cast<std::size_t>(k) * inst.N + j] = wf.p[k];
    }
    return p;
}

void update_loads(std::vector<std::vector<double>>& s,
                  const ControlInstance& inst, const std::vector<double>& q_flat,
                  const LoadSpillageParams& params, LoadUpdateState* state) {
    if (state && state->step_scale.empty()) {
        state->step_scale.assign(inst.receivers_total(), 1.0);
        state->prev_sign.assign(inst.receivers_total(), 0);
    }
    for (int k = 0; k < inst.K; ++k) {
        const int off = inst.q_offset(k);
        for (int i = 0; i < inst.M[k]; ++i) {
            double& sv = s[k][i];
            const double target = inst.target[k][i];
            if (target <= 0.0) {
                sv = params.s_max;
                continue;
            }
            const double q = q_flat[off + i];
            const double ratio =
                q / (target * db_to_linear(-params.margin_db));
            if (ratio <= 0.0) {
                sv = params.s_min;
                if (state) state->prev_sign[off + i] = 0;
                continue;
            }
            double step = 1.0;
            if (state) {
                double& scale = state->step_scale[off + i];
                signed char& prev = state->prev_sign[off + i];
                const signed char sign =
                    ratio > 1.0 ? 1 : (ratio < 1.0 ? -1 : 0);
                if (sign != 0 && prev != 0) {
                    scale = sign == prev
                                ? std::min(1.0, scale * 1.5)
                                : std::max(params.adapt_min, scale * 0.6);
                }
                prev = sign;
                step = scale;
            }
            sv *= std::pow(ratio, params.beta * step);
            sv = std::clamp(sv, params.s_min, params.s_max);
        }
    }
}

namespace {

IterationStats summarize_iteration(const ControlInstance& inst,
                                   const std::vector<double>& q_flat,
                                   int iteration) {
    IterationStats stats;
    stats.iteration = iteration;
    const double tol = db_to_linear(0.1);
    int within = 0, total = 0;
    double worst = 0.0;
    for (int k = 0; k < inst.K; ++k) {
        const int off = inst.q_offset(k);
        for (int i = 0; i < inst.M[k]; ++i) {
            const double target = inst.target[k][i];
            if (target <= 0.0) continue;
            ++total;
            const double q = q_flat[off + i];
            if (q <= target * tol) ++within;
            if (q > target) worst = std::max(worst, linear_to_db(q / target));
        }
    }
    stats.frac_within_tol = total > 0 ? static_cast<double>(within) / total : 1.0;
    stats.max_over_db = worst;
    return stats;
}

}  // namespace

LoadSpillageResult run_load_spillage(const ControlInstance& inst,
                                     const LoadSpillageParams& params,
                                     const NoiseRefresh& refresh,
                                     std::vector<TraceRow>* full_trace) {
    LoadSpillageResult result;
    result.s.assign(inst.K, {});
    for (int k = 0; k < inst.K; ++k)
        result.s[k].assign(inst.M[k], params.s_init);
    if (!inst.s.empty()) result.s = inst.s;

    ControlInstance work = inst;  // e[j][k] is refreshed in place
    result.p_flat.assign(static_cast<std::size_t>(inst.K) * inst.N, 0.0);
    result.q_flat.assign(inst.receivers_total(), 0.0);
    std::vector<double> q_bar(result.q_flat);  // filtered measurement
    LoadUpdateState adapt;

    std::vector<double> r_bar;  // damped spillage prices
    for (int iter = 0; iter < params.iterations; ++iter) {
        if (refresh) refresh(result.p_flat, work.e);
        std::vector<double> r = compute_spillage(work, result.s);
        if (params.price_smoothing < 1.0 && iter > 0) {
            const double g = params.price_smoothing;
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (r[i] > 0.0 && r_bar[i] > 0.0)
                    r[i] = std::exp((1.0 - g) * std::log(r_bar[i]) +
                                    g * std::log(r[i]));
            }
        }
        r_bar = r;
        result.p_flat = waterfill_all(work, r);
        result.q_flat = compute_interference(work, result.p_flat);
        if (iter == 0 || params.measure_smoothing >= 1.0) {
            q_bar = result.q_flat;
        } else {
            const double g = params.measure_smoothing;
            for (std::size_t i = 0; i < q_bar.size(); ++i) {
                if (result.q_flat[i] <= 0.0 || q_bar[i] <= 0.0)
                    q_bar[i] = result.q_flat[i];
                else
                    q_bar[i] = std::exp((1.0 - g) * std::log(q_bar[i]) +
                                        g * std::log(result.q_flat[i]));
            }
        }
        update_loads(result.s, work, q_bar, params, &adapt);
        result.trace.push_back(
            summarize_iteration(work, result.q_flat, iter + 1));
        if (full_trace) {
            for (int k = 0; k < inst.K; ++k) {
                const int off = inst.q_offset(k);
                for (int i = 0; i < inst.M[k]; ++i) {
                    const double q = result.q_flat[off + i];
                    const double target = work.target[k][i];
                    full_trace->push_back(TraceRow{
                        iter + 1, k, i,
                        q > 0 ? linear_to_db(q) : -999.0,
                        target > 0 ? linear_to_db(target) : -999.0,
                        result.s[k][i]});
                }
            }
        }
    }
    return result;
}

double dl_interference_target(double signal, double femto_free_floor,
                              double gap_linear, double max_se,
                              double loss_fraction) {
    if (signal <= 0.0) return 0.0;
    const double x = signal / (gap_linear * femto_free_floor);
    const double x_cap = std::pow(2.0, max_se) - 1.0;
    if (x >= x_cap) {
        // Already at the rate cap: allow interference up to the point where
        // the cap would be lost.
        return signal / (gap_linear * x_cap) - femto_free_floor;
    }
    const double c = std::pow(1.0 + x, 1.0 - loss_fraction);
    return signal / (gap_linear * (c - 1.0)) - femto_free_floor;
}

double ul_interference_target(double femto_free_floor, double rise_db) {
    return (db_to_linear(rise_db) - 1.0) * femto_free_floor;
}

ParetoVerdict pareto_oracle(const ControlInstance& inst,
                            const std::vector<double>& p_flat) {
    const int N = inst.N, K = inst.K;
    const int NK = N * K;
    const std::vector<double> r = compute_spillage(inst, inst.s);
    const std::vector<double> q0 = compute_interference(inst, p_flat);

    std::vector<double> u0(N);
    std::vector<double> p_j(K), e_j(K);
    for (int j = 0; j < N; ++j) {
        for (int k = 0; k < K; ++k) {
            p_j[k] = p_flat[static_cast<std::size_t>(k) * N + j];
            e_j[k] = inst.e[j][k];
        }
        u0[j] = utility(inst.weights, e_j, p_j);
    }

    // Perturbation step per coordinate: a small fraction of the larger of
    // the current power and the power scale the budget implies.
    std::vector<double> delta(NK);
    for (int k = 0; k < K; ++k) {
        for (int j = 0; j < N; ++j) {
            const std::size_t idx = static_cast<std::size_t>(k) * N + j;
            const double scale =
                inst.lambda[j] / (K * r[idx]);
            delta[idx] = 1e-3 * std::max(p_flat[idx], scale);
        }
    }

    double q_scale = 0.0;
    for (double q : q0) q_scale = std::max(q_scale, q);
    const double tol_q = 1e-9 * (1.0 + q_scale);
    std::vector<double> tol_u(N);
    for (int j = 0; j < N; ++j) tol_u[j] = 1e-9 * (1.0 + std::abs(u0[j]));

    // Odometer over multipliers {-4..4} per coordinate.
    std::vector<int> m(NK, -4);
    std::vector<double> p_try(p_flat.size());
    const long long total = [&] {
        long long t = 1;
        for (int i = 0; i < NK; ++i) t *= 9;
        return t;
    }();
    for (long long step = 0; step < total; ++step) {
        bool all_zero = true, valid = true;
        for (int i = 0; i < NK; ++i) {
            if (m[i] != 0) all_zero = false;
            const double v = p_flat[i] + m[i] * delta[i];
            if (v < 0.0 || v > inst.cap) {
                valid = false;
                break;
            }
            p_try[i] = v;
        }
        if (!all_zero && valid) {
            bool weakly_ok = true, strict = false;
            // Interference first: every receiver must not get worse.
            int off = 0;
            for (int k = 0; k < K && weakly_ok; ++k) {
                const double* Gk = inst.G[k].data();
                for (int i = 0; i < inst.M[k]; ++i) {
                    double q = 0.0;
                    for (int j = 0; j < N; ++j)
                        q += Gk[static_cast<std::size_t>(i) * N + j] *
                             p_try[static_cast<std::size_t>(k) * N + j];
                    if (q > q0[off + i] + tol_q) {
                        weakly_ok = false;
                        break;
                    }
                    if (q < q0[off + i] - tol_q) strict = true;
                }
                off += inst.M[k];
            }
            if (weakly_ok) {
                for (int j = 0; j < N && weakly_ok; ++j) {
                    for (int k = 0; k < K; ++k) {
                        p_j[k] = p_try[static_cast<std::size_t>(k) * N + j];
                        e_j[k] = inst.e[j][k];
                    }
                    const double u = utility(inst.weights, e_j, p_j);
                    if (u < u0[j] - tol_u[j]) weakly_ok = false;
                    if (u > u0[j] + tol_u[j]) strict = true;
                }
            }
            if (weakly_ok && strict) {
                std::ostringstream witness;
                witness << "improving direction found: multipliers [";
                for (int i = 0; i < NK; ++i)
                    witness << m[i] << (i + 1 < NK ? " " : "]");
                return ParetoVerdict{false, witness.str()};
            }
        }
        // advance odometer
        for (int i = 0; i < NK; ++i) {
            if (m[i] < 4) {
                m[i]++;
                break;
            }
            m[i] = -4;
        }
    }
    return ParetoVerdict{true, ""};
}

KktRecovery kkt_recover(const ControlInstance& inst,
                        const std::vector<double>& p_flat) {
    const int N = inst.N, K = inst.K;
    const int num_s = inst.receivers_total();
    const int cols = N + num_s;

    // Stationarity rows t_j dU_j/dp_jk - sum_i s_ik G_ijk = 0, one per
    // strictly positive power coordinate, rows normalized to unit length.
    std::vector<Eigen::VectorXd> rows;
    for (int j = 0; j < N; ++j) {
        for (int k = 0; k < K; ++k) {
            const double p = p_flat[static_cast<std::size_t>(k) * N + j];
            if (p <= 0.0) continue;
            Eigen::VectorXd row = Eigen::VectorXd::Zero(cols);
            row(j) = utility_gradient(inst.weights[k], inst.e[j][k], p);
            const int off = inst.q_offset(k);
            for (int i = 0; i < inst.M[k]; ++i) {
                row(N + off + i) =
                    -inst.G[k][static_cast<std::size_t>(i) * N + j];
            }
            const double norm = row.norm();
            if (norm > 0.0) rows.push_back(row / norm);
        }
    }
    if (rows.empty())
        throw std::invalid_argument("kkt_recover: no interior coordinates");

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(cols, cols);
    for (const auto& row : rows) A += row * row.transpose();

    // min w^T A w over the nonnegative unit sphere, solved exactly by
    // enumerating supports: on the optimal support the minimizer is the
    // smallest eigenvector of the principal submatrix, it must be
    // nonnegative, and the off-support gradient (A w)_i must be >= 0.
    double best_mu = std::numeric_limits<double>::infinity();
    int best_support_size = 0;
    Eigen::VectorXd best_w;
    std::vector<int> support;
    const double a_scale = A.cwiseAbs().maxCoeff();
    for (unsigned mask = 1; mask < (1u << cols); ++mask) {
        support.clear();
        for (int i = 0; i < cols; ++i)
            if (mask & (1u << i)) support.push_back(i);
        const int sz = static_cast<int>(support.size());
        Eigen::MatrixXd sub(sz, sz);
        for (int i = 0; i < sz; ++i)
            for (int jj = 0; jj < sz; ++jj)
                sub(i, jj) = A(support[i], support[jj]);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sub);
        const double mu = eig.eigenvalues()(0);
        Eigen::VectorXd v = eig.eigenvectors().col(0);
        if (v.sum() < 0.0) v = -v;
        if (v.minCoeff() < -1e-10) continue;
        v = v.cwiseMax(0.0);
        const double vnorm = v.norm();
        if (vnorm <= 0.0) continue;
        v /= vnorm;
        Eigen::VectorXd w = Eigen::VectorXd::Zero(cols);
        for (int i = 0; i < sz; ++i) w(support[i]) = v(i);
        const Eigen::VectorXd g = A * w;
        bool off_ok = true;
        for (int i = 0; i < cols && off_ok; ++i) {
            if (!(mask & (1u << i)) && g(i) < -1e-9 * a_scale) off_ok = false;
        }
        if (!off_ok) continue;
        const double mu_true = w.dot(g);
        const bool better =
            mu_true < best_mu - 1e-15 * a_scale ||
            (mu_true <= best_mu + 1e-15 * a_scale && sz > best_support_size);
        if (better) {
            best_mu = std::min(mu_true, best_mu);
            best_support_size = sz;
            best_w = w;
        }
    }

    if (best_w.size() == 0) {
        // Degenerate eigenspaces can make every support's eigenvector mix
        // signs; fall back to the clamped global eigenvector (upper bound
        // on the true minimum, still a valid certificate residual).
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
        Eigen::VectorXd v = eig.eigenvectors().col(0);
        if (v.sum() < 0.0) v = -v;
        v = v.cwiseMax(0.0);
        if (v.norm() <= 0.0) v = Eigen::VectorXd::Ones(cols);
        best_w = v / v.norm();
        best_mu = best_w.dot(A * best_w);
    }

    KktRecovery out;
    out.residual = std::sqrt(std::max(0.0, best_mu));
    out.t.assign(N, 0.0);
    for (int j = 0; j < N; ++j) out.t[j] = best_w(j);
    out.s.assign(K, {});
    for (int k = 0; k < K; ++k) {
        out.s[k].assign(inst.M[k], 0.0);
        const int off = inst.q_offset(k);
        for (int i = 0; i < inst.M[k]; ++i) out.s[k][i] = best_w(N + off + i);
    }
    return out;
}

ControlInstance random_instance(Rng& rng, const InstanceOptions& opt) {
    for (int attempt = 0; attempt < 500; ++attempt) {
        ControlInstance inst;
        inst.N = 1 + static_cast<int>(rng.uniform_index(opt.max_transmitters));
        inst.K = 1 + static_cast<int>(rng.uniform_index(opt.max_subbands));
        inst.M.resize(inst.K);
        inst.G.resize(inst.K);
        inst.s.resize(inst.K);
        const double half_db = opt.gain_spread_db / 2.0;
        for (int k = 0; k < inst.K; ++k) {
            inst.M[k] = 1 + static_cast<int>(rng.uniform_index(opt.max_receivers));
            inst.G[k].resize(static_cast<std::size_t>(inst.M[k]) * inst.N);
            for (double& g : inst.G[k])
                g = db_to_linear(rng.uniform(-half_db, half_db));
            inst.s[k].resize(inst.M[k]);
            for (double& v : inst.s[k]) v = db_to_linear(rng.uniform(-10.0, 10.0));
        }
        inst.e.assign(inst.N, std::vector<double>(inst.K));
        for (auto& row : inst.e)
            for (double& v : row) v = db_to_linear(rng.uniform(-15.0, 5.0));
        double wsum = 0.0;
        inst.weights.resize(inst.K);
        for (double& w : inst.weights) {
            w = rng.uniform(0.5, 1.5);
            wsum += w;
        }
        for (double& w : inst.weights) w /= wsum;
        inst.lambda.resize(inst.N);
        for (double& l : inst.lambda) l = db_to_linear(rng.uniform(-5.0, 5.0));

        if (!opt.force_interior) return inst;
        const std::vector<double> r = compute_spillage(inst, inst.s);
        const std::vector<double> p = waterfill_all(inst, r);
        bool interior = true;
        for (int k = 0; k < inst.K && interior; ++k) {
            for (int j = 0; j < inst.N; ++j) {
                const double scale = inst.lambda[j] /
                                     (inst.K * r[static_cast<std::size_t>(k) * inst.N + j]);
                if (p[static_cast<std::size_t>(k) * inst.N + j] < 1e-6 * scale) {
                    interior = false;
                    break;
                }
            }
        }
        if (interior) return inst;
    }
    throw std::runtime_error("random_instance: no interior instance found");
}

}  // namespace femtoffr
