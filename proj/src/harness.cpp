#include "femtoffr/harness.hpp"

#include <zlib.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "femtoffr/kernels.hpp"
#include "femtoffr/macro_layer.hpp"

namespace femtoffr {

namespace {

using ordered_json = nlohmann::ordered_json;

struct MacroContext {
    SubbandPlan plan;
    MacroSchedule sched;
};

MacroContext build_macro_context(const DropBundle& bundle,
                                 const ScenarioConfig& cfg, bool reuse1) {
    MacroContext ctx;
    ctx.plan = reuse1 ? make_plan_reuse1(bundle.drop)
                      : make_plan_ffr4(bundle.drop, cfg.control.p1);
    ctx.sched = assign_macro_ues(bundle.drop, ctx.plan, bundle.tables,
                                 cfg.channel);
    set_dl_powers(ctx.sched, bundle.drop, ctx.plan, cfg.channel);
    compute_dl_conditions(ctx.sched, bundle.drop, ctx.plan, bundle.tables);
    set_ul_powers(ctx.sched, bundle.drop, ctx.plan, bundle.tables, cfg.channel,
                  cfg.control.macro);
    return ctx;
}

// One direction of one drop: the control problem, its solution, and the
// macro-side bookkeeping needed by every mode built on the same powers.
struct DirectionRun {
    ControlInstance inst;
    LoadSpillageResult ls;
    std::vector<std::vector<int>> receiver_ids;  // per subband: UE or cell ids
    std::vector<double> macro_base;  // [j*K + k] fixed macro PSD at femto rx
    std::vector<double> serving_gain;
    std::vector<double> cross_talk;  // [j*K + k] final femto cross-talk PSD
    std::vector<double> q_ue;        // per-UE femto interference PSD, W/Hz
    std::vector<double> rise_db;     // UL: per occupied (cell, subband)
    long long conv_within = 0;
    long long conv_total = 0;
    std::vector<double> macro_with;     // per-UE rate, bps
    std::vector<double> macro_without;  // femto-free reference, bps
    std::vector<double> macro_se_with;  // per-UE link spectral efficiency
    double cap_psd = 0.0;               // transmitter ceiling, W/Hz
    double rx_noise = 0.0;              // receiver thermal PSD, W/Hz
};

// Femto-to-femto cross-talk PSD at every femto receiver of `direction`,
// given normalized femto powers p_flat. out[j*K + k].
void femto_cross_talk(const DropBundle& bundle, int K, Direction direction,
                      double cap_psd, const std::vector<double>& p_flat,
                      std::vector<double>& out) {
    const int N = bundle.drop.num_femtos();
    out.assign(static_cast<std::size_t>(N) * K, 0.0);
    if (N == 0) return;
    const auto& t = bundle.tables.fbs_fue;
    std::vector<double> y(N);
    for (int k = 0; k < K; ++k) {
        std::fill(y.begin(), y.end(), 0.0);
        const double* pk = p_flat.data() + static_cast<std::size_t>(k) * N;
        if (direction == Direction::DL) {
            // Victim is the femto UE: received from every femto BS.
            kernels().gemv_t_acc(t.data(), pk, y.data(), N, N);
        } else {
            // Victim is the femto BS: received from every femto UE.
            kernels().gemv_acc(t.data(), pk, y.data(), N, N);
        }
        for (int j = 0; j < N; ++j) {
            const double own = bundle.tables.femto_serving_gain(j) * pk[j];
            out[static_cast<std::size_t>(j) * K + k] =
                cap_psd * std::max(0.0, y[j] - own);
        }
    }
}

DirectionRun run_direction(const DropBundle& bundle, const MacroContext& ctx,
                           const ScenarioConfig& cfg, Direction direction,
                           std::vector<TraceRow>* full_trace = nullptr) {
    const NetworkDrop& drop = bundle.drop;
    const LinkTables& tables = bundle.tables;
    const int N = drop.num_femtos();
    const int K = ctx.plan.K;
    const auto& mac = cfg.control.macro;

    DirectionRun run;
    run.cap_psd = direction == Direction::DL ? cfg.channel.femto_bs_cap_psd()
                                             : cfg.channel.femto_ue_cap_psd();
    run.rx_noise = direction == Direction::DL ? cfg.channel.ue_noise_psd()
                                              : cfg.channel.bs_noise_psd();

    ControlInstance& inst = run.inst;
    inst.N = N;
    inst.K = K;
    inst.weights = ctx.plan.width;
    inst.lambda.assign(N, cfg.control.lambda);
    inst.cap = 1.0;
    inst.M.resize(K);
    inst.G.resize(K);
    inst.target.resize(K);
    run.receiver_ids.resize(K);

    // Victim receivers and normalized cross-tier gains / targets.
    if (direction == Direction::DL) {
        for (int u = 0; u < drop.num_ues(); ++u)
            run.receiver_ids[ctx.sched.subband[u]].push_back(u);
        for (int k = 0; k < K; ++k) {
            const auto& ids = run.receiver_ids[k];
            inst.M[k] = static_cast<int>(ids.size());
            inst.G[k].resize(static_cast<std::size_t>(ids.size()) * N);
            inst.target[k].resize(ids.size());
            for (std::size_t i = 0; i < ids.size(); ++i) {
                const int u = ids[i];
                for (int j = 0; j < N; ++j) {
                    inst.G[k][i * N + j] = tables.fbs_mue_gain(j, u) *
                                           run.cap_psd / run.rx_noise;
                }
                const double floor =
                    ctx.sched.dl_interference[u] + run.rx_noise;
                inst.target[k][i] =
                    dl_interference_target(ctx.sched.dl_signal[u], floor,
                                           mac.gap_linear, mac.max_se,
                                           cfg.control.dl_rate_loss_fraction) /
                    run.rx_noise;
            }
        }
    } else {
        for (int k = 0; k < K; ++k) {
            for (int c = 0; c < drop.num_cells(); ++c)
                if (ctx.sched.cell_occupied(c, k))
                    run.receiver_ids[k].push_back(c);
            const auto& ids = run.receiver_ids[k];
            inst.M[k] = static_cast<int>(ids.size());
            inst.G[k].resize(static_cast<std::size_t>(ids.size()) * N);
            inst.target[k].resize(ids.size());
            for (std::size_t i = 0; i < ids.size(); ++i) {
                const int c = ids[i];
                for (int j = 0; j < N; ++j) {
                    inst.G[k][i * N + j] = tables.fue_cell_gain(j, c) *
                                           run.cap_psd / run.rx_noise;
                }
                const double floor =
                    ctx.sched.ul_floor[static_cast<std::size_t>(c) * K + k];
                inst.target[k][i] =
                    ul_interference_target(floor, cfg.control.ul_rise_db) /
                    run.rx_noise;
            }
        }
    }

    // Fixed macro-tier interference at the femto receivers.
    run.serving_gain.resize(N);
    run.macro_base.assign(static_cast<std::size_t>(N) * K, 0.0);
    for (int j = 0; j < N; ++j) {
        run.serving_gain[j] = tables.femto_serving_gain(j);
        for (int k = 0; k < K; ++k) {
            double acc = 0.0;
            if (direction == Direction::DL) {
                for (int c = 0; c < drop.num_cells(); ++c) {
                    const double psd =
                        ctx.sched
                            .cell_dl_psd[static_cast<std::size_t>(c) * K + k];
                    if (psd > 0.0) acc += psd * tables.fue_cell_gain(j, c);
                }
            } else {
                for (int u = 0; u < drop.num_ues(); ++u) {
                    if (ctx.sched.subband[u] != k) continue;
                    acc += ctx.sched.share[u] * ctx.sched.ul_psd[u] *
                           tables.fbs_mue_gain(j, u);
                }
            }
            run.macro_base[static_cast<std::size_t>(j) * K + k] = acc;
        }
    }

    inst.e.assign(N, std::vector<double>(K, 1.0));
    std::vector<double> scratch;
    const auto refresh = [&](const std::vector<double>& p_flat,
                             std::vector<std::vector<double>>& e) {
        femto_cross_talk(bundle, K, direction, run.cap_psd, p_flat, scratch);
        for (int j = 0; j < N; ++j) {
            for (int k = 0; k < K; ++k) {
                const double floor =
                    run.rx_noise +
                    run.macro_base[static_cast<std::size_t>(j) * K + k] +
                    scratch[static_cast<std::size_t>(j) * K + k];
                e[j][k] = mac.gap_linear * floor /
                          (run.cap_psd * run.serving_gain[j]);
            }
        }
    };

    run.ls = run_load_spillage(inst, cfg.control.loads, refresh, full_trace);
    femto_cross_talk(bundle, K, direction, run.cap_psd, run.ls.p_flat,
                     run.cross_talk);

    // Convergence bookkeeping and per-UE interference mapping.
    const double tol = db_to_linear(0.1);
    run.q_ue.assign(drop.num_ues(), 0.0);
    for (int k = 0; k < K; ++k) {
        const int off = inst.q_offset(k);
        for (std::size_t i = 0; i < run.receiver_ids[k].size(); ++i) {
            const double q_hat = run.ls.q_flat[off + i];
            const double t_hat = inst.target[k][static_cast<int>(i)];
            ++run.conv_total;
            if (q_hat <= t_hat * tol) ++run.conv_within;
            const double q_raw = q_hat * run.rx_noise;
            if (direction == Direction::DL) {
                run.q_ue[run.receiver_ids[k][i]] = q_raw;
            } else {
                const int c = run.receiver_ids[k][i];
                const double floor =
                    ctx.sched.ul_floor[static_cast<std::size_t>(c) * K + k];
                run.rise_db.push_back(
                    linear_to_db((floor + q_raw) / floor));
                for (int u = 0; u < drop.num_ues(); ++u) {
                    if (drop.macro_ues[u].serving_cell == c &&
                        ctx.sched.subband[u] == k)
                        run.q_ue[u] = q_raw;
                }
            }
        }
    }

    run.macro_with = macro_rates(ctx.sched, drop, ctx.plan, cfg.channel, mac,
                                 direction, run.q_ue);
    run.macro_without = macro_rates(ctx.sched, drop, ctx.plan, cfg.channel,
                                    mac, direction, {});
    run.macro_se_with.resize(drop.num_ues());
    for (int u = 0; u < drop.num_ues(); ++u) {
        const double bw = ctx.sched.share[u] *
                          ctx.plan.width[ctx.sched.subband[u]] *
                          cfg.channel.system_bandwidth_hz;
        run.macro_se_with[u] = bw > 0.0 ? run.macro_with[u] / bw : 0.0;
    }
    return run;
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

// Precomputed macro-side context shared by every femto budget of a run.
struct ItemContext {
    std::vector<double> cell_se;            // [c*K + k], share-weighted
    std::vector<std::vector<int>> ues_of;   // per subband: transmitting UEs
};

ItemContext build_item_context(const NetworkDrop& drop, const MacroContext& ctx,
                               const DirectionRun& run) {
    const int K = ctx.plan.K;
    ItemContext items;
    items.cell_se.assign(static_cast<std::size_t>(drop.num_cells()) * K, 0.0);
    items.ues_of.resize(K);
    for (int u = 0; u < drop.num_ues(); ++u) {
        const int k = ctx.sched.subband[u];
        const int c = drop.macro_ues[u].serving_cell;
        items.cell_se[static_cast<std::size_t>(c) * K + k] +=
            ctx.sched.share[u] * run.macro_se_with[u];
        items.ues_of[k].push_back(u);
    }
    return items;
}

// Femto link budgets for the subband modes; item rates let the decoder
// model subtract the strongest macro interferer.
LinkBudget femto_budget(const DropBundle& bundle, const MacroContext& ctx,
                        const DirectionRun& run, const ItemContext& items,
                        Direction direction, int j) {
    const NetworkDrop& drop = bundle.drop;
    const LinkTables& tables = bundle.tables;
    const int K = ctx.plan.K;
    LinkBudget budget;
    budget.weights = ctx.plan.width;
    budget.subbands.resize(K);
    for (int k = 0; k < K; ++k) {
        SubbandBudget& b = budget.subbands[k];
        const double p_hat =
            run.ls.p_flat[static_cast<std::size_t>(k) * drop.num_femtos() + j];
        b.own_power = run.cap_psd * p_hat * run.serving_gain[j];
        b.noise = run.rx_noise;
        b.other_interference =
            run.cross_talk[static_cast<std::size_t>(j) * K + k];
        if (direction == Direction::DL) {
            for (int c = 0; c < drop.num_cells(); ++c) {
                const double psd =
                    ctx.sched.cell_dl_psd[static_cast<std::size_t>(c) * K + k];
                if (psd <= 0.0) continue;
                b.items.push_back(
                    {psd * tables.fue_cell_gain(j, c),
                     items.cell_se[static_cast<std::size_t>(c) * K + k]});
            }
        } else {
            for (int u : items.ues_of[k]) {
                const double power = ctx.sched.share[u] * ctx.sched.ul_psd[u] *
                                     tables.fbs_mue_gain(j, u);
                if (power <= 0.0) continue;
                b.items.push_back({power, run.macro_se_with[u]});
            }
        }
    }
    return budget;
}

RateReport base_report(const std::string& mode, Direction direction,
                       const DirectionRun& run) {
    RateReport rep;
    rep.mode = mode;
    rep.direction = direction == Direction::DL ? "dl" : "ul";
    rep.macro_mean_rate_with = mean(run.macro_with);
    rep.macro_mean_rate_without = mean(run.macro_without);
    rep.macro_mean_loss =
        rep.macro_mean_rate_without > 0.0
            ? 1.0 - rep.macro_mean_rate_with / rep.macro_mean_rate_without
            : 0.0;
    rep.conv_within = run.conv_within;
    rep.conv_total = run.conv_total;
    rep.frac_converged =
        run.conv_total > 0
            ? static_cast<double>(run.conv_within) / run.conv_total
            : 1.0;
    rep.noise_rise_db = run.rise_db;
    return rep;
}

RateReport evaluate_subband(const DropBundle& bundle, const MacroContext& ctx,
                            const DirectionRun& run, Direction direction,
                            const ScenarioConfig& cfg, bool joint_detection,
                            const std::string& mode) {
    const auto& mac = cfg.control.macro;
    RateReport rep = base_report(mode, direction, run);
    const ItemContext items = build_item_context(bundle.drop, ctx, run);
    rep.femto_se.resize(bundle.drop.num_femtos());
    for (int j = 0; j < bundle.drop.num_femtos(); ++j) {
        const LinkBudget budget =
            femto_budget(bundle, ctx, run, items, direction, j);
        rep.femto_se[j] =
            joint_detection
                ? femto_rate_jd(budget, mac.gap_linear, mac.max_se)
                : femto_rate_ian(budget, mac.gap_linear, mac.max_se);
    }
    return rep;
}

// Dedicated-spectrum reference: the short-range tier gets the bandwidth
// fraction eta that the in-band scheme took from the macro tier, and the
// macro tier keeps the rest interference-free.
RateReport evaluate_orthog(const DropBundle& bundle, const DirectionRun& run,
                           Direction direction, const ScenarioConfig& cfg,
                           double eta) {
    const NetworkDrop& drop = bundle.drop;
    const auto& mac = cfg.control.macro;
    RateReport rep;
    rep.mode = "orthog";
    rep.direction = direction == Direction::DL ? "dl" : "ul";
    rep.eta = eta;
    rep.femto_se.assign(drop.num_femtos(), 0.0);
    rep.macro_mean_rate_without = mean(run.macro_without);
    rep.macro_mean_rate_with = (1.0 - std::max(0.0, eta)) *
                               rep.macro_mean_rate_without;
    rep.macro_mean_loss = std::max(0.0, eta);
    if (eta <= 0.0 || drop.num_femtos() == 0) return rep;

    const double device_power =
        direction == Direction::DL
            ? dbm_to_watts(cfg.channel.femto_bs_max_power_dbm)
            : dbm_to_watts(cfg.channel.femto_ue_max_power_dbm);
    const double psd = device_power / (eta * cfg.channel.system_bandwidth_hz);
    const LinkTables& tables = bundle.tables;
    for (int j = 0; j < drop.num_femtos(); ++j) {
        double interference = 0.0;
        for (int a = 0; a < drop.num_femtos(); ++a) {
            if (a == j) continue;
            const double gain = direction == Direction::DL
                                    ? tables.fbs_fue_gain(a, j)
                                    : tables.fbs_fue_gain(j, a);
            interference += psd * gain;
        }
        const double sinr = psd * tables.femto_serving_gain(j) /
                            (interference + run.rx_noise);
        const double se_band = link_se(sinr, mac.gap_linear, mac.max_se);
        if (se_band >= mac.max_se) ++rep.cap_links;
        rep.femto_se[j] = eta * se_band;
    }
    return rep;
}

bool wants(const ScenarioConfig& cfg, const std::string& mode) {
    return std::find(cfg.modes.begin(), cfg.modes.end(), mode) !=
           cfg.modes.end();
}

int resolve_workers(const ScenarioConfig& cfg) {
    if (const char* env = std::getenv("FEMTOFFR_WORKERS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    if (cfg.workers > 0) return cfg.workers;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

// Deterministic gzip bytes: fixed header fields, no filename, no mtime.
std::string gzip_bytes(const std::string& text) {
    z_stream strm{};
    if (deflateInit2(&strm, 6, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) !=
        Z_OK)
        throw std::runtime_error("deflateInit2 failed");
    gz_header header{};
    header.time = 0;
    header.os = 3;  // always "Unix" regardless of build host
    deflateSetHeader(&strm, &header);
    std::string out;
    out.resize(deflateBound(&strm, static_cast<uLong>(text.size())) + 32);
    strm.next_in =
        reinterpret_cast<Bytef*>(const_cast<char*>(text.data()));
    strm.avail_in = static_cast<uInt>(text.size());
    strm.next_out = reinterpret_cast<Bytef*>(out.data());
    strm.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&strm, Z_FINISH);
    if (rc != Z_STREAM_END) {
        deflateEnd(&strm);
        throw std::runtime_error("deflate failed");
    }
    out.resize(out.size() - strm.avail_out);
    deflateEnd(&strm);
    return out;
}

void split_key(const std::string& key, std::string& mode, std::string& dir) {
    const auto pos = key.rfind('_');
    mode = key.substr(0, pos);
    dir = key.substr(pos + 1);
}

}  // namespace

std::vector<RateReport> evaluate_drop(const ScenarioConfig& config,
                                      std::uint64_t drop_index) {
    const DropBundle bundle = build_complete_drop(
        config.topology, config.channel, config.rng_seed, drop_index);

    const bool need_subband = wants(config, "subband") ||
                              wants(config, "subband_jd") ||
                              wants(config, "orthog");
    const bool need_reuse1 = wants(config, "no_subband");

    std::vector<RateReport> reports;
    MacroContext ffr_ctx, r1_ctx;
    if (need_subband) ffr_ctx = build_macro_context(bundle, config, false);
    if (need_reuse1) r1_ctx = build_macro_context(bundle, config, true);

    for (const std::string& dir_name : config.directions) {
        const Direction direction =
            dir_name == "dl" ? Direction::DL : Direction::UL;
        if (need_subband) {
            const DirectionRun run =
                run_direction(bundle, ffr_ctx, config, direction);
            RateReport sub = evaluate_subband(bundle, ffr_ctx, run, direction,
                                              config, false, "subband");
            if (wants(config, "subband")) reports.push_back(sub);
            if (wants(config, "subband_jd"))
                reports.push_back(evaluate_subband(bundle, ffr_ctx, run,
                                                   direction, config, true,
                                                   "subband_jd"));
            if (wants(config, "orthog"))
                reports.push_back(evaluate_orthog(bundle, run, direction,
                                                  config,
                                                  sub.macro_mean_loss));
        }
        if (need_reuse1) {
            const DirectionRun run =
                run_direction(bundle, r1_ctx, config, direction);
            reports.push_back(evaluate_subband(bundle, r1_ctx, run, direction,
                                               config, false, "no_subband"));
        }
    }
    return reports;
}

AggregateReport run_scenario(const ScenarioConfig& config) {
    config.validate();
    AggregateReport report;
    report.config = config;

    const int n = config.num_drops;
    std::vector<std::vector<RateReport>> results(n);
    std::vector<std::string> errors(n);
    std::vector<char> failed(n, 0);

    std::atomic<int> next{0};
    const int workers = std::min(resolve_workers(config), n);
    auto worker = [&]() {
        for (;;) {
            const int d = next.fetch_add(1);
            if (d >= n) return;
            try {
                results[d] =
                    evaluate_drop(config, static_cast<std::uint64_t>(d));
            } catch (const std::exception& ex) {
                failed[d] = 1;
                errors[d] = ex.what();
            }
        }
    };
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    for (int d = 0; d < n; ++d) {
        if (failed[d]) {
            ++report.drops_failed;
            report.drop_errors.push_back("drop " + std::to_string(d) + ": " +
                                         errors[d]);
            continue;
        }
        ++report.drops_completed;
        for (const RateReport& rep : results[d]) {
            AggregateEntry& entry =
                report.entries[rep.mode + "_" + rep.direction];
            entry.femto_se.insert(entry.femto_se.end(), rep.femto_se.begin(),
                                  rep.femto_se.end());
            entry.macro_rate_with_sum += rep.macro_mean_rate_with;
            entry.macro_rate_without_sum += rep.macro_mean_rate_without;
            entry.conv_within += rep.conv_within;
            entry.conv_total += rep.conv_total;
            entry.noise_rise_db.insert(entry.noise_rise_db.end(),
                                       rep.noise_rise_db.begin(),
                                       rep.noise_rise_db.end());
            if (rep.mode == "orthog") entry.eta_per_drop.push_back(rep.eta);
            entry.cap_links += rep.cap_links;
        }
    }

    if (report.drops_failed * 10 > n) {
        std::string what = "scenario failed: " +
                           std::to_string(report.drops_failed) + "/" +
                           std::to_string(n) + " drops aborted";
        for (const auto& e : report.drop_errors) what += "\n  " + e;
        throw std::runtime_error(what);
    }
    return report;
}

std::string summary_json(const AggregateReport& report) {
    ordered_json doc;
    doc["schema_version"] = 1;
    doc["seed"] = report.config.rng_seed;
    doc["num_drops"] = report.config.num_drops;
    doc["drops_completed"] = report.drops_completed;
    doc["drops_failed"] = report.drops_failed;
    doc["modes"] = report.config.modes;
    doc["directions"] = report.config.directions;

    ordered_json results = ordered_json::object();
    for (const auto& [key, entry] : report.entries) {
        ordered_json node;
        node["num_links"] = entry.femto_se.size();
        ordered_json stats;
        stats["mean"] = mean(entry.femto_se);
        for (double p : {5.0, 10.0, 25.0, 50.0, 75.0, 90.0, 95.0}) {
            const std::string name = "p" + std::to_string(static_cast<int>(p));
            stats[name] = entry.femto_se.empty()
                              ? 0.0
                              : percentile(entry.femto_se, p);
        }
        node["femto_se"] = stats;
        node["macro_mean_rate_with_bps"] =
            report.drops_completed > 0
                ? entry.macro_rate_with_sum / report.drops_completed
                : 0.0;
        node["macro_mean_rate_without_bps"] =
            report.drops_completed > 0
                ? entry.macro_rate_without_sum / report.drops_completed
                : 0.0;
        node["macro_mean_loss"] = entry.macro_mean_loss();
        node["frac_converged"] = entry.frac_converged();
        if (!entry.noise_rise_db.empty()) {
            node["noise_rise_db_p95"] =
                percentile(entry.noise_rise_db, 95.0);
            node["noise_rise_db_max"] =
                *std::max_element(entry.noise_rise_db.begin(),
                                  entry.noise_rise_db.end());
        }
        if (!entry.eta_per_drop.empty()) {
            node["eta_mean"] = mean(entry.eta_per_drop);
            node["cap_mass"] =
                entry.femto_se.empty()
                    ? 0.0
                    : static_cast<double>(entry.cap_links) /
                          static_cast<double>(entry.femto_se.size());
        }
        results[key] = node;
    }
    doc["results"] = results;
    return doc.dump(2) + "\n";
}

void emit_reports(const AggregateReport& report, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    for (const auto& [key, entry] : report.entries) {
        std::vector<double> sorted = entry.femto_se;
        std::sort(sorted.begin(), sorted.end());
        std::ostringstream csv;
        csv << "se,cdf\n";
        const auto n = sorted.size();
        for (std::size_t i = 0; i < n; ++i) {
            csv << format_double(sorted[i]) << ','
                << format_double(static_cast<double>(i + 1) /
                                 static_cast<double>(n))
                << '\n';
        }
        write_file(fs::path(out_dir) / ("cdf_" + key + ".csv"), csv.str());
    }

    write_file(fs::path(out_dir) / "summary.json", summary_json(report));

    std::ostringstream raw;
    raw << "drop,mode,direction,link,se\n";
    const int links_per_drop =
        report.config.topology.femtos_per_cell > 0
            ? report.config.topology.num_site_rows *
                  report.config.topology.num_site_cols *
                  report.config.topology.sectors_per_site *
                  report.config.topology.femtos_per_cell
            : 0;
    for (const auto& [key, entry] : report.entries) {
        std::string mode, dir;
        split_key(key, mode, dir);
        for (std::size_t i = 0; i < entry.femto_se.size(); ++i) {
            const std::size_t drop =
                links_per_drop > 0 ? i / links_per_drop : 0;
            const std::size_t link =
                links_per_drop > 0 ? i % links_per_drop : i;
            raw << drop << ',' << mode << ',' << dir << ',' << link << ','
                << format_double(entry.femto_se[i]) << '\n';
        }
    }
    std::ofstream gz(fs::path(out_dir) / "raw_links.csv.gz",
                     std::ios::binary);
    if (!gz) throw std::runtime_error("cannot write raw_links.csv.gz");
    const std::string bytes = gzip_bytes(raw.str());
    gz.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<TraceRow> trace_drop(const ScenarioConfig& config,
                                 std::uint64_t drop_index,
                                 Direction direction) {
    const DropBundle bundle = build_complete_drop(
        config.topology, config.channel, config.rng_seed, drop_index);
    const MacroContext ctx = build_macro_context(bundle, config, false);
    std::vector<TraceRow> rows;
    run_direction(bundle, ctx, config, direction, &rows);
    return rows;
}

VerifySummary run_verify(int instances, std::uint64_t seed) {
    VerifySummary summary;
    InstanceOptions opt;
    opt.force_interior = true;
    for (int i = 0; i < instances; ++i) {
        Rng rng(Rng::substream(seed, static_cast<std::uint64_t>(i), 3));
        // Require as many interior stationarity equations as multiplier
        // unknowns; smaller shapes make every positive power vector
        // stationary for some valid multipliers, which is mathematically
        // fine but useless for telling optima from perturbed points.
        ControlInstance inst;
        for (int attempt = 0;; ++attempt) {
            inst = random_instance(rng, opt);
            if (inst.N * inst.K >= inst.N + inst.receivers_total()) break;
            if (attempt > 500)
                throw std::runtime_error("no discriminating instance shape");
        }
        const std::vector<double> r = compute_spillage(inst, inst.s);
        const std::vector<double> p = waterfill_all(inst, r);

        ++summary.pareto_total;
        if (pareto_oracle(inst, p).pass) ++summary.pareto_pass;

        ++summary.kkt_total;
        const KktRecovery at_opt = kkt_recover(inst, p);
        // Checkerboard distortion across (transmitter, subband). Uniform
        // per-transmitter scalings are absorbed by t_j and uniform
        // per-subband scalings by that subband's s multipliers (both exactly
        // so in the high-SNR limit), so the distortion must alternate along
        // both axes to be genuinely non-stationary.
        std::vector<double> perturbed = p;
        for (int k = 0; k < inst.K; ++k)
            for (int j = 0; j < inst.N; ++j)
                perturbed[static_cast<std::size_t>(k) * inst.N + j] *=
                    ((j + k) % 2 == 0) ? 1.4 : 1.0 / 1.4;
        const KktRecovery off_opt = kkt_recover(inst, perturbed);
        summary.worst_residual_optimal =
            std::max(summary.worst_residual_optimal, at_opt.residual);
        summary.best_residual_perturbed =
            std::min(summary.best_residual_perturbed, off_opt.residual);
        if (at_opt.residual < 1e-6 && off_opt.residual > 1e-3)
            ++summary.kkt_pass;
    }
    return summary;
}

}  // namespace femtoffr
