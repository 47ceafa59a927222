#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "femtoffr/harness.hpp"

namespace femtoffr {

namespace {

std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

int do_run(const ScenarioConfig& cfg) {
    const AggregateReport report = run_scenario(cfg);
    emit_reports(report, cfg.out_dir);
    for (const auto& [key, entry] : report.entries) {
        std::vector<double> se = entry.femto_se;
        const double med = se.empty() ? 0.0 : percentile(se, 50.0);
        std::printf(
            "%-14s median %5.2f bps/Hz  macro loss %5.2f%%  converged %6.2f%%\n",
            key.c_str(), med, 100.0 * entry.macro_mean_loss(),
            100.0 * entry.frac_converged());
    }
    if (report.drops_failed > 0)
        std::printf("note: %d/%d drops aborted\n", report.drops_failed,
                    cfg.num_drops);
    std::printf("reports written to %s\n", cfg.out_dir.c_str());
    return 0;
}

int do_verify(int instances, std::uint64_t seed) {
    const VerifySummary s = run_verify(instances, seed);
    std::printf("%d/%d pareto pass, %d/%d kkt pass\n", s.pareto_pass,
                s.pareto_total, s.kkt_pass, s.kkt_total);
    std::printf("residuals: optimizer max %.3e, perturbed min %.3e\n",
                s.worst_residual_optimal, s.best_residual_perturbed);
    return (s.pareto_pass == s.pareto_total && s.kkt_pass == s.kkt_total) ? 0
                                                                          : 1;
}

int do_trace(const ScenarioConfig& cfg, int drop_index,
             const std::string& dir_name) {
    const Direction direction =
        dir_name == "ul" ? Direction::UL : Direction::DL;
    const std::vector<TraceRow> rows =
        trace_drop(cfg, static_cast<std::uint64_t>(drop_index), direction);
    std::filesystem::create_directories(cfg.out_dir);
    const std::filesystem::path path =
        std::filesystem::path(cfg.out_dir) /
        ("trace_" + std::to_string(drop_index) + "_" + dir_name + ".csv");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "iteration,subband,receiver,q_db,target_db,s\n";
    char buf[160];
    for (const TraceRow& row : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.12g,%.12g,%.12g\n",
                      row.iteration, row.subband, row.receiver, row.q_db,
                      row.target_db, row.s);
        out << buf;
    }
    std::printf("trace written to %s (%zu rows)\n", path.string().c_str(),
                rows.size());
    return 0;
}

int do_compare(const std::string& path_a, const std::string& path_b) {
    auto load = [](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::invalid_argument("cannot read " + path);
        return nlohmann::json::parse(in);
    };
    const nlohmann::json a = load(path_a);
    const nlohmann::json b = load(path_b);
    if (!a.contains("results") || !b.contains("results"))
        throw std::invalid_argument("not a summary report");

    for (const auto& [key, node_a] : a["results"].items()) {
        if (!b["results"].contains(key)) {
            std::printf("%s: only in %s\n", key.c_str(), path_a.c_str());
            continue;
        }
        const auto& node_b = b["results"][key];
        for (const auto& [stat, value] : node_a["femto_se"].items()) {
            const double delta = node_b["femto_se"].value(stat, 0.0) -
                                 value.get<double>();
            std::printf("%s femto_se.%s delta %.12g\n", key.c_str(),
                        stat.c_str(), delta);
        }
        for (const char* stat : {"macro_mean_loss", "frac_converged"}) {
            if (!node_a.contains(stat) || !node_b.contains(stat)) continue;
            const double delta = node_b[stat].get<double>() -
                                 node_a[stat].get<double>();
            std::printf("%s %s delta %.12g\n", key.c_str(), stat, delta);
        }
    }
    for (const auto& [key, node_b] : b["results"].items()) {
        (void)node_b;
        if (!a["results"].contains(key))
            std::printf("%s: only in %s\n", key.c_str(), path_b.c_str());
    }
    return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Macro/femto subband simulator and power-control verifier"};
    app.require_subcommand(1);

    std::string config_path, out_dir, modes_csv, direction;
    long long seed = -1;
    int drops = -1, workers = -1;

    CLI::App* run = app.add_subcommand("run", "Monte-Carlo scenario run");
    run->add_option("--config", config_path, "JSON config file");
    run->add_option("--seed", seed, "RNG seed override");
    run->add_option("--drops", drops, "number of drops override");
    run->add_option("--modes", modes_csv, "comma-separated mode list");
    run->add_option("--direction", direction, "dl, ul or both")
        ->check(CLI::IsMember({"dl", "ul", "both"}));
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--workers", workers, "worker threads (0 = all cores)");

    int instances = 100;
    long long verify_seed = 1;
    CLI::App* verify = app.add_subcommand(
        "verify", "optimality oracles on random small instances");
    verify->add_option("--instances", instances, "number of instances");
    verify->add_option("--seed", verify_seed, "RNG seed");

    std::string trace_config, trace_out, trace_dir = "dl";
    long long trace_seed = -1;
    int trace_drop_index = 0;
    CLI::App* trace =
        app.add_subcommand("trace", "single-drop convergence trace");
    trace->add_option("--config", trace_config, "JSON config file");
    trace->add_option("--seed", trace_seed, "RNG seed override");
    trace->add_option("--drop", trace_drop_index, "drop index");
    trace->add_option("--direction", trace_dir, "dl or ul")
        ->check(CLI::IsMember({"dl", "ul"}));
    trace->add_option("--out", trace_out, "output directory");

    std::string cmp_a, cmp_b;
    CLI::App* compare =
        app.add_subcommand("compare", "percentile deltas of two reports");
    compare->add_option("report_a", cmp_a, "first summary.json")->required();
    compare->add_option("report_b", cmp_b, "second summary.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    // Configuration stage: every failure here is a usage error.
    ScenarioConfig cfg;
    try {
        if (*run) {
            if (!config_path.empty()) cfg = load_config(config_path);
            if (seed >= 0) cfg.rng_seed = static_cast<std::uint64_t>(seed);
            if (drops >= 0) cfg.num_drops = drops;
            if (!modes_csv.empty()) cfg.modes = split_csv(modes_csv);
            if (direction == "dl") cfg.directions = {"dl"};
            if (direction == "ul") cfg.directions = {"ul"};
            if (direction == "both") cfg.directions = {"dl", "ul"};
            if (!out_dir.empty()) cfg.out_dir = out_dir;
            if (workers >= 0) cfg.workers = workers;
            cfg.validate();
        } else if (*trace) {
            if (!trace_config.empty()) cfg = load_config(trace_config);
            if (trace_seed >= 0)
                cfg.rng_seed = static_cast<std::uint64_t>(trace_seed);
            if (!trace_out.empty()) cfg.out_dir = trace_out;
            if (trace_drop_index < 0)
                throw std::invalid_argument("--drop must be >= 0");
            cfg.validate();
        } else if (*verify) {
            if (instances <= 0)
                throw std::invalid_argument("--instances must be > 0");
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*run) return do_run(cfg);
        if (*verify)
            return do_verify(instances,
                             static_cast<std::uint64_t>(verify_seed));
        if (*trace) return do_trace(cfg, trace_drop_index, trace_dir);
        if (*compare) return do_compare(cmp_a, cmp_b);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace femtoffr
