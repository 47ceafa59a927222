#include "femtoffr/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace femtoffr {

namespace {

using Json = nlohmann::ordered_json;

// One table drives parsing, dumping and the documented key list.
template <typename Fn>
void for_each_key(ScenarioConfig& c, Fn&& fn) {
    auto& topo = c.topology;
    auto& ch = c.channel;
    auto& ctl = c.control;
    fn("num_site_rows", topo.num_site_rows);
    fn("num_site_cols", topo.num_site_cols);
    fn("cell_radius_m", topo.cell_radius_m);
    fn("sectors_per_site", topo.sectors_per_site);
    fn("macro_ues_per_cell", topo.macro_ues_per_cell);
    fn("femtos_per_cell", topo.femtos_per_cell);
    fn("femto_link_distance_m", topo.femto_link_distance_m);
    fn("antenna_theta_3db_deg", ch.antenna.theta_3db_deg);
    fn("antenna_backoff_db", ch.antenna.a_max_db);
    fn("shadow_sigma_macro_db", ch.shadowing.sigma_macro_db);
    fn("shadow_inter_site_corr", ch.shadowing.inter_site_corr);
    fn("shadow_intra_site_corr", ch.shadowing.intra_site_corr);
    fn("shadow_sigma_femto_db", ch.shadowing.sigma_femto_db);
    fn("noise_density_dbm_hz", ch.noise_density_dbm_hz);
    fn("ue_noise_figure_db", ch.ue_noise_figure_db);
    fn("bs_noise_figure_db", ch.bs_noise_figure_db);
    fn("macro_total_power_dbm", ch.macro_total_power_dbm);
    fn("macro_ue_max_power_dbm", ch.macro_ue_max_power_dbm);
    fn("femto_bs_max_power_dbm", ch.femto_bs_max_power_dbm);
    fn("femto_ue_max_power_dbm", ch.femto_ue_max_power_dbm);
    fn("system_bandwidth_hz", ch.system_bandwidth_hz);
    fn("min_distance_m", ch.min_distance_m);
    fn("iterations", ctl.loads.iterations);
    fn("load_exponent", ctl.loads.beta);
    fn("load_init", ctl.loads.s_init);
    fn("load_measure_smoothing", ctl.loads.measure_smoothing);
    fn("load_adapt_min", ctl.loads.adapt_min);
    fn("load_price_smoothing", ctl.loads.price_smoothing);
    fn("load_margin_db", ctl.loads.margin_db);
    fn("load_min", ctl.loads.s_min);
    fn("load_max", ctl.loads.s_max);
    fn("lambda", ctl.lambda);
    fn("iot_target_db", ctl.macro.iot_target_db);
    fn("iot_tol_db", ctl.macro.iot_tol_db);
    fn("max_se_bps_hz", ctl.macro.max_se);
    fn("dl_rate_loss_fraction", ctl.dl_rate_loss_fraction);
    fn("ul_rise_db", ctl.ul_rise_db);
    fn("reuse1_fraction", ctl.p1);
    fn("num_drops", c.num_drops);
    fn("rng_seed", c.rng_seed);
    fn("out_dir", c.out_dir);
    fn("workers", c.workers);
    fn("modes", c.modes);
    fn("directions", c.directions);
}

void assign_from_json(const Json& value, int& out) { out = value.get<int>(); }
void assign_from_json(const Json& value, double& out) { out = value.get<double>(); }
void assign_from_json(const Json& value, std::uint64_t& out) {
    out = value.get<std::uint64_t>();
}
void assign_from_json(const Json& value, std::string& out) {
    out = value.get<std::string>();
}
void assign_from_json(const Json& value, std::vector<std::string>& out) {
    out = value.get<std::vector<std::string>>();
}

}  // namespace

void ScenarioConfig::validate() const {
    topology.validate();
    if (num_drops < 1) throw std::invalid_argument("num_drops must be >= 1");
    if (workers < 0) throw std::invalid_argument("workers must be >= 0");
    if (control.p1 <= 0.0 || control.p1 > 1.0)
        throw std::invalid_argument("reuse1_fraction must be in (0, 1]");
    if (control.loads.iterations < 1)
        throw std::invalid_argument("iterations must be >= 1");
    for (const auto& m : modes) {
        if (m != "subband" && m != "subband_jd" && m != "orthog" &&
            m != "no_subband")
            throw std::invalid_argument("unknown mode: " + m);
    }
    for (const auto& d : directions) {
        if (d != "dl" && d != "ul")
            throw std::invalid_argument("unknown direction: " + d);
    }
}

ScenarioConfig parse_config(const std::string& json_text) {
    Json doc = Json::parse(json_text);
    if (!doc.is_object()) throw std::invalid_argument("config must be an object");

    ScenarioConfig config;  // defaults = paper preset
    if (doc.contains("defaults")) {
        const std::string preset = doc["defaults"].get<std::string>();
        if (preset != "paper")
            throw std::invalid_argument("unknown defaults preset: " + preset);
        doc.erase("defaults");
    }

    // The gap is stored linear internally but configured in dB.
    double gap_db = linear_to_db(config.control.macro.gap_linear);
    bool gap_set = false;
    if (doc.contains("gap_db")) {
        gap_db = doc["gap_db"].get<double>();
        gap_set = true;
        doc.erase("gap_db");
    }

    for_each_key(config, [&](const char* key, auto& field) {
        auto it = doc.find(key);
        if (it == doc.end()) return;
        assign_from_json(*it, field);
        doc.erase(it);
    });
    if (gap_set) config.control.macro.gap_linear = db_to_linear(gap_db);
    if (!doc.empty())
        throw std::invalid_argument("unknown config key: " +
                                    doc.begin().key());
    config.validate();
    return config;
}

ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

std::string dump_config(const ScenarioConfig& config) {
    Json doc = Json::object();
    ScenarioConfig copy = config;
    for_each_key(copy, [&](const char* key, auto& field) { doc[key] = field; });
    doc["gap_db"] = linear_to_db(config.control.macro.gap_linear);
    return doc.dump(2);
}

}  // namespace femtoffr
