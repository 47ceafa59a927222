#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "femtoffr/channel.hpp"
#include "femtoffr/femto_control.hpp"
#include "femtoffr/macro_layer.hpp"
#include "femtoffr/topology.hpp"

namespace femtoffr {

struct ControlConfig {
    LoadSpillageParams loads;
    MacroControlParams macro;
    double lambda = 1.0;
    double dl_rate_loss_fraction = 0.10;
    double ul_rise_db = 0.5;
    double p1 = 0.5;
};

struct ScenarioConfig {
    TopologyConfig topology;
    ChannelConfig channel;
    ControlConfig control;
    int num_drops = 10;
    std::vector<std::string> modes = {"subband", "subband_jd", "orthog",
                                      "no_subband"};
    std::vector<std::string> directions = {"dl", "ul"};
    std::uint64_t rng_seed = 1;
    std::string out_dir = "out";
    int workers = 0;  // 0 = hardware concurrency

    void validate() const;  // throws std::invalid_argument
};

/// Parse a flat-key JSON config. The default-constructed ScenarioConfig is
/// the "paper" preset; a file only overrides the keys it names. Unknown
/// keys are an error.
ScenarioConfig load_config(const std::string& path);
ScenarioConfig parse_config(const std::string& json_text);

/// Serialize every key (round-trips through parse_config).
std::string dump_config(const ScenarioConfig& config);

}  // namespace femtoffr
