#pragma once

#include <vector>

#include "femtoffr/rng.hpp"
#include "femtoffr/topology.hpp"
#include "femtoffr/units.hpp"

namespace femtoffr {

enum class LinkClass {
    MbsMue,             // macro BS <-> macro UE
    MbsFemto,           // macro BS <-> femto BS or femto UE (one wall)
    FbsFueServing,      // femto BS <-> its own femto UE (indoor)
    FemtoToFemtoCross,  // femto node <-> femto node in a different house
    FemtoToMue,         // femto node <-> macro UE (one wall)
};

struct AntennaPattern {
    double theta_3db_deg = 70.0;
    double a_max_db = 20.0;
};

struct ShadowingModel {
    double sigma_macro_db = 8.1;   // links with a macro BS endpoint
    double inter_site_corr = 0.5;  // same UE, different sites
    double intra_site_corr = 1.0;  // same UE, co-sited cells
    double sigma_femto_db = 4.0;   // links without a macro BS endpoint
};

struct ChannelConfig {
    AntennaPattern antenna;
    ShadowingModel shadowing;
    double noise_density_dbm_hz = -174.0;
    double ue_noise_figure_db = 9.0;
    double bs_noise_figure_db = 5.0;
    double macro_total_power_dbm = 46.0;
    double macro_ue_max_power_dbm = 23.0;
    double femto_bs_max_power_dbm = 20.0;
    double femto_ue_max_power_dbm = 23.0;
    double system_bandwidth_hz = 10e6;
    double min_distance_m = 1.0;

    double ue_noise_psd() const {  // W/Hz at a UE receiver
        return dbm_to_watts(noise_density_dbm_hz + ue_noise_figure_db);
    }
    double bs_noise_psd() const {  // W/Hz at a BS receiver
        return dbm_to_watts(noise_density_dbm_hz + bs_noise_figure_db);
    }
    double macro_total_power_w() const {
        return dbm_to_watts(macro_total_power_dbm);
    }
    // Flat power-density ceilings: a device transmitting at its ceiling
    // across the whole system bandwidth emits exactly its max power, so the
    // per-subband ceiling also enforces the total-power budget.
    double femto_bs_cap_psd() const {
        return dbm_to_watts(femto_bs_max_power_dbm) / system_bandwidth_hz;
    }
    double femto_ue_cap_psd() const {
        return dbm_to_watts(femto_ue_max_power_dbm) / system_bandwidth_hz;
    }
};

/// A(theta) = -min{12 (theta/theta_3db)^2, a_max} in dB; theta in degrees,
/// any value (wrapped internally).
double antenna_gain_db(double theta_deg, const AntennaPattern& pattern);

/// Distance-dependent loss per link class, in dB; r clamped to min_distance.
double path_loss_db(LinkClass link_class, double r_m, double min_distance_m = 1.0);

// One shadowing draw per geometry pair, reused for both link directions.
// Macro-involved values decompose into sqrt(corr)*common + sqrt(1-corr)*
// per-site components so same-UE links to different sites correlate at
// inter_site_corr and co-sited cells share one value exactly.
struct ShadowingTable {
    int num_sites = 0;
    int num_ues = 0;
    int num_femtos = 0;
    std::vector<double> mue_site;  // [u*num_sites + s], dB, sigma_macro
    std::vector<double> fue_site;  // [j*num_sites + s], dB, sigma_macro
    std::vector<double> fbs_fue;   // [a*num_femtos + b], dB, sigma_femto
    std::vector<double> fbs_mue;   // [j*num_ues + u], dB, sigma_femto
};

ShadowingTable sample_shadowing(const NetworkDrop& drop,
                                const ShadowingModel& model, Rng& rng);

// All geometry-level linear power gains (path loss + shadowing + macro
// antenna where a macro BS is an endpoint), identical in both directions.
struct LinkTables {
    int num_cells = 0;
    int num_ues = 0;
    int num_femtos = 0;
    std::vector<double> mue_cell;  // [u*num_cells + c]
    std::vector<double> fue_cell;  // [j*num_cells + c]
    std::vector<double> fbs_fue;   // [a*num_femtos + b]; diagonal = serving
    std::vector<double> fbs_mue;   // [j*num_ues + u]

    double mue_cell_gain(int u, int c) const { return mue_cell[static_cast<std::size_t>(u) * num_cells + c]; }
    double fue_cell_gain(int j, int c) const { return fue_cell[static_cast<std::size_t>(j) * num_cells + c]; }
    double fbs_fue_gain(int a, int b) const { return fbs_fue[static_cast<std::size_t>(a) * num_femtos + b]; }
    double fbs_mue_gain(int j, int u) const { return fbs_mue[static_cast<std::size_t>(j) * num_ues + u]; }
    double femto_serving_gain(int j) const { return fbs_fue_gain(j, j); }
};

LinkTables build_link_tables(const NetworkDrop& drop,
                             const ShadowingTable& shadowing,
                             const ChannelConfig& config);

/// Serving cell per macro UE = argmax received pilot strength (path loss +
/// shadowing + antenna), ties broken by lowest cell index.
void assign_serving_cells(NetworkDrop& drop, const LinkTables& tables);

// Convenience pipeline: grid -> users -> shadowing -> gains -> serving.
struct DropBundle {
    NetworkDrop drop;
    ShadowingTable shadowing;
    LinkTables tables;
};

DropBundle build_complete_drop(const TopologyConfig& topo,
                               const ChannelConfig& channel,
                               std::uint64_t seed, std::uint64_t drop_index);

}  // namespace femtoffr
