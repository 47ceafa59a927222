#include "femtoffr/channel.hpp"

#include <algorithm>
#include <cmath>

#include "femtoffr/kernels.hpp"

namespace femtoffr {

double antenna_gain_db(double theta_deg, const AntennaPattern& pattern) {
    const double theta = wrap_angle_deg(theta_deg);
    const double ratio = theta / pattern.theta_3db_deg;
    return -std::min(12.0 * ratio * ratio, pattern.a_max_db);
}

double path_loss_db(LinkClass link_class, double r_m, double min_distance_m) {
    const double r = std::max(r_m, min_distance_m);
    switch (link_class) {
        case LinkClass::MbsMue:
            return 15.3 + 37.6 * std::log10(r);
        case LinkClass::MbsFemto:
            return 15.3 + 37.6 * std::log10(r) + 10.0;
        case LinkClass::FbsFueServing:
            return 38.46 + 20.0 * std::log10(r) + 0.7 * r;
        case LinkClass::FemtoToFemtoCross:
            return 15.3 + 37.6 * std::log10(r) + 20.0;
        case LinkClass::FemtoToMue:
            return 15.3 + 37.6 * std::log10(r) + 10.0;
    }
    return 0.0;  // unreachable
}

namespace {

// Correlated draws for one terminal against every site: a common component
// shared by all sites plus an independent per-site component.
void sample_macro_rows(std::vector<double>& out, int num_terminals,
                       int num_sites, double sigma_db, double inter_corr,
                       Rng& rng) {
    out.resize(static_cast<std::size_t>(num_terminals) * num_sites);
    const double w_common = std::sqrt(inter_corr);
    const double w_site = std::sqrt(1.0 - inter_corr);
    for (int t = 0; t < num_terminals; ++t) {
        const double common = rng.normal();
        for (int s = 0; s < num_sites; ++s) {
            out[static_cast<std::size_t>(t) * num_sites + s] =
                sigma_db * (w_common * common + w_site * rng.normal());
        }
    }
}

}  // namespace

ShadowingTable sample_shadowing(const NetworkDrop& drop,
                                const ShadowingModel& model, Rng& rng) {
    ShadowingTable table;
    table.num_sites = drop.num_sites();
    table.num_ues = drop.num_ues();
    table.num_femtos = drop.num_femtos();

    sample_macro_rows(table.mue_site, table.num_ues, table.num_sites,
                      model.sigma_macro_db, model.inter_site_corr, rng);
    sample_macro_rows(table.fue_site, table.num_femtos, table.num_sites,
                      model.sigma_macro_db, model.inter_site_corr, rng);

    table.fbs_fue.resize(static_cast<std::size_t>(table.num_femtos) *
                         table.num_femtos);
    for (double& v : table.fbs_fue) v = model.sigma_femto_db * rng.normal();
    table.fbs_mue.resize(static_cast<std::size_t>(table.num_femtos) *
                         table.num_ues);
    for (double& v : table.fbs_mue) v = model.sigma_femto_db * rng.normal();
    return table;
}

namespace {

// Gain in dB from a sector cell to a terminal: path loss toward the nearest
// torus image, BS antenna gain toward that image, plus shadowing.
void fill_cell_terminal_gains(std::vector<double>& out_db,
                              const std::vector<Vec2>& terminals,
                              LinkClass link_class,
                              const std::vector<double>& shadow_site,
                              const NetworkDrop& drop,
                              const ChannelConfig& config) {
    const int num_cells = drop.num_cells();
    const int num_sites = drop.num_sites();
    const int sectors = drop.config.sectors_per_site;
    out_db.resize(terminals.size() * static_cast<std::size_t>(num_cells));
    for (std::size_t t = 0; t < terminals.size(); ++t) {
        for (int s = 0; s < num_sites; ++s) {
            const WrapResult wr = wrap_distance(drop.sites[s], terminals[t], drop);
            const double loss =
                path_loss_db(link_class, wr.distance_m, config.min_distance_m);
            const double bearing = bearing_deg(drop.sites[s], wr.image);
            const double shadow = shadow_site[t * num_sites + s];
            for (int sec = 0; sec < sectors; ++sec) {
                const int c = s * sectors + sec;
                const double theta = bearing - drop.cells[c].azimuth_deg;
                out_db[t * num_cells + c] =
                    -loss + antenna_gain_db(theta, config.antenna) + shadow;
            }
        }
    }
}

}  // namespace

LinkTables build_link_tables(const NetworkDrop& drop,
                             const ShadowingTable& shadowing,
                             const ChannelConfig& config) {
    LinkTables tables;
    tables.num_cells = drop.num_cells();
    tables.num_ues = drop.num_ues();
    tables.num_femtos = drop.num_femtos();

    std::vector<Vec2> mue_pos(drop.macro_ues.size());
    for (std::size_t u = 0; u < mue_pos.size(); ++u)
        mue_pos[u] = drop.macro_ues[u].pos;
    std::vector<Vec2> fue_pos(drop.femtos.size());
    for (std::size_t j = 0; j < fue_pos.size(); ++j)
        fue_pos[j] = drop.femtos[j].ue_pos;

    std::vector<double> db;
    fill_cell_terminal_gains(db, mue_pos, LinkClass::MbsMue,
                             shadowing.mue_site, drop, config);
    tables.mue_cell.resize(db.size());
    kernels().db_to_linear_batch(db.data(), tables.mue_cell.data(), db.size());

    fill_cell_terminal_gains(db, fue_pos, LinkClass::MbsFemto,
                             shadowing.fue_site, drop, config);
    tables.fue_cell.resize(db.size());
    kernels().db_to_linear_batch(db.data(), tables.fue_cell.data(), db.size());

    const int n = tables.num_femtos;
    db.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            const double r =
                wrap_distance(drop.femtos[a].bs_pos, drop.femtos[b].ue_pos, drop)
                    .distance_m;
            const LinkClass cls = (a == b) ? LinkClass::FbsFueServing
                                           : LinkClass::FemtoToFemtoCross;
            db[static_cast<std::size_t>(a) * n + b] =
                -path_loss_db(cls, r, config.min_distance_m) +
                shadowing.fbs_fue[static_cast<std::size_t>(a) * n + b];
        }
    }
    tables.fbs_fue.resize(db.size());
    kernels().db_to_linear_batch(db.data(), tables.fbs_fue.data(), db.size());

    const int num_ues = tables.num_ues;
    db.assign(static_cast<std::size_t>(n) * num_ues, 0.0);
    for (int j = 0; j < n; ++j) {
        for (int u = 0; u < num_ues; ++u) {
            const double r = wrap_distance(drop.femtos[j].bs_pos,
                                           drop.macro_ues[u].pos, drop)
                                 .distance_m;
            db[static_cast<std::size_t>(j) * num_ues + u] =
                -path_loss_db(LinkClass::FemtoToMue, r, config.min_distance_m) +
                shadowing.fbs_mue[static_cast<std::size_t>(j) * num_ues + u];
        }
    }
    tables.fbs_mue.resize(db.size());
    kernels().db_to_linear_batch(db.data(), tables.fbs_mue.data(), db.size());
    return tables;
}

void assign_serving_cells(NetworkDrop& drop, const LinkTables& tables) {
    for (int u = 0; u < drop.num_ues(); ++u) {
        int best = 0;
        double best_gain = tables.mue_cell_gain(u, 0);
        for (int c = 1; c < tables.num_cells; ++c) {
            const double g = tables.mue_cell_gain(u, c);
            if (g > best_gain) {
                best_gain = g;
                best = c;
            }
        }
        drop.macro_ues[u].serving_cell = best;
    }
}

DropBundle build_complete_drop(const TopologyConfig& topo,
                               const ChannelConfig& channel,
                               std::uint64_t seed, std::uint64_t drop_index) {
    DropBundle bundle;
    bundle.drop = build_grid(topo);
    Rng topo_rng = Rng::substream(seed, drop_index, 1);
    drop_users(bundle.drop, topo_rng);
    Rng shadow_rng = Rng::substream(seed, drop_index, 2);
    bundle.shadowing =
        sample_shadowing(bundle.drop, channel.shadowing, shadow_rng);
    bundle.tables = build_link_tables(bundle.drop, bundle.shadowing, channel);
    assign_serving_cells(bundle.drop, bundle.tables);
    return bundle;
}

}  // namespace femtoffr
