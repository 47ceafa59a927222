#include "femtoffr/topology.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace femtoffr {

void TopologyConfig::validate() const {
    if (num_site_rows < 1 || num_site_cols < 1)
        throw std::invalid_argument("grid dimensions must be >= 1");
    if (sectors_per_site < 1)
        throw std::invalid_argument("sectors_per_site must be >= 1");
    if (macro_ues_per_cell < 0 || femtos_per_cell < 0)
        throw std::invalid_argument("user densities must be >= 0");
    if (cell_radius_m <= 0.0)
        throw std::invalid_argument("cell_radius_m must be > 0");
    if (femto_link_distance_m <= 0.0 ||
        femto_link_distance_m >= cell_radius_m)
        throw std::invalid_argument(
            "femto_link_distance_m must be in (0, cell_radius_m)");
}

NetworkDrop build_grid(const TopologyConfig& config) {
    config.validate();
    NetworkDrop drop;
    drop.config = config;

    // Inter-site distance for hexagonal cells of radius R (center to
    // vertex) is sqrt(3)*R.
    const double d = std::sqrt(3.0) * config.cell_radius_m;
    drop.basis1 = Vec2{d, 0.0};
    drop.basis2 = Vec2{d * 0.5, d * std::sqrt(3.0) * 0.5};
    drop.wrap1 = drop.basis1 * static_cast<double>(config.num_site_cols);
    drop.wrap2 = drop.basis2 * static_cast<double>(config.num_site_rows);

    drop.sites.reserve(
        static_cast<std::size_t>(config.num_site_rows) * config.num_site_cols);
    for (int row = 0; row < config.num_site_rows; ++row) {
        for (int col = 0; col < config.num_site_cols; ++col) {
            drop.sites.push_back(drop.basis1 * static_cast<double>(col) +
                                 drop.basis2 * static_cast<double>(row));
        }
    }

    drop.cells.reserve(drop.sites.size() *
                       static_cast<std::size_t>(config.sectors_per_site));
    for (int s = 0; s < drop.num_sites(); ++s) {
        for (int sec = 0; sec < config.sectors_per_site; ++sec) {
            drop.cells.push_back(
                SectorCell{s, 360.0 * sec / config.sectors_per_site});
        }
    }
    return drop;
}

WrapResult wrap_distance(const Vec2& a, const Vec2& b,
                         const NetworkDrop& drop) {
    WrapResult best{std::numeric_limits<double>::infinity(), b};
    for (int m = -2; m <= 2; ++m) {
        for (int n = -2; n <= 2; ++n) {
            const Vec2 img = b + drop.wrap1 * static_cast<double>(m) +
                             drop.wrap2 * static_cast<double>(n);
            const double dist = distance(a, img);
            if (dist < best.distance_m) {
                best.distance_m = dist;
                best.image = img;
            }
        }
    }
    return best;
}

Vec2 canonicalize(const Vec2& p, const NetworkDrop& drop) {
    // Solve p = u*wrap1 + v*wrap2 (wrap1.y == 0 by construction).
    const double v = p.y / drop.wrap2.y;
    const double u = (p.x - v * drop.wrap2.x) / drop.wrap1.x;
    const double uf = u - std::floor(u);
    const double vf = v - std::floor(v);
    return drop.wrap1 * uf + drop.wrap2 * vf;
}

void drop_users(NetworkDrop& drop, Rng& rng) {
    const int num_ues = drop.config.macro_ues_per_cell * drop.num_cells();
    const int num_femtos = drop.config.femtos_per_cell * drop.num_cells();

    drop.macro_ues.clear();
    drop.macro_ues.reserve(num_ues);
    for (int u = 0; u < num_ues; ++u) {
        const Vec2 pos = drop.wrap1 * rng.uniform() + drop.wrap2 * rng.uniform();
        drop.macro_ues.push_back(MacroUe{pos, -1});
    }

    drop.femtos.clear();
    drop.femtos.reserve(num_femtos);
    for (int f = 0; f < num_femtos; ++f) {
        const Vec2 bs = drop.wrap1 * rng.uniform() + drop.wrap2 * rng.uniform();
        const double bearing = rng.uniform(0.0, 2.0 * kPi);
        const Vec2 ue = canonicalize(
            bs + Vec2{std::cos(bearing), std::sin(bearing)} *
                     drop.config.femto_link_distance_m,
            drop);
        drop.femtos.push_back(FemtoLink{bs, ue});
    }
}

}  // namespace femtoffr
