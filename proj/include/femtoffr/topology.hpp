#pragma once

#include <cstdint>
#include <vector>

#include "femtoffr/rng.hpp"
#include "femtoffr/units.hpp"

namespace femtoffr {

struct TopologyConfig {
    int num_site_rows = 4;
    int num_site_cols = 6;
    double cell_radius_m = 500.0;
    int sectors_per_site = 3;
    int macro_ues_per_cell = 10;
    int femtos_per_cell = 10;
    double femto_link_distance_m = 20.0;
    std::uint64_t rng_seed = 1;

    void validate() const;  // throws std::invalid_argument on bad values
};

struct SectorCell {
    int site = 0;
    double azimuth_deg = 0.0;  // boresight, one of 0/120/240
};

struct MacroUe {
    Vec2 pos;
    int serving_cell = -1;  // filled in once shadowing is known
};

struct FemtoLink {
    Vec2 bs_pos;
    Vec2 ue_pos;  // exactly femto_link_distance_m from bs_pos (pre-wrap)
};

// One Monte-Carlo realization of the network geometry. Sites live on a
// rhombic torus: site(row, col) = col*basis1 + row*basis2, wrapped by
// wrap1 = num_cols*basis1 and wrap2 = num_rows*basis2.
struct NetworkDrop {
    TopologyConfig config;
    std::vector<Vec2> sites;
    std::vector<SectorCell> cells;
    std::vector<MacroUe> macro_ues;
    std::vector<FemtoLink> femtos;
    Vec2 basis1, basis2;  // hexagonal lattice basis (inter-site distance)
    Vec2 wrap1, wrap2;    // torus translation vectors

    int num_sites() const { return static_cast<int>(sites.size()); }
    int num_cells() const { return static_cast<int>(cells.size()); }
    int num_ues() const { return static_cast<int>(macro_ues.size()); }
    int num_femtos() const { return static_cast<int>(femtos.size()); }
};

/// Sites, sector cells and wrap vectors only; no users yet.
NetworkDrop build_grid(const TopologyConfig& config);

/// Shortest distance from a to any torus image of b; also reports the
/// minimizing image of b (used for bearings toward the "nearest copy").
/// Exact for points within one wrap of the fundamental parallelogram,
/// which covers every caller: positions are canonical except the pre-wrap
/// femto UE offsets, and those stay within one link length of the domain.
struct WrapResult {
    double distance_m;
    Vec2 image;  // the image of b realizing the minimum
};
WrapResult wrap_distance(const Vec2& a, const Vec2& b, const NetworkDrop& drop);

/// Map a point to its canonical representative inside the fundamental
/// parallelogram spanned by the wrap vectors.
Vec2 canonicalize(const Vec2& p, const NetworkDrop& drop);

/// Draw macro-UE and femto positions uniformly over the torus. Serving
/// cells are left unassigned (-1); assignment needs the channel model.
void drop_users(NetworkDrop& drop, Rng& rng);

}  // namespace femtoffr
