#pragma once

#include "bilip/meshbuild.hpp"
#include "bilip/pamap.hpp"
#include "bilip/tiling.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace bilip {

// Four-armed transition zone centered at an interface-cycle vertex. On each
// arm the glued edge function ramps linearly from the outer image y(w) at the
// hub to the arm's own map at the extremal point p = w + xi * r * arm.
struct BoundaryCross {
    int vertex = -1;                    // lattice vertex id of the hub w
    Vec2 w = Vec2::Zero();              // hub position
    Vec2 y_w = Vec2::Zero();            // outer-map image of the hub
    std::array<Vec2, 4> arms{};         // unit directions to the 4 grid neighbors
    std::array<int, 4> arm_vertex{};    // neighbor lattice vertex ids
    std::array<int, 4> arm_edge{};      // grid edge index along each arm
    std::array<bool, 4> inner{};        // arm edge lies on the inner side
    std::array<double, 4> xi{};         // arm extents, in edge-length units
    std::array<Vec2, 4> extremals{};    // p_i = w + xi_i * r * arms[i]
    std::array<Vec2, 4> f_p{};          // arm-map image at the extremal point
};

// Piecewise-linear image curve per grid edge of the strip skeleton: the glued
// edge function equals the inner map on inner edges, the outer map on outer
// and interface edges, and the cross ramp inside arm segments.
struct EdgeCurve {
    std::vector<double> params;  // ascending, 0 and 1 included
    std::vector<Vec2> values;    // images at params
    double xi_a = 0, xi_b = 0;   // arm coverage from endpoint a / b (0: none)
    int cross_a = -1, cross_b = -1;  // cross index when covered
};

struct EdgeMap {
    double r = 0;
    std::vector<EdgeCurve> curves;          // parallel to grid.edges
    std::vector<std::array<Vec2, 2>> ends;  // endpoint positions per edge
    std::vector<BoundaryCross> crosses;

    Vec2 point(int e, double t) const;  // position on edge e at parameter t
    Vec2 eval(int e, double t) const;   // curve value at parameter t
};

// True iff sup |ytilde - y| over both vertex sets and dense strip-edge samples
// stays within r / (12 L^3) (closed inequality).
bool check_closeness(const PAMap& ytilde, const PAMap& y, const GridComplex& grid, double L);

// Largest t in (0, 1] with |f(w + t * r * arm) - y(w)| = r / (4L), where f is
// the inner map when `inner` and the outer map otherwise. Located by a
// descending scan over 10^4 uniform samples plus bisection to 1e-10. Throws
// numeric_error when no root exists or the root leaves [1/(6L^2), 1/3].
double find_xi(const Vec2& w, const Vec2& arm_dir, bool inner, const PAMap& ytilde,
               const PAMap& y, double r, double L);

// One cross per interface-cycle vertex; find_xi failures are rethrown with the
// offending vertex id.
std::vector<BoundaryCross> build_crosses(const GridComplex& grid, const PAMap& ytilde,
                                         const PAMap& y, double L);

// Glued edge function on the strip skeleton: inner map on inner edges, outer
// map on outer/interface edges, linear ramps on cross arms. Curves carry all
// map kinks plus at least eight samples per arm/off-arm subsegment; endpoint
// values are canonical per vertex. Throws numeric_error on any continuity
// mismatch beyond 1e-9.
EdgeMap edge_map(const GridComplex& grid, const std::vector<BoundaryCross>& crosses,
                 const PAMap& ytilde, const PAMap& y);

// Sampled two-sided distortion of the edge function over the strip skeleton,
// overall and per configuration class.
struct GridBilipReport {
    bool ok = false;        // measured <= 18 L
    double measured = 0;    // max two-sided distortion over all sampled pairs
    double same_arm = 0;    // both points on one arm of one cross
    double off_off = 0;     // both points outside every cross
    double cross_off = 0;   // one point on an arm, one outside
    double cross_cross = 0; // points on distinct arms
    long pairs = 0;
};

GridBilipReport verify_grid_bilip(const EdgeMap& em, double L, int pairs = 100000,
                                  std::uint64_t seed = 0x5eed5eedULL);

// Square-by-square extension of the edge function over the strip squares,
// glued into one conforming certified map. Adjacent squares receive the same
// edge samples, so shared-edge images agree bit-for-bit. Per-square failures
// are aggregated into one numeric_error listing every failing square.
PAMap extend_all_squares(const EdgeMap& em, const GridComplex& grid, int n = 16);

struct CutoffStats {
    double modified_area = 0;      // strip + collar area (gradient may differ there)
    double modified_fraction = 0;  // divided by |Omega|
    double measured_bilip = 0;     // certified constant of the glued map
    int squares = 0;               // strip squares extended
    int mesh_cells = 0;
};

// Full glued map on Omega: the inner map on bulk cells (exact overlay), the
// square extensions on the strip, the outer map on the collar, with the outer
// map's boundary trace reproduced exactly at every boundary node. Throws
// numeric_error naming the square when an extension fails or the glued map
// does not certify.
PAMap extend_and_glue(const EdgeMap& em, const GridComplex& grid, const PAMap& ytilde,
                      const PAMap& y, CutoffStats* stats = nullptr, int n = 16);

struct CutoffSequenceResult {
    std::vector<PAMap> maps;            // glued maps, one per served delta
    std::vector<int> source_index;      // index into the input sequence
    std::vector<double> deltas_used;    // deltas actually served (in input order)
    std::vector<double> modified_area;  // strip + collar area per served delta
    std::vector<std::string> warnings;  // skipped deltas with reasons
};

// For each delta (descending scales expected), pick the next sequence member
// close enough to the limit map for that delta's tiling and glue it; deltas
// for which no remaining member is close enough are skipped with a warning.
// The tiling is refined until the modified area is at most delta.
CutoffSequenceResult cutoff_sequence(const std::vector<PAMap>& seq, const PAMap& y,
                                     const Domain2& dom, const std::vector<double>& deltas,
                                     int n = 16);

}  // namespace bilip
