#pragma once

#include "bilip/common.hpp"
#include "bilip/domain.hpp"

#include <array>
#include <limits>
#include <unordered_map>
#include <vector>

namespace bilip {

enum class EdgeLabel { Gamma, Inner, Outer };

// One axis-aligned grid edge of the strip complex Q, between lattice vertices
// a and b (a < b, adjacent on the r-lattice).
struct GridEdge {
    int a = -1, b = -1;
    EdgeLabel label = EdgeLabel::Outer;
};

// Cell classification of the exact r-grid partition of the domain.
enum class CellClass : std::uint8_t { Outside = 0, Bulk, Strip, Bound };

// Square tiling of a boundary band together with the separating edge cycle.
//
// Squares have side r (adjacent lattice vertices are at distance r; the stored
// half-size is r/2). The strip is two squares wide: cells at Chebyshev offsets
// 2 and 3 from the exterior, leaving a one-cell collar between the strip and the
// domain boundary. Gamma is the edge cycle between the two layers; it lies in
// the interior of the strip, so every Gamma vertex has four incident grid edges.
struct GridComplex {
    Domain2 domain;
    double delta = 0;
    double r = 0;       // grid edge length = square side
    Vec2 origin;        // lattice origin (bounding-box corner)
    int nx = 0, ny = 0;  // cells across the bounding box

    std::vector<std::pair<int, int>> squares;  // strip cells (i, j)
    std::vector<GridEdge> edges;               // all edges of strip squares
    std::vector<int> gamma_vertices;           // lattice vertex ids on Gamma
    std::vector<CellClass> cell_class;         // nx*ny, row-major

    double area_bulk = 0, area_strip = 0, area_bound = 0;

    int vertex_id(int i, int j) const { return j * (nx + 1) + i; }
    std::pair<int, int> vertex_ij(int vid) const { return {vid % (nx + 1), vid / (nx + 1)}; }
    Vec2 vertex_pos(int vid) const {
        const auto [i, j] = vertex_ij(vid);
        return origin + Vec2(i * r, j * r);
    }
    Vec2 square_center(std::size_t s) const {
        return origin + Vec2((squares[s].first + 0.5) * r, (squares[s].second + 0.5) * r);
    }
    double half_size() const { return r / 2; }

    CellClass cls(int i, int j) const {
        if (i < 0 || j < 0 || i >= nx || j >= ny) return CellClass::Outside;
        return cell_class[static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) +
                          static_cast<std::size_t>(i)];
    }

    // Edge lookup by sorted vertex pair; -1 if the pair is not an edge of Q.
    int edge_index(int va, int vb) const;
    std::unordered_map<std::uint64_t, int> edge_lookup;  // built by build_tiling

    // Neighbor lattice vertices at distance r from a Gamma vertex (always 4).
    std::array<int, 4> arm_neighbors(int vid) const;

    // Per-cell flag: cell lies on the exterior side of Gamma (bound + outer strip
    // layer). Used by separation checks and edge labeling.
    std::vector<std::uint8_t> outer_side;
};

// Builds the tiling for the given strip parameter. r is the largest lattice-
// commensurate value <= min(delta/4, r_cap) admitting the two-layer strip with a
// well-formed separating cycle inside the delta-strip. Throws numeric_error if
// no admissible r exists within the search budget.
GridComplex build_tiling(const Domain2& dom, double delta,
                         double r_cap = std::numeric_limits<double>::infinity());

// True if every path from the exterior to a bulk cell crosses Gamma: flood fill
// over grid cells with Gamma edges removed must not reach the inner side.
// `dropped_gamma_edges` (indices into g.edges) are treated as missing walls; a
// nonempty list is expected to break separation.
bool separation_check(const GridComplex& g, const std::vector<int>& dropped_gamma_edges = {});

}  // namespace bilip
