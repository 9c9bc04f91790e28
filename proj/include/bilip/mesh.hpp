#pragma once

#include "bilip/common.hpp"

#include <array>
#include <memory>
#include <vector>

namespace bilip {

// Conforming triangle mesh of a polygonal domain (possibly with polygonal holes).
// Cells are counter-clockwise in reference coordinates. Boundary loops are
// derived from cell incidence: loop 0 is the outer loop (counter-clockwise),
// further loops bound holes (clockwise).
struct Mesh2 {
    std::vector<Vec2> vertices;
    std::vector<std::array<int, 3>> cells;
    std::vector<std::vector<int>> boundary_loops;

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_cells() const { return static_cast<int>(cells.size()); }

    // Single-loop boundary accessor (throws if the mesh has holes).
    const std::vector<int>& boundary() const;

    double cell_area(int c) const;
    double total_area() const;
    Vec2 cell_centroid(int c) const;

    // Rebuilds boundary_loops from cell incidence; validates that the mesh is
    // conforming (every edge in at most two cells) and that all cells have
    // positive reference area. Throws input_error otherwise.
    void finalize();
};

// Structured mesh of an axis-aligned rectangle, nx-by-ny quads, each split along
// the lower-left to upper-right diagonal.
Mesh2 structured_rect_mesh(const Vec2& lo, const Vec2& hi, int nx, int ny);

// Tensor-product mesh with prescribed grid lines (strictly increasing).
Mesh2 structured_tensor_mesh(const std::vector<double>& xs, const std::vector<double>& ys);

// Point location with cell-walking and a deterministic exhaustive fallback
// (ties toward the lower cell index). Thread-confined: each worker should own one.
class Locator {
  public:
    explicit Locator(const Mesh2& mesh);

    // Returns the containing cell and barycentric coordinates, or -1 if the point
    // lies outside the mesh (beyond tol).
    int locate(const Vec2& x, std::array<double, 3>& bary, double tol = kGeomTol) const;

    const std::vector<std::array<int, 3>>& neighbors() const { return neighbors_; }

  private:
    int resolve_ties(const Vec2& x, int c, std::array<double, 3>& bary, double tol) const;

    const Mesh2& mesh_;
    std::vector<std::array<int, 3>> neighbors_;  // neighbor across edge opposite to vertex k
    mutable int hint_ = 0;
};

// Barycentric coordinates of x in cell c (no containment requirement).
std::array<double, 3> barycentric(const Mesh2& mesh, int c, const Vec2& x);

// --- polyline predicates (image-side injectivity tests) -----------------------

// True if the closed polyline is simple: no self-intersections, no zero-length
// segments, adjacent segments may share only their common endpoint.
// Implemented as a sweep over segments sorted by x-interval.
bool closed_polyline_simple(const std::vector<Vec2>& loop, double tol = kGeomTol);

// True if two closed polylines have no point of contact within tol.
bool polylines_disjoint(const std::vector<Vec2>& a, const std::vector<Vec2>& b,
                        double tol = kGeomTol);

// Winding-number point-in-polygon test (closed polyline, any orientation).
bool point_in_polygon(const Vec2& p, const std::vector<Vec2>& loop);

// Signed area of a closed polyline (positive for counter-clockwise).
double polygon_signed_area(const std::vector<Vec2>& loop);

// True if segments [a,b] and [c,d] intersect within tol (touching counts).
bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d,
                        double tol = kGeomTol);

}  // namespace bilip
