#pragma once

#include "bilip/common.hpp"

#include <vector>

namespace bilip {

// Axis-aligned rectilinear polygon, optionally with rectilinear holes. All vertex
// coordinates lie on a common lattice (origin at the bounding-box corner); the
// detected lattice pitch drives grid commensurability.
struct Domain2 {
    std::vector<Vec2> outer;               // counter-clockwise
    std::vector<std::vector<Vec2>> holes;  // clockwise

    Vec2 bbox_lo = Vec2::Zero();
    Vec2 bbox_hi = Vec2::Zero();
    double lattice = 0;  // largest pitch dividing all (coord - bbox corner)

    bool contains(const Vec2& p) const;           // interior test (boundary ambiguous)
    double boundary_distance(const Vec2& p) const;  // distance to the full boundary
    double area() const;
    double perimeter() const;
};

// Validates rectilinearity, fixes orientations, detects the lattice.
Domain2 make_domain(std::vector<Vec2> outer, std::vector<std::vector<Vec2>> holes = {});

Domain2 unit_square_domain();
// L-shape on [0,1]^2 with the top-right quadrant removed.
Domain2 lshape_domain();

// Raster region: cell-mask representation of an open subset of the plane.
struct Region {
    Vec2 origin = Vec2::Zero();
    double cell = 0;
    int nx = 0, ny = 0;
    std::vector<std::uint8_t> mask;

    bool contains(const Vec2& p) const;
    double area() const;
};

// The open boundary strip {x in Omega : dist(x, boundary) < delta} as a raster
// region. Throws input_error if delta >= inradius (the strip would swallow the
// whole domain). `resolution` 0 picks delta/256 capped by a cell budget.
Region boundary_strip(const Domain2& dom, double delta, double resolution = 0);

// Raster estimate of the inradius max_x dist(x, boundary).
double inradius_estimate(const Domain2& dom, double resolution = 0);

}  // namespace bilip
