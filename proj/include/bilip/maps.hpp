#pragma once

#include "bilip/pamap.hpp"

namespace bilip {

// Simple laminate on an axis-aligned rectangle: gradients alternate between A
// and B = A + amp * (a x n) in bands orthogonal to the lattice direction n
// (n = e1 or e2), in volume fractions lambda : 1-lambda per period. The zigzag
// profile is multiplied by a boundary ramp of width `clamp` so the trace is
// exactly M x with M = lambda A + (1-lambda) B at every boundary node. Mesh
// lines are placed at all profile breakpoints, so interior bands carry the well
// gradients exactly; only the clamp band holds intermediate gradients.
struct LaminateSpec {
    Mat2 a = Mat2::Identity();
    Mat2 b = Mat2::Identity();
    double lambda = 0.5;
    double period = 0.125;
    double clamp = 0;  // 0: pick automatically (certified), else ramp width
    int axis = 0;      // 0: bands vary along x (n = e1), 1: along y (n = e2)
};

// Throws input_error if B - A is not rank one or the wells are not both
// orientation preserving; numeric_error if no clamp width certifies.
PAMap make_laminate(const Vec2& lo, const Vec2& hi, const LaminateSpec& spec);

// Mean gradient of the laminate (its affine trace matrix).
Mat2 laminate_mean(const LaminateSpec& spec);

// Rank-one connection B - A = amp * (dir x normal). Returns false if
// det(B - A) != 0 (no connection). For a valid connection, fills the factors.
bool rank_one_connection(const Mat2& a, const Mat2& b, Vec2& dir, Vec2& normal, double& amp,
                         double tol = 1e-9);

// Deterministic certified bi-Lipschitz test map: random affine core plus a
// smooth sinusoidal displacement, shrunk until the certified constant is <= L.
PAMap random_certified_map(const Mesh2& mesh, double L, Rng& rng);

// A second map uniformly within `eps` of `base` (sup norm over vertices and any
// sample points), still certified with constant <= L.
PAMap nearby_certified_map(const PAMap& base, double L, double eps, Rng& rng);

}  // namespace bilip
