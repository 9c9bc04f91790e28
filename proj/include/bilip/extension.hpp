#pragma once

#include "bilip/common.hpp"
#include "bilip/pamap.hpp"

#include <vector>

namespace bilip {

// Sampled boundary correspondence on an axis-aligned square. Parameters are
// perimeter fractions in [0,1), measured counterclockwise starting at the
// lower-left corner; the four corners must be among the samples. Image points
// traverse a simple closed curve.
struct BoundaryData {
    Vec2 center = Vec2::Zero();
    double half = 0.5;            // half side length
    double declared_l = 1.0;      // distortion bound the samples respect
    std::vector<double> params;   // strictly increasing perimeter fractions
    std::vector<Vec2> values;     // image of each sample

    int size() const { return static_cast<int>(params.size()); }
};

// Point on the square boundary at perimeter fraction t (CCW from lower-left).
// t is wrapped into [0,1).
Vec2 square_boundary_point(const Vec2& center, double half, double t);

// Throws input_error when samples are unsorted, a corner is missing, the image
// curve is not simple and positively oriented, or the pairwise distortion of
// the samples exceeds declared_l.
void validate_boundary_data(const BoundaryData& bd);

struct ExtensionResult {
    PAMap map;
    double measured_l = 0.0;
    Certificate cert;
    int updates = 0;  // accepted untangling moves
};

// Extends the boundary samples to a certified injective, orientation-preserving
// piecewise-affine map of the full square. Boundary nodes carry the samples
// exactly; interior nodes sit on a uniform n x n grid, are placed harmonically
// (piecewise-linear Laplace solve), and are relocated by a deterministic local
// pattern search if any cell folds. Throws numeric_error when the result cannot
// be certified within the update budget; if `best` is non-null it then receives
// the best uncertified iterate.
ExtensionResult extend_square(const BoundaryData& bd, int n, int untangle_budget = 10000,
                              ExtensionResult* best = nullptr);

}  // namespace bilip
