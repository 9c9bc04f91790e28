#pragma once

#include "bilip/density.hpp"
#include "bilip/pamap.hpp"

#include <vector>

namespace bilip {

// Regularized stored-energy functional over certified maps with a fixed
// boundary datum: the cell-exact integral of v over the gradient plus
// eps * (max_c |F_c| + max_c |F_c^-1|) with per-cell spectral norms.
struct EnergySpec {
    Density v;
    double eps = 0.1;
    PAMap u0;  // boundary datum; must itself be certified
};

// Requires u certified and sharing u0's boundary trace as a piecewise-linear
// function (meshes may differ; breakpoints are cross-checked both ways).
// +inf when v is infinite on some cell gradient.
double i_eps(const EnergySpec& spec, const PAMap& u);

struct MinimizeResult {
    PAMap u_star;
    double value = 0.0;
    std::vector<double> trace;  // objective along the winning descent, monotone
    int explored = 0;           // candidate starts considered
};

// Local minimization by the shared interior-image descent from the boundary
// datum and, when the trace is affine and v carries rank-one connected wells,
// from planted laminate starts. Never returns an uncertified or
// trace-violating map; value = i_eps(u_star) <= i_eps(u0).
MinimizeResult minimize(const EnergySpec& spec, int budget = 40);

}  // namespace bilip
