#pragma once

#include "bilip/density.hpp"
#include "bilip/maps.hpp"
#include "bilip/pamap.hpp"
#include "bilip/ym.hpp"

#include <vector>

namespace bilip {

// Estimation of the bi-quasiconvex relaxation at a matrix: the infimum of the
// mean stored energy over certified piecewise-affine maps of the unit square
// whose boundary trace is the affine map. The admissible set is empty when the
// matrix is not orientation preserving, and the infimum of nothing is +inf.
struct RelaxProblem {
    Density v;
    Mat2 a = Mat2::Identity();
    int n = 16;                // resolution of the affine candidate's mesh
    std::vector<PAMap> seeds;  // extra candidate maps (resampled as-is)
    int budget = 40;           // descent sweeps per refined candidate
    int descend_top = 3;       // how many best candidates get refined
    int jobs = 0;              // 0 = library default
};

struct ZvResult {
    double value = 0.0;   // mean energy of the best explored admissible map
    PAMap argmap;         // empty when value is +inf
    int explored = 0;     // admissible candidates considered
};

// Never exceeds v(a) for orientation-preserving `a` (the affine candidate is
// always explored); +inf when det(a) <= 0. Enlarging the seed set can only
// lower the value.
ZvResult zv_estimate(const RelaxProblem& p);

// One admissible map of lower mean energy than the affine map disproves the
// Jensen-type inequality for v at `a`. gap = |domain| * v(a) - integral.
struct ViolationWitness {
    bool violates = false;
    double gap = 0.0;       // positive gap beyond tolerance = violation
    double integral = 0.0;  // exact cell-wise integral of v over the candidate
};

ViolationWitness biqc_violation_witness(const Density& v, const Mat2& a, const PAMap& candidate);

// Region-wise test of: relaxed energy at the measure's first moment does not
// exceed the measure's pairing with v. The left side is an upper estimate of
// an infimum, so a failing check flags the instance rather than refuting it.
struct JensenResult {
    bool holds = true;
    double lhs = 0.0;
    double rhs = 0.0;
};

std::vector<JensenResult> jensen_check(const YoungMeasure& m, const PAMap& u, const Density& v,
                                       int resolution = 8);

// Shared local optimizer: cyclic coordinate descent over the images of
// interior vertices with the boundary images held fixed. Moves are accepted
// only when they strictly decrease the objective and keep every incident cell
// orientation preserving; after each sweep the map is re-certified and the
// sweep is rolled back if certification fails. The objective is the area-
// weighted sum of v over cell gradients plus, when sup_eps > 0, the scaled
// sup-norm regularizer sup_eps * (max_c |F_c| + max_c |F_c^-1|).
struct DescentOptions {
    int sweeps = 40;
    double sup_eps = 0.0;
    double improve_tol = 1e-12;  // relative objective decrease per sweep
};

struct DescentResult {
    double energy = 0.0;              // final objective value
    std::vector<double> sweep_trace;  // objective after each sweep (monotone)
};

DescentResult descend_interior_images(PAMap& map, const Density& v, const DescentOptions& opt);

// Laminate recipes compatible with the wells of v around the matrix `a`:
// pairs of rank-one connected wells whose segment passes through `a`, plus
// oscillations around `a` along each detected rank-one direction. Only
// axis-aligned lamination normals are produced (periods left at the default).
std::vector<LaminateSpec> well_laminate_specs(const Density& v, const Mat2& a);

}  // namespace bilip
