#pragma once

#include "bilip/common.hpp"
#include "bilip/matgeom.hpp"

#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace bilip {

// Energy density on 2x2 matrices with values in R ∪ {+inf}. `raw` is the
// finite-part evaluator; gated evaluation returns +inf outside the distortion
// class {det A > 0, |A| <= rho, |A^{-1}| <= rho}. rho = +inf gates on det > 0
// alone; gated = false evaluates `raw` everywhere.
struct Density {
    std::function<double(const Mat2&)> raw;
    double rho = std::numeric_limits<double>::infinity();
    bool gated = true;
    bool convex = false;      // declared convexity (enables exactness checks)
    std::vector<Mat2> wells;  // zero set when known; seeds relaxation descent
    std::string name = "density";

    double operator()(const Mat2& a) const;

    // True when `a` is in the finite region of a gated density.
    bool finite_at(const Mat2& a) const;
};

// v(B) = |B - A|_F^2 (squared Frobenius distance); convex, single well at A.
Density single_well(const Mat2& a,
                    double rho = std::numeric_limits<double>::infinity());

// v(B) = min(|B - A1|_F^2, |B - A2|_F^2); two wells, not convex.
Density double_well(const Mat2& a1, const Mat2& a2, double rho);

// v(B) = |B|_F^2 + 1/det B on det B > 0, +inf otherwise: finite on every
// orientation-preserving matrix but blowing up as det B -> 0+.
Density blowup_density();

// v ≡ c, ungated (finite everywhere); convex.
Density constant_density(double c);

// v(B) = det B, ungated. Not convex, but its pairing with gradient histograms
// of certified fixed-trace sequences equals det of the mean gradient.
Density det_density();

// v(B) = |B|_F^2, ungated; convex.
Density frobenius_density();

}  // namespace bilip
