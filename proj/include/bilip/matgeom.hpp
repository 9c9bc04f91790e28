#pragma once

#include "bilip/common.hpp"

#include <algorithm>
#include <limits>

namespace bilip {

// Closed-form singular value decomposition of a 2x2 matrix.
// sigma_max >= sigma_min >= 0, A = U * diag(sigma_max, sigma_min) * V^T.
struct Svd2 {
    double sigma_max = 0;
    double sigma_min = 0;
    Mat2 u = Mat2::Identity();
    Mat2 v = Mat2::Identity();
};

Svd2 svd2(const Mat2& a);

// Singular values only (cheaper, exact identity sigma_max*sigma_min = |det A|).
void singular_values(const Mat2& a, double& sigma_max, double& sigma_min);

// Spectral (operator) norm |A| = sigma_max.
inline double spectral_norm(const Mat2& a) {
    double smax, smin;
    singular_values(a, smax, smin);
    return smax;
}

// |A^{-1}| = 1/sigma_min for invertible A, +inf otherwise.
inline double inverse_spectral_norm(const Mat2& a) {
    double smax, smin;
    singular_values(a, smax, smin);
    if (smin <= 0) return std::numeric_limits<double>::infinity();
    return 1.0 / smin;
}

// Per-matrix distortion used throughout: max(|A|, |A^{-1}|).
inline double distortion(const Mat2& a) {
    double smax, smin;
    singular_values(a, smax, smin);
    if (smin <= 0) return std::numeric_limits<double>::infinity();
    return std::max(smax, 1.0 / smin);
}

// Membership in the class of rho-nondegenerate matrices:
// invertible, |A| <= rho and |A^{-1}| <= rho; `positive` additionally asks det A > 0.
// Requires rho >= 1 (below 1 the class is empty: |A| * |A^{-1}| >= 1).
bool in_distortion_class(const Mat2& a, double rho, bool positive, double tol = 0.0);

// For A with det A > 0 and max(|A|,|A^{-1}|) <= rho, both singular values lie in
// [1/rho, rho]; in particular min(|A|, |A^{-1}|) >= 1/rho.
inline double min_norm_lower_bound(double rho) { return 1.0 / rho; }

// --- sharp plane-geometry inequalities ---------------------------------------

// If the angle of the triangle (z, p, z') at p is >= pi/2, then
// |z - z'| >= (sqrt(2)/2) * (|z - p| + |z' - p|).
struct ObtuseBound {
    bool angle_at_least_right = false;  // precondition: angle at p >= pi/2
    double lhs = 0;                     // |z - z'|
    double rhs = 0;                     // (sqrt(2)/2) (|z-p| + |z'-p|)
    bool holds = false;                 // lhs >= rhs (only meaningful when precondition holds)
};
ObtuseBound obtuse_triangle_bound(const Vec2& z, const Vec2& p, const Vec2& zp,
                                  double tol = kGeomTol);

// Points a, b on the sphere/segment geometry of a ball B(w, xi): if a lies on the
// segment [w, b] with |b - w| = xi and c is outside the open ball B(w, xi), then
// |a - c| >= (|a - b| + |b - c|) / 3.
struct BallSeparationBound {
    bool preconditions = false;  // a between w and b, |b-w| = xi, |c-w| >= xi
    double lhs = 0;              // |a - c|
    double rhs = 0;              // (|a-b| + |b-c|)/3
    bool holds = false;
};
BallSeparationBound ball_separation_bound(const Vec2& w, double xi, const Vec2& a,
                                          const Vec2& b, const Vec2& c, double tol = kGeomTol);

}  // namespace bilip
