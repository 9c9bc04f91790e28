#include "bilip/matgeom.hpp"

namespace bilip {

void singular_values(const Mat2& a, double& sigma_max, double& sigma_min) {
    const double e = (a(0, 0) + a(1, 1)) * 0.5;
    const double f = (a(0, 0) - a(1, 1)) * 0.5;
    const double g = (a(1, 0) + a(0, 1)) * 0.5;
    const double h = (a(1, 0) - a(0, 1)) * 0.5;
    const double q = std::hypot(e, h);
    const double r = std::hypot(f, g);
    sigma_max = q + r;
    sigma_min = std::abs(q - r);
}

Svd2 svd2(const Mat2& a) {
    const double e = (a(0, 0) + a(1, 1)) * 0.5;
    const double f = (a(0, 0) - a(1, 1)) * 0.5;
    const double g = (a(1, 0) + a(0, 1)) * 0.5;
    const double h = (a(1, 0) - a(0, 1)) * 0.5;
    const double q = std::hypot(e, h);
    const double r = std::hypot(f, g);

    Svd2 out;
    out.sigma_max = q + r;
    double sy = q - r;  // may be negative; sign moves into V

    const double a1 = std::atan2(g, f);
    const double a2 = std::atan2(h, e);
    const double theta = (a1 - a2) * 0.5;  // right rotation
    const double phi = (a2 + a1) * 0.5;    // left rotation

    const double cl = std::cos(phi), sl = std::sin(phi);
    const double cr = std::cos(theta), sr = std::sin(theta);
    out.u << cl, -sl, sl, cl;
    Mat2 vt;
    vt << cr, sr, -sr, cr;
    if (sy < 0) {
        sy = -sy;
        vt.row(1) *= -1.0;
    }
    out.sigma_min = sy;
    out.v = vt.transpose();
    return out;
}

bool in_distortion_class(const Mat2& a, double rho, bool positive, double tol) {
    if (rho < 1.0) return false;  // |A| * |A^{-1}| >= 1 makes the class empty
    double smax, smin;
    singular_values(a, smax, smin);
    if (smin <= tol) return false;  // not (robustly) invertible
    if (smax > rho + tol) return false;
    if (1.0 / smin > rho + tol) return false;
    if (positive && a.determinant() <= tol) return false;
    return true;
}

ObtuseBound obtuse_triangle_bound(const Vec2& z, const Vec2& p, const Vec2& zp, double tol) {
    ObtuseBound out;
    const Vec2 u = z - p;
    const Vec2 v = zp - p;
    out.angle_at_least_right = u.dot(v) <= tol * std::max(1.0, u.norm() * v.norm());
    out.lhs = (z - zp).norm();
    out.rhs = (std::sqrt(2.0) / 2.0) * (u.norm() + v.norm());
    out.holds = out.angle_at_least_right && out.lhs >= out.rhs - tol * std::max(1.0, out.rhs);
    return out;
}

BallSeparationBound ball_separation_bound(const Vec2& w, double xi, const Vec2& a, const Vec2& b,
                                          const Vec2& c, double tol) {
    BallSeparationBound out;
    const Vec2 wb = b - w;
    const Vec2 wa = a - w;
    const double scale = std::max(1.0, xi);
    const bool on_sphere = std::abs(wb.norm() - xi) <= tol * scale;
    const double cross = wa.x() * wb.y() - wa.y() * wb.x();
    const bool collinear = std::abs(cross) <= tol * scale * scale;
    const double t = wb.squaredNorm() > 0 ? wa.dot(wb) / wb.squaredNorm() : 0.0;
    const bool between = t >= -tol && t <= 1.0 + tol;
    const bool outside = (c - w).norm() >= xi - tol * scale;
    out.preconditions = on_sphere && collinear && between && outside;
    out.lhs = (a - c).norm();
    out.rhs = ((a - b).norm() + (b - c).norm()) / 3.0;
    out.holds = out.preconditions && out.lhs >= out.rhs - tol * std::max(1.0, out.rhs);
    return out;
}

}  // namespace bilip
