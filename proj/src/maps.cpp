#include "bilip/maps.hpp"

#include "bilip/matgeom.hpp"

#include <algorithm>
#include <set>

namespace bilip {

Mat2 laminate_mean(const LaminateSpec& spec) {
    return spec.lambda * spec.a + (1 - spec.lambda) * spec.b;
}

bool rank_one_connection(const Mat2& a, const Mat2& b, Vec2& dir, Vec2& normal, double& amp,
                         double tol) {
    const Mat2 d = b - a;
    const double scale = std::max(1.0, d.cwiseAbs().maxCoeff());
    if (std::abs(d.determinant()) > tol * scale * scale) return false;
    const Svd2 s = svd2(d);
    amp = s.sigma_max;
    dir = s.u.col(0);
    normal = s.v.col(0);
    return true;
}

namespace {

// Piecewise-linear periodic profile with slope -(1-lambda) on [0, lambda*p)
// and +lambda on [lambda*p, p); phi(0) = 0.
double zigzag(double s, double lambda, double p) {
    double t = std::fmod(s, p);
    if (t < 0) t += p;
    const double split = lambda * p;
    if (t <= split) return -(1 - lambda) * t;
    return -(1 - lambda) * split + lambda * (t - split);
}

std::vector<double> build_lines(double lo, double hi, double period, double lambda, double clamp,
                                bool dense) {
    std::set<double> lines{lo, hi};
    if (clamp > 0) {
        // refine the ramp band so the diagonal creases are resolved
        const int steps = 4;
        for (int k = 1; k <= steps; ++k) {
            lines.insert(lo + clamp * k / steps);
            lines.insert(hi - clamp * k / steps);
        }
    }
    if (dense) {
        // all zigzag breakpoints
        for (double s = lo;; s += period) {
            const double split = s + lambda * period;
            if (s > hi + 1e-15) break;
            if (s > lo) lines.insert(std::min(s, hi));
            if (split < hi) lines.insert(split);
            if (s >= hi) break;
        }
    } else {
        // a modest uniform fill to keep aspect ratios in check
        const int steps = 8;
        for (int k = 1; k < steps; ++k) lines.insert(lo + (hi - lo) * k / steps);
    }
    // collapse near-duplicates left by floating-point drift
    std::vector<double> out;
    out.reserve(lines.size());
    const double gap = 1e-12 * std::max(1.0, hi - lo);
    for (double v : lines)
        if (out.empty() || v - out.back() > gap) out.push_back(v);
    if (!out.empty() && std::abs(out.back() - hi) > gap) out.push_back(hi);
    return out;
}

}  // namespace

PAMap make_laminate(const Vec2& lo, const Vec2& hi, const LaminateSpec& spec) {
    if (spec.lambda <= 0 || spec.lambda >= 1) throw input_error("laminate needs lambda in (0,1)");
    if (spec.period <= 0) throw input_error("laminate needs period > 0");
    if (spec.axis != 0 && spec.axis != 1) throw input_error("laminate axis must be 0 or 1");
    Vec2 dir, normal;
    double amp;
    if (!rank_one_connection(spec.a, spec.b, dir, normal, amp, 1e-9))
        throw input_error("laminate wells are not rank-one connected");
    if (spec.a.determinant() <= 0 || spec.b.determinant() <= 0)
        throw input_error("laminate wells must be orientation preserving");
    // The difference must be dir x e_axis-normal: check the normal is the lattice axis.
    Vec2 n = Vec2::Zero();
    n[spec.axis] = 1;
    if (amp > 0 && std::abs(std::abs(normal.dot(n)) - 1.0) > 1e-9)
        throw input_error("laminate bands must be orthogonal to a lattice axis");

    const Mat2 m = laminate_mean(spec);
    const Mat2 d = spec.b - spec.a;  // = amp * dir x n (up to sign fixed below)
    // y(x) = M x + psi(x) * phi(x_axis) * jump, with jump = d * n so that
    // adding s * (jump x n) with s in {-(1-lambda), lambda} lands on the wells.
    const Vec2 jump = d * n;

    const double span = hi[spec.axis] - lo[spec.axis];
    if (spec.period > span / 2) throw input_error("laminate period too large for the rectangle");

    auto build = [&](double clamp) -> PAMap {
        std::vector<double> xs =
            build_lines(lo.x(), hi.x(), spec.period, spec.lambda, clamp, spec.axis == 0);
        std::vector<double> ys =
            build_lines(lo.y(), hi.y(), spec.period, spec.lambda, clamp, spec.axis == 1);
        Mesh2 mesh = structured_tensor_mesh(xs, ys);
        std::vector<Vec2> im(mesh.vertices.size());
        for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
            const Vec2& x = mesh.vertices[i];
            const double s = x[spec.axis] - lo[spec.axis];
            const double ramp =
                std::min({1.0, (x.x() - lo.x()) / clamp, (hi.x() - x.x()) / clamp,
                          (x.y() - lo.y()) / clamp, (hi.y() - x.y()) / clamp});
            const double psi = std::max(0.0, ramp);
            im[i] = m * x + psi * zigzag(s, spec.lambda, spec.period) * jump;
        }
        return PAMap(std::move(mesh), std::move(im));
    };

    if (spec.clamp > 0) {
        PAMap map = build(spec.clamp);
        if (!certify_injective(map).injective)
            throw numeric_error("laminate with requested clamp width fails certification");
        return map;
    }
    for (double clamp = spec.period; clamp <= span / 4; clamp *= 2) {
        PAMap map = build(clamp);
        if (certify_injective(map).injective) return map;
    }
    throw numeric_error("no clamp width certifies the laminate");
}

PAMap random_certified_map(const Mesh2& mesh, double L, Rng& rng) {
    if (L < 1) throw input_error("bi-Lipschitz target below 1");
    const double theta = rng.uniform(0, 6.283185307179586);
    Mat2 rot1;
    rot1 << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    if (L <= 1 + 1e-12) {
        // Only isometries are 1-bi-Lipschitz.
        return affine_map(mesh, rot1, Vec2(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)));
    }
    // Affine core with distortion comfortably below L.
    const double s = std::exp(rng.uniform(-1.0, 1.0) * 0.4 * std::log(std::max(1.02, 0.8 * L)));
    const double rho = rng.uniform(0, 6.283185307179586);
    Mat2 rot2;
    rot2 << std::cos(rho), -std::sin(rho), std::sin(rho), std::cos(rho);
    Mat2 core = rot1 * Eigen::DiagonalMatrix<double, 2>(s, 1 / s) * rot2;

    const Vec2 lo = mesh.vertices[0];  // displacement frequencies relative to bbox
    Vec2 hi = lo;
    Vec2 lo2 = lo;
    for (const auto& v : mesh.vertices) {
        hi = hi.cwiseMax(v);
        lo2 = lo2.cwiseMin(v);
    }
    const double diam = (hi - lo2).norm();

    const double f1 = rng.uniform(1.0, 3.0), f2 = rng.uniform(1.0, 3.0);
    const double p1 = rng.uniform(0, 6.28), p2 = rng.uniform(0, 6.28);
    const Vec2 a1(rng.uniform(-1, 1), rng.uniform(-1, 1));
    const Vec2 a2(rng.uniform(-1, 1), rng.uniform(-1, 1));
    double amp = 0.2 * diam;
    for (int attempt = 0; attempt < 40; ++attempt, amp *= 0.5) {
        std::vector<Vec2> im(mesh.vertices.size());
        for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
            const Vec2& x = mesh.vertices[i];
            const double u = (x - lo2).x() / std::max(1e-12, (hi - lo2).x());
            const double v = (x - lo2).y() / std::max(1e-12, (hi - lo2).y());
            const Vec2 disp = a1 * std::sin(6.283185307179586 * (f1 * u + p1 / 6.28)) +
                              a2 * std::sin(6.283185307179586 * (f2 * v + p2 / 6.28));
            im[i] = core * x + amp * disp;
        }
        PAMap map(mesh, std::move(im));
        try {
            if (certify_injective(map).injective && bilip_constant(map) <= L) return map;
        } catch (const numeric_error&) {
        }
    }
    return affine_map(mesh, core);  // distortion of the core alone is <= L
}

PAMap nearby_certified_map(const PAMap& base, double L, double eps, Rng& rng) {
    const Vec2 lo = base.mesh.vertices[0];
    Vec2 hi = lo, lo2 = lo;
    for (const auto& v : base.mesh.vertices) {
        hi = hi.cwiseMax(v);
        lo2 = lo2.cwiseMin(v);
    }
    if (L <= 1 + 1e-12) {
        // Stay inside the isometry class: a small rigid motion of the image.
        double diam = 0;
        for (const auto& y : base.images) diam = std::max(diam, (y - base.images[0]).norm());
        const double phi = 0.45 * eps / std::max(1.0, diam);
        Mat2 rot;
        rot << std::cos(phi), -std::sin(phi), std::sin(phi), std::cos(phi);
        const Vec2 pivot = base.images[0];
        const Vec2 shift(0.31 * eps * rng.uniform(-1, 1), 0.31 * eps * rng.uniform(-1, 1));
        PAMap out = base;
        for (auto& y : out.images) y = pivot + rot * (y - pivot) + shift;
        return out;
    }
    const double f1 = rng.uniform(1.0, 2.5), f2 = rng.uniform(1.0, 2.5);
    const Vec2 a1(rng.uniform(-1, 1), rng.uniform(-1, 1));
    const Vec2 a2(rng.uniform(-1, 1), rng.uniform(-1, 1));
    double amp = 0.9 * eps / std::max(1.0, std::max(a1.norm(), a2.norm()));
    for (int attempt = 0; attempt < 40; ++attempt, amp *= 0.5) {
        std::vector<Vec2> im = base.images;
        for (std::size_t i = 0; i < im.size(); ++i) {
            const Vec2& x = base.mesh.vertices[i];
            const double u = (x - lo2).x() / std::max(1e-12, (hi - lo2).x());
            const double v = (x - lo2).y() / std::max(1e-12, (hi - lo2).y());
            im[i] += amp * (a1 * std::sin(6.283185307179586 * f1 * u) +
                            a2 * std::cos(6.283185307179586 * f2 * v));
        }
        PAMap map(base.mesh, std::move(im));
        try {
            if (certify_injective(map).injective && bilip_constant(map) <= L) return map;
        } catch (const numeric_error&) {
        }
    }
    return base;
}

}  // namespace bilip
