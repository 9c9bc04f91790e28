#include "doctest.h"

#include "bilip/matgeom.hpp"

#include <cmath>

using namespace bilip;

namespace {

// Independent oracle: singular values from the eigenvalues of A^T A via the
// quadratic formula (a different algorithm from the rotation-based svd2).
void oracle_singular_values(const Mat2& a, double& smax, double& smin) {
    const Mat2 m = a.transpose() * a;
    const double tr = m(0, 0) + m(1, 1);
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    const double disc = std::sqrt(std::max(0.0, tr * tr - 4.0 * det));
    smax = std::sqrt(std::max(0.0, (tr + disc) / 2.0));
    smin = std::sqrt(std::max(0.0, (tr - disc) / 2.0));
}

Mat2 rotation(double t) {
    Mat2 r;
    r << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
    return r;
}

bool is_orthogonal(const Mat2& q, double tol) {
    return (q.transpose() * q - Mat2::Identity()).norm() <= tol;
}

}  // namespace

TEST_CASE("unit shear has golden-ratio operator norm") {
    Mat2 s;
    s << 1, 1, 0, 1;
    const Svd2 d = svd2(s);
    // sigma_max = (1 + sqrt 5)/2, sigma_min its reciprocal.
    CHECK(d.sigma_max == doctest::Approx(1.6180339887498949).epsilon(1e-14));
    CHECK(d.sigma_min == doctest::Approx(0.6180339887498949).epsilon(1e-14));
    CHECK(spectral_norm(s) == doctest::Approx(1.6180339887498949).epsilon(1e-14));
    CHECK(inverse_spectral_norm(s) == doctest::Approx(1.6180339887498949).epsilon(1e-14));
    CHECK(distortion(s) == doctest::Approx(1.6180339887498949).epsilon(1e-14));
}

TEST_CASE("svd2 agrees with the quadratic-formula oracle") {
    std::vector<Mat2> mats;
    Mat2 m;
    m << 1, 0, 0, 1;
    mats.push_back(m);
    m << 2, 0, 0, 0.5;
    mats.push_back(m);
    m << 0, 1, 1, 0;  // reflection, det = -1
    mats.push_back(m);
    m << 1, 2, 2, 4;  // rank one
    mats.push_back(m);
    m << 0, 0, 0, 0;
    mats.push_back(m);
    m << -3, 1, 4, -1.5;
    mats.push_back(m);
    mats.push_back(rotation(0.3));
    mats.push_back(rotation(-2.2) * m);
    Rng rng(12345);
    for (int k = 0; k < 200; ++k) {
        Mat2 r;
        r << rng.normal(), rng.normal(), rng.normal(), rng.normal();
        if (k % 3 == 0) r *= std::exp(4.0 * rng.uniform() - 2.0);
        mats.push_back(r);
    }

    for (const Mat2& a : mats) {
        CAPTURE(a(0, 0));
        CAPTURE(a(0, 1));
        CAPTURE(a(1, 0));
        CAPTURE(a(1, 1));
        double o_max = 0, o_min = 0;
        oracle_singular_values(a, o_max, o_min);
        const double scale = std::max(1.0, o_max);

        const Svd2 d = svd2(a);
        CHECK(d.sigma_max >= d.sigma_min);
        CHECK(d.sigma_min >= 0.0);
        CHECK(std::abs(d.sigma_max - o_max) <= 1e-12 * scale);
        CHECK(std::abs(d.sigma_min - o_min) <= 1e-12 * scale);

        // Exact product identity and factor orthogonality.
        CHECK(std::abs(d.sigma_max * d.sigma_min - std::abs(a.determinant())) <=
              1e-12 * scale * scale);
        CHECK(is_orthogonal(d.u, 1e-13));
        CHECK(is_orthogonal(d.v, 1e-13));
        Mat2 sigma = Mat2::Zero();
        sigma(0, 0) = d.sigma_max;
        sigma(1, 1) = d.sigma_min;
        CHECK((d.u * sigma * d.v.transpose() - a).norm() <= 1e-12 * scale);
    }
}

TEST_CASE("rank-one matrix gets exact singular values") {
    Mat2 a;
    a << 1, 2, 2, 4;  // Frobenius norm 5, rank one
    double smax = 0, smin = 0;
    singular_values(a, smax, smin);
    CHECK(smax == 5.0);
    CHECK(smin == 0.0);
    CHECK(inverse_spectral_norm(a) == std::numeric_limits<double>::infinity());
    CHECK(distortion(a) == std::numeric_limits<double>::infinity());
}

TEST_CASE("distortion of a diagonal stretch") {
    Mat2 a;
    a << 2, 0, 0, 1.0 / 3.0;
    CHECK(distortion(a) == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("distortion class membership") {
    Mat2 a;

    SUBCASE("exact diagonal boundary case") {
        a << 2, 0, 0, 0.5;
        CHECK(in_distortion_class(a, 2.0, true));
        CHECK_FALSE(in_distortion_class(a, 1.999, true));
        CHECK(in_distortion_class(a, 2.5, true));
    }

    SUBCASE("rotations sit in every class with rho >= 1") {
        a = rotation(0.3);
        CHECK(in_distortion_class(a, 1.0, true, 1e-12));
        CHECK(in_distortion_class(a, 1.5, true, 0.0));
    }

    SUBCASE("below rho = 1 the class is empty") {
        a = Mat2::Identity();
        CHECK_FALSE(in_distortion_class(a, 0.8, true));
        CHECK_FALSE(in_distortion_class(a, 0.8, false));
    }

    SUBCASE("orientation flag separates reflections") {
        a << 0, 1, 1, 0;  // det = -1, both norms equal 1
        CHECK(in_distortion_class(a, 1.0, false));
        CHECK_FALSE(in_distortion_class(a, 1.0, true));
    }

    SUBCASE("singular matrices are never members") {
        a << 1, 2, 2, 4;
        CHECK_FALSE(in_distortion_class(a, 100.0, false));
    }

    SUBCASE("min-norm lower bound") {
        a << 2, 0, 0, 0.5;
        CHECK(min_norm_lower_bound(2.0) == 0.5);
        double smax = 0, smin = 0;
        singular_values(a, smax, smin);
        CHECK(smin >= min_norm_lower_bound(2.0) - 1e-15);
    }
}

TEST_CASE("obtuse triangle bound") {
    SUBCASE("right isoceles corner is the equality case") {
        const Vec2 p(0.25, -1.0);
        const Vec2 z = p + Vec2(0.7, 0);
        const Vec2 zp = p + Vec2(0, 0.7);
        const ObtuseBound b = obtuse_triangle_bound(z, p, zp);
        CHECK(b.angle_at_least_right);
        CHECK(b.holds);
        CHECK(b.lhs == doctest::Approx(b.rhs).epsilon(1e-14));
    }

    SUBCASE("strictly obtuse gives slack") {
        const Vec2 p(0, 0);
        const Vec2 z(1, 0);
        const Vec2 zp(-1, 0.5);
        const ObtuseBound b = obtuse_triangle_bound(z, p, zp);
        CHECK(b.angle_at_least_right);
        CHECK(b.holds);
        CHECK(b.lhs > b.rhs + 0.1);
    }

    SUBCASE("acute angle fails the precondition") {
        const Vec2 p(0, 0);
        const Vec2 z(1, 0);
        const Vec2 zp(1, 1);  // 45 degrees at p
        const ObtuseBound b = obtuse_triangle_bound(z, p, zp);
        CHECK_FALSE(b.angle_at_least_right);
    }

    SUBCASE("random obtuse configurations always satisfy the bound") {
        Rng rng(777);
        int tested = 0;
        while (tested < 500) {
            const Vec2 p(rng.normal(), rng.normal());
            const Vec2 z = p + Vec2(rng.normal(), rng.normal());
            const Vec2 zp = p + Vec2(rng.normal(), rng.normal());
            const ObtuseBound b = obtuse_triangle_bound(z, p, zp);
            if (!b.angle_at_least_right) continue;
            CHECK(b.holds);
            CHECK(b.lhs >= b.rhs - 1e-12);
            ++tested;
        }
    }
}

TEST_CASE("ball separation bound") {
    SUBCASE("center/antipode configuration is the equality case") {
        const Vec2 w(0.5, 0.5);
        const double xi = 0.125;
        const Vec2 a = w;                 // segment endpoint at the center
        const Vec2 b = w + Vec2(xi, 0);   // on the sphere
        const Vec2 c = w - Vec2(xi, 0);   // outside the open ball
        const BallSeparationBound s = ball_separation_bound(w, xi, a, b, c);
        CHECK(s.preconditions);
        CHECK(s.holds);
        CHECK(s.lhs == doctest::Approx(s.rhs).epsilon(1e-14));
    }

    SUBCASE("far-away outside point gives slack") {
        const Vec2 w(0, 0);
        const double xi = 1.0;
        const Vec2 b(1, 0);
        const Vec2 a(0.5, 0);
        const Vec2 c(-3, 0);
        const BallSeparationBound s = ball_separation_bound(w, xi, a, b, c);
        CHECK(s.preconditions);
        CHECK(s.holds);
        CHECK(s.lhs > s.rhs);
    }

    SUBCASE("inside point fails the precondition") {
        const Vec2 w(0, 0);
        const double xi = 1.0;
        const BallSeparationBound s =
            ball_separation_bound(w, xi, Vec2(0.5, 0), Vec2(1, 0), Vec2(0.2, 0.2));
        CHECK_FALSE(s.preconditions);
    }

    SUBCASE("a must lie between the center and the sphere point") {
        const Vec2 w(0, 0);
        const double xi = 1.0;
        const BallSeparationBound s =
            ball_separation_bound(w, xi, Vec2(0, 0.5), Vec2(1, 0), Vec2(2, 0));
        CHECK_FALSE(s.preconditions);
    }

    SUBCASE("random valid configurations always satisfy the bound") {
        Rng rng(31415);
        for (int k = 0; k < 500; ++k) {
            const Vec2 w(rng.normal(), rng.normal());
            const double xi = 0.1 + rng.uniform();
            const double ang = 6.283185307179586 * rng.uniform();
            const Vec2 dir(std::cos(ang), std::sin(ang));
            const Vec2 b = w + xi * dir;
            const Vec2 a = w + (xi * rng.uniform()) * dir;
            const double cang = 6.283185307179586 * rng.uniform();
            const double cr = xi * (1.0 + 3.0 * rng.uniform());
            const Vec2 c = w + cr * Vec2(std::cos(cang), std::sin(cang));
            const BallSeparationBound s = ball_separation_bound(w, xi, a, b, c);
            CHECK(s.preconditions);
            CHECK(s.holds);
            CHECK(s.lhs >= s.rhs - 1e-12);
        }
    }
}
