#include "bilip/energy.hpp"

#include "bilip/maps.hpp"
#include "bilip/matgeom.hpp"

#include "doctest.h"

#include <cmath>

using namespace bilip;

namespace {

Mat2 mk(double a, double b, double c, double d) {
    Mat2 m;
    m << a, b, c, d;
    return m;
}

const Mat2 kWellUp = mk(1.5, 0.6, 0.0, 1.0);
const Mat2 kWellDown = mk(1.5, 0.0, 0.0, 1.0);
const Mat2 kWellMid = mk(1.5, 0.3, 0.0, 1.0);

// Regularized energy recomputed from scratch with the closed-form singular
// values, independent of the library's accumulation.
double scan_energy(const Density& v, double eps, const PAMap& u) {
    double area = 0, mx = 0, mi = 0;
    for (int c = 0; c < u.mesh.num_cells(); ++c) {
        const Mat2 g = u.gradient(c);
        area += u.mesh.cell_area(c) * v(g);
        double smax = 0, smin = 0;
        singular_values(g, smax, smin);
        mx = std::max(mx, smax);
        mi = std::max(mi, 1.0 / smin);
    }
    return area + eps * (mx + mi);
}

PAMap midpoint_laminate(double period) {
    LaminateSpec spec;
    spec.a = kWellUp;
    spec.b = kWellDown;
    spec.lambda = 0.5;
    spec.axis = 1;
    spec.period = period;
    return make_laminate(Vec2(0, 0), Vec2(1, 1), spec);
}

}  // namespace

TEST_CASE("regularized energy of the identity is the bare regularizer") {
    EnergySpec spec;
    spec.v = single_well(Mat2::Identity());
    spec.eps = 0.1;
    spec.u0 = identity_map(structured_rect_mesh(Vec2(0, 0), Vec2(1, 1), 4, 4));
    CHECK(i_eps(spec, spec.u0) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("energy evaluation matches an independent cell scan") {
    const PAMap lam = midpoint_laminate(1.0 / 16);
    EnergySpec spec;
    spec.v = frobenius_density();
    spec.eps = 0.3;
    spec.u0 = affine_map(structured_rect_mesh(Vec2(0, 0), Vec2(1, 1), 4, 4), kWellMid);

    const double got = i_eps(spec, lam);
    const double want = scan_energy(spec.v, spec.eps, lam);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));

    SUBCASE("zero weight reduces to the plain stored energy") {
        spec.eps = 0.0;
        CHECK(i_eps(spec, lam) == doctest::Approx(scan_energy(spec.v, 0.0, lam)).epsilon(1e-12));
    }

    SUBCASE("gated densities make off-class maps infinitely expensive") {
        spec.v = double_well(kWellUp, kWellDown, 1.2);  // laminate ramps exceed the class
        CHECK(std::isinf(i_eps(spec, lam)));
    }
}

TEST_CASE("energy evaluation validates its inputs") {
    EnergySpec spec;
    spec.v = frobenius_density();
    spec.u0 = affine_map(structured_rect_mesh(Vec2(0, 0), Vec2(1, 1), 4, 4), kWellMid);

    SUBCASE("trace mismatch") {
        const PAMap other = affine_map(structured_rect_mesh(Vec2(0, 0), Vec2(1, 1), 4, 4),
                                       mk(2, 0, 0, 2));
        CHECK_THROWS_AS(i_eps(spec, other), input_error);
    }

    SUBCASE("uncertified map") {
        PAMap broken = affine_map(structured_rect_mesh(Vec2(0, 0), Vec2(1, 1), 4, 4), kWellMid);
        // Flip one interior image far across the domain to break injectivity.
        const auto& loops = broken.mesh.boundary_loops;
        std::vector<char> interior(broken.mesh.vertices.size(), 1);
        for (const auto& loop : loops)
            for (const int v : loop) interior[static_cast<std::size_t>(v)] = 0;
        for (std::size_t v = 0; v < interior.size(); ++v)
            if (interior[v]) {
                broken.images[v] += Vec2(5, 5);
                break;
            }
        CHECK_THROWS_AS(i_eps(spec, broken), input_error);
    }

    SUBCASE("different breakpoints with the same trace are accepted") {
        const PAMap finer = affine_map(structured_rect_mesh(Vec2(0, 0), Vec2(1, 1), 7, 5),
                                       kWellMid);
        CHECK(i_eps(spec, finer) ==
              doctest::Approx(scan_energy(spec.v, spec.eps, finer)).epsilon(1e-12));
    }
}

TEST_CASE("minimization at a single well returns the bare regularizer") {
    const Mat2 a = mk(2, 0, 0, 1);
    EnergySpec spec;
    spec.v = single_well(a);
    spec.eps = 0.05;
    spec.u0 = affine_map(structured_rect_mesh(Vec2(0, 0), Vec2(1, 1), 8, 8), a);

    const MinimizeResult res = minimize(spec, 10);
    const double want = spec.eps * (spectral_norm(a) + inverse_spectral_norm(a));
    CHECK(want == doctest::Approx(0.05 * 3.0).epsilon(1e-12));
    CHECK(std::abs(res.value - want) <= 1e-6);
    for (std::size_t s = 1; s < res.trace.size(); ++s)
        CHECK(res.trace[s] <= res.trace[s - 1] + 1e-12);
    CHECK(certify_injective(res.u_star).injective);
    CHECK(i_eps(spec, res.u_star) == doctest::Approx(res.value).epsilon(1e-9));
}

TEST_CASE("minimization escapes a double-well datum through laminate starts") {
    EnergySpec spec;
    spec.v = double_well(kWellUp, kWellDown, 50.0);
    spec.eps = 1e-3;
    spec.u0 = affine_map(structured_rect_mesh(Vec2(0, 0), Vec2(1, 1), 8, 8), kWellMid);

    const double datum = i_eps(spec, spec.u0);
    CHECK(datum > 0.09);  // v(mid) = 0.09 plus the regularizer

    const MinimizeResult res = minimize(spec, 8);
    CHECK(res.explored > 1);
    CHECK(res.value < 0.5 * datum);
    CHECK(res.value <= datum);
    for (std::size_t s = 1; s < res.trace.size(); ++s)
        CHECK(res.trace[s] <= res.trace[s - 1] + 1e-12);
    CHECK(certify_injective(res.u_star).injective);
    CHECK(i_eps(spec, res.u_star) == doctest::Approx(res.value).epsilon(1e-9));
}

TEST_CASE("energy values are lower semicontinuous along laminate families") {
    EnergySpec spec;
    spec.v = frobenius_density();
    spec.eps = 0.1;
    spec.u0 = affine_map(structured_rect_mesh(Vec2(0, 0), Vec2(1, 1), 4, 4), kWellMid);

    const double limit_value = i_eps(spec, spec.u0);
    for (const double period : {1.0 / 8, 1.0 / 16, 1.0 / 32})
        CHECK(i_eps(spec, midpoint_laminate(period)) >= limit_value - 1e-9);
}
