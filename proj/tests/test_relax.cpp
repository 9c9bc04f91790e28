#include "bilip/relax.hpp"

#include "bilip/maps.hpp"
#include "bilip/matgeom.hpp"

#include "doctest.h"

#include <cmath>
#include <limits>

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

Mat2 random_pos_det(Rng& rng) {
    for (;;) {
        Mat2 a;
        a << rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2);
        if (a.determinant() < 0) a.col(0) *= -1.0;
        if (a.determinant() > 0.1 && distortion(a) < 20.0) return a;
    }
}

double boundary_trace_error(const PAMap& map, const Mat2& a) {
    double worst = 0;
    for (const auto& loop : map.mesh.boundary_loops)
        for (const int v : loop)
            worst = std::max(worst, (map.images[static_cast<std::size_t>(v)] -
                                     a * map.mesh.vertices[static_cast<std::size_t>(v)])
                                        .norm());
    return worst;
}

}  // namespace

TEST_CASE("relaxed energy of a single well at its center is zero") {
    RelaxProblem p;
    p.v = single_well(Mat2::Identity(), 8.0);
    p.a = Mat2::Identity();
    p.n = 8;
    p.budget = 5;
    const ZvResult r = zv_estimate(p);
    CHECK(r.value == 0.0);
    CHECK(r.explored >= 1);
    REQUIRE(!r.argmap.mesh.cells.empty());
    for (int c = 0; c < r.argmap.mesh.num_cells(); ++c)
        CHECK((r.argmap.gradient(c) - Mat2::Identity()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("non-orientation-preserving targets have empty admissible sets") {
    RelaxProblem p;
    p.v = frobenius_density();
    for (const Mat2& a : {mk(1, 0, 0, -1), mk(1, 2, 2, 4), mk(0, 0, 0, 0)}) {
        p.a = a;
        const ZvResult r = zv_estimate(p);
        CHECK(std::isinf(r.value));
        CHECK(r.argmap.mesh.cells.empty());
    }
}

TEST_CASE("estimate never exceeds the density at the target matrix") {
    Rng rng(0x7e57a12bu);
    for (int trial = 0; trial < 12; ++trial) {
        const Mat2 a = random_pos_det(rng);
        for (const Density& v : {frobenius_density(), blowup_density(), single_well(kWellMid)}) {
            RelaxProblem p;
            p.v = v;
            p.a = a;
            p.n = 6;
            p.budget = 4;
            const ZvResult r = zv_estimate(p);
            const double va = v(a);
            CHECK(r.value <= va + 1e-12 * (1.0 + std::abs(va)));
        }
    }
}

TEST_CASE("convex densities are their own relaxation") {
    Rng rng(0xc0ffee11u);
    for (int trial = 0; trial < 6; ++trial) {
        const Mat2 a = random_pos_det(rng);
        RelaxProblem p;
        p.v = frobenius_density();
        p.a = a;
        const ZvResult r = zv_estimate(p);
        CHECK(std::abs(r.value - p.v(a)) <= 1e-6 * (1.0 + std::abs(p.v(a))));
    }
}

TEST_CASE("double-well midpoint relaxes far below the density via laminates") {
    RelaxProblem p;
    p.v = double_well(kWellUp, kWellDown, 50.0);
    p.a = kWellMid;
    p.n = 8;
    p.budget = 8;
    const ZvResult r = zv_estimate(p);
    const double va = p.v(kWellMid);  // = |0.3 shear|^2 = 0.09
    CHECK(va == doctest::Approx(0.09).epsilon(1e-12));
    CHECK(r.value <= 0.05 * va);

    REQUIRE(!r.argmap.mesh.cells.empty());
    CHECK(boundary_trace_error(r.argmap, kWellMid) < 1e-12);
    const Certificate cert = certify_injective(r.argmap);
    CHECK(cert.injective);
    CHECK(cert.orientation_preserving);

    SUBCASE("user seeds can only lower the estimate") {
        LaminateSpec spec;
        spec.a = kWellUp;
        spec.b = kWellDown;
        spec.lambda = 0.5;
        spec.axis = 1;
        spec.period = 1.0 / 32;
        RelaxProblem q = p;
        q.seeds.push_back(make_laminate(Vec2(0, 0), Vec2(1, 1), spec));
        const ZvResult r2 = zv_estimate(q);
        CHECK(r2.value <= r.value + 1e-15);
        CHECK(r2.explored == r.explored + 1);
    }

    SUBCASE("wells without an axis-aligned lamination direction fall back to affine") {
        // Rank-one difference with normal (1,1)/sqrt(2): no planted laminate.
        const Vec2 dir(0.5, 0.0), normal(std::sqrt(0.5), std::sqrt(0.5));
        const Mat2 w1 = kWellMid + 0.5 * dir * normal.transpose();
        const Mat2 w2 = kWellMid - 0.5 * dir * normal.transpose();
        RelaxProblem q;
        q.v = double_well(w1, w2, 50.0);
        q.a = kWellMid;
        q.n = 6;
        q.budget = 2;
        const ZvResult r2 = zv_estimate(q);
        CHECK(r2.value <= q.v(kWellMid) + 1e-12);
    }
}

TEST_CASE("witness detection distinguishes convex from double-well densities") {
    const Density dw = double_well(kWellUp, kWellDown, 50.0);
    LaminateSpec spec;
    spec.a = kWellUp;
    spec.b = kWellDown;
    spec.lambda = 0.5;
    spec.axis = 1;
    spec.period = 1.0 / 64;
    const PAMap lam = make_laminate(Vec2(0, 0), Vec2(1, 1), spec);
    const PAMap aff = affine_map(structured_rect_mesh(Vec2(0, 0), Vec2(1, 1), 8, 8), kWellMid);

    SUBCASE("affine candidate never violates") {
        const ViolationWitness w = biqc_violation_witness(dw, kWellMid, aff);
        CHECK_FALSE(w.violates);
        CHECK(std::abs(w.gap) < 1e-12);
    }

    SUBCASE("laminate candidate witnesses the relaxation gap") {
        const ViolationWitness w = biqc_violation_witness(dw, kWellMid, lam);
        CHECK(w.violates);
        CHECK(w.gap > 0.5 * dw(kWellMid));
        CHECK(w.integral < 0.1 * dw(kWellMid));
    }

    SUBCASE("convex densities obey the Jensen inequality on every candidate") {
        const ViolationWitness w = biqc_violation_witness(frobenius_density(), kWellMid, lam);
        CHECK_FALSE(w.violates);
    }

    SUBCASE("candidates with the wrong trace are rejected") {
        CHECK_THROWS_AS(biqc_violation_witness(dw, mk(2, 0, 0, 2), lam), input_error);
    }
}

TEST_CASE("jensen check holds on laminate-generated measures") {
    LaminateSpec spec;
    spec.a = kWellUp;
    spec.b = kWellDown;
    spec.lambda = 0.5;
    spec.axis = 1;
    spec.period = 1.0 / 32;
    const PAMap lam = make_laminate(Vec2(0, 0), Vec2(1, 1), spec);
    const YoungMeasure m = empirical_measure({lam}, single_region(Vec2(0, 0), Vec2(1, 1)));
    const PAMap u = affine_map(structured_rect_mesh(Vec2(0, 0), Vec2(1, 1), 4, 4), kWellMid);

    SUBCASE("convex test density") {
        const auto res = jensen_check(m, u, frobenius_density(), 6);
        REQUIRE(res.size() == 1);
        CHECK(res[0].holds);
        CHECK(res[0].lhs <= res[0].rhs + 1e-6 + 1e-3 * std::abs(res[0].rhs));
    }

    SUBCASE("generating double well") {
        const auto res = jensen_check(m, u, double_well(kWellUp, kWellDown, 50.0), 6);
        REQUIRE(res.size() == 1);
        CHECK(res[0].holds);
        CHECK(res[0].lhs < res[0].rhs);
        CHECK(res[0].rhs < 0.1 * 0.09);  // the measure already sits close to the wells
    }

    SUBCASE("dirac measure at a matrix") {
        const YoungMeasure d = make_measure(single_region(Vec2(0, 0), Vec2(1, 1)),
                                            {{{kWellMid, 1.0}}});
        const auto res = jensen_check(d, u, frobenius_density(), 6);
        REQUIRE(res.size() == 1);
        CHECK(res[0].holds);
        CHECK(res[0].rhs == doctest::Approx(frobenius_density()(kWellMid)).epsilon(1e-12));
    }
}

TEST_CASE("interior descent lowers the energy monotonically") {
    const Mat2 a = mk(2, 0, 0, 1);
    PAMap map = affine_map(structured_rect_mesh(Vec2(0, 0), Vec2(1, 1), 8, 8), a);
    // Displace interior images; boundary images stay on the affine trace.
    Rng rng(0x5ca1ab1eu);
    std::vector<char> interior(map.mesh.vertices.size(), 1);
    for (const auto& loop : map.mesh.boundary_loops)
        for (const int v : loop) interior[static_cast<std::size_t>(v)] = 0;
    for (std::size_t v = 0; v < map.mesh.vertices.size(); ++v)
        if (interior[v])
            map.images[v] += Vec2(rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02));
    REQUIRE(certify_injective(map).injective);

    SUBCASE("area term only") {
        const Density v = frobenius_density();
        double e0 = 0;
        for (int c = 0; c < map.mesh.num_cells(); ++c)
            e0 += map.mesh.cell_area(c) * v(map.gradient(c));

        DescentOptions opt;
        opt.sweeps = 30;
        PAMap work = map;
        const DescentResult res = descend_interior_images(work, v, opt);
        CHECK(res.energy < e0);
        for (std::size_t s = 1; s < res.sweep_trace.size(); ++s)
            CHECK(res.sweep_trace[s] <= res.sweep_trace[s - 1] + 1e-12);
        // Jensen floor for a convex integrand under an affine trace.
        CHECK(res.energy >= v(a) * work.mesh.total_area() - 1e-9);
        CHECK(boundary_trace_error(work, a) == 0.0);
        CHECK(certify_injective(work).injective);
    }

    SUBCASE("sup-norm regularizer") {
        double start = 0, mx = 0, mi = 0;
        for (int c = 0; c < map.mesh.num_cells(); ++c) {
            mx = std::max(mx, spectral_norm(map.gradient(c)));
            mi = std::max(mi, inverse_spectral_norm(map.gradient(c)));
        }
        start = mx + mi;

        DescentOptions opt;
        opt.sweeps = 30;
        opt.sup_eps = 1.0;
        PAMap work = map;
        const DescentResult res = descend_interior_images(work, constant_density(0.0), opt);
        for (std::size_t s = 1; s < res.sweep_trace.size(); ++s)
            CHECK(res.sweep_trace[s] <= res.sweep_trace[s - 1] + 1e-12);
        // max|F| >= |A| and max|F^-1| >= |A^-1| for any map with this trace.
        const double floor = spectral_norm(a) + inverse_spectral_norm(a);
        CHECK(res.energy >= floor - 1e-9);
        CHECK(res.energy < start);

        // At the exact optimum the regularizer alone admits no improving move.
        PAMap flat = affine_map(map.mesh, a);
        const DescentResult stay = descend_interior_images(flat, constant_density(0.0), opt);
        CHECK(stay.energy <= floor + 1e-9);
    }
}
