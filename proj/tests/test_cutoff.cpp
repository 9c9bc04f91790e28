#include "doctest.h"

#include "bilip/cutoff.hpp"
#include "bilip/maps.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

using namespace bilip;

namespace {

// Independent coding of the pinned root search: descending scan over ten
// thousand samples, then bisection of the topmost sign change.
double scan_largest_root(const std::function<double(double)>& g) {
    const int n = 10000;
    double t_hi = 1.0, g_hi = g(1.0);
    if (g_hi == 0) return 1.0;
    for (int k = n - 1; k >= 0; --k) {
        const double t = static_cast<double>(k) / n;
        const double gt = g(t);
        if (gt == 0) return t;
        if ((gt < 0) != (g_hi < 0)) {
            double lo = t, hi = t_hi, g_lo = gt;
            for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double gm = g(mid);
                if (gm == 0) return mid;
                if ((gm < 0) == (g_lo < 0)) {
                    lo = mid;
                    g_lo = gm;
                } else {
                    hi = mid;
                }
            }
            return 0.5 * (lo + hi);
        }
        t_hi = t;
        g_hi = gt;
    }
    return -1;
}

PAMap identity_on_unit_square(int n = 24) {
    return identity_map(structured_rect_mesh(Vec2(0, 0), Vec2(1, 1), n, n));
}

int arm_of_edge_at(const BoundaryCross& c, int e, bool at_a, const GridComplex& g) {
    for (int k = 0; k < 4; ++k)
        if (c.arm_edge[static_cast<std::size_t>(k)] == e) {
            const GridEdge& ge = g.edges[static_cast<std::size_t>(e)];
            if ((at_a && ge.a == c.vertex) || (!at_a && ge.b == c.vertex)) return k;
        }
    return -1;
}

}  // namespace

TEST_CASE("arm extent: identity map reaches the quarter-radius sphere at one quarter") {
    const Mesh2 mesh = structured_rect_mesh(Vec2(-1, -1), Vec2(1, 1), 8, 8);
    const PAMap id = identity_map(mesh);
    const double r = 0.5;
    // |w + t r d - w| = t r equals r/4 exactly at t = 1/4.
    for (const Vec2& dir : {Vec2(1, 0), Vec2(-1, 0), Vec2(0, 1), Vec2(0, -1)}) {
        const double xi = find_xi(Vec2(0, 0), dir, false, id, id, r, 1.0);
        CHECK(xi == doctest::Approx(0.25).epsilon(1e-9));
    }
    // The ramp endpoint stays inside the admissible band [1/6, 1/3] for L = 1.
    CHECK(0.25 >= 1.0 / 6);
    CHECK(0.25 <= 1.0 / 3);
}

TEST_CASE("arm extent: diagonal stretch has hand-computable roots") {
    const Mesh2 mesh = structured_rect_mesh(Vec2(-1, -1), Vec2(1, 1), 8, 8);
    Mat2 a = Mat2::Zero();
    const double L = 1.5;
    a(0, 0) = L;
    a(1, 1) = 1.0 / L;
    const PAMap stretch = affine_map(mesh, a);
    const double r = 0.25;
    // Along e1 the image moves at speed L r, so t = 1/(4 L^2) = 1/9.
    const double xi1 = find_xi(Vec2(0, 0), Vec2(1, 0), false, stretch, stretch, r, L);
    CHECK(xi1 == doctest::Approx(1.0 / 9).epsilon(1e-9));
    // Along e2 the image moves at speed r/L, so t = 1/4.
    const double xi2 = find_xi(Vec2(0, 0), Vec2(0, 1), false, stretch, stretch, r, L);
    CHECK(xi2 == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("arm extent: agrees with an independently coded scan on random maps") {
    const Mesh2 mesh = structured_rect_mesh(Vec2(-1, -1), Vec2(1, 1), 10, 10);
    const double r = 0.25;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        const PAMap f = random_certified_map(mesh, 2.0, rng);
        const double L = bilip_constant(f);
        const MapEvaluator ef(f);
        const Vec2 w(0, 0);
        const Vec2 y_w = ef.forward(w);
        for (const Vec2& dir : {Vec2(1, 0), Vec2(0, 1)}) {
            const double xi = find_xi(w, dir, false, f, f, r, L);
            const double target = r / (4 * L);
            const auto g = [&](double t) {
                return (ef.forward(w + t * r * dir) - y_w).norm() - target;
            };
            const double oracle = scan_largest_root(g);
            REQUIRE(oracle > 0);
            CHECK(std::abs(xi - oracle) <= 1e-9);
        }
    }
}

TEST_CASE("arm extent: unreachable target and out-of-band roots throw") {
    const Mesh2 mesh = structured_rect_mesh(Vec2(-1, -1), Vec2(1, 1), 8, 8);
    const PAMap id = identity_map(mesh);
    const double r = 0.25;

    SUBCASE("hub image displaced far away is never approached to the target radius") {
        const PAMap shifted = affine_map(mesh, Mat2::Identity(), Vec2(10 * r, 0));
        CHECK_THROWS_AS(find_xi(Vec2(0, 0), Vec2(1, 0), true, id, shifted, r, 1.0),
                        numeric_error);
    }
    SUBCASE("understated distortion bound pushes the root below the band") {
        Mat2 a = Mat2::Zero();
        a(0, 0) = 2.0;
        a(1, 1) = 0.5;
        const PAMap stretch = affine_map(mesh, a);
        // True root 1/8 lies below 1/6, the band floor for the claimed L = 1.
        CHECK_THROWS_AS(find_xi(Vec2(0, 0), Vec2(1, 0), false, stretch, stretch, r, 1.0),
                        numeric_error);
    }
}

TEST_CASE("closeness gate: constant shift against the exact threshold") {
    const GridComplex grid = build_tiling(unit_square_domain(), 0.25);
    const PAMap y = identity_on_unit_square();
    const double L = 2.0;
    const double bound = grid.r / (12 * L * L * L);

    const auto shifted = [&](double s) {
        return affine_map(y.mesh, Mat2::Identity(), Vec2(s, 0));
    };
    CHECK(check_closeness(y, y, grid, L));
    CHECK(check_closeness(shifted((1 - 1e-6) * bound), y, grid, L));
    // The gate is a closed inequality: the exact threshold passes.
    CHECK(check_closeness(shifted(bound), y, grid, L));
    CHECK_FALSE(check_closeness(shifted((1 + 1e-6) * bound), y, grid, L));
}

TEST_CASE("crosses: identity tiling places every arm extent at one quarter") {
    const GridComplex grid = build_tiling(unit_square_domain(), 0.25);
    const PAMap id = identity_on_unit_square();
    const auto crosses = build_crosses(grid, id, id, 1.0);

    REQUIRE(crosses.size() == grid.gamma_vertices.size());
    int cornering = 0;
    for (const BoundaryCross& c : crosses) {
        CHECK((c.y_w - c.w).norm() <= 1e-13);
        int inner_arms = 0, cycle_arms = 0;
        for (int k = 0; k < 4; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            CHECK(c.xi[ks] == doctest::Approx(0.25).epsilon(1e-9));
            const Vec2 nbr = grid.vertex_pos(c.arm_vertex[ks]);
            CHECK((c.extremals[ks] - (c.w + c.xi[ks] * (nbr - c.w))).norm() <= 1e-12);
            CHECK((c.f_p[ks] - c.extremals[ks]).norm() <= 1e-12);
            CHECK(c.arms[ks].norm() == doctest::Approx(1.0).epsilon(1e-12));
            const auto& ge = grid.edges[static_cast<std::size_t>(c.arm_edge[ks])];
            CHECK((ge.a == c.vertex || ge.b == c.vertex));
            if (c.inner[ks]) ++inner_arms;
            if (ge.label == EdgeLabel::Gamma) ++cycle_arms;
        }
        // Two arms continue the separating cycle. A straight-through junction
        // has one arm toward each side of the cycle; where the cycle turns a
        // corner, both transverse arms point to the outer side.
        CHECK(cycle_arms == 2);
        CHECK(inner_arms <= 1);
        if (inner_arms == 0) ++cornering;
    }
    // The square ring turns four corners.
    CHECK(cornering == 4);
}

TEST_CASE("edge function: identity grid reproduces positions with dense sampling") {
    const GridComplex grid = build_tiling(unit_square_domain(), 0.25);
    const PAMap id = identity_on_unit_square();
    const auto crosses = build_crosses(grid, id, id, 1.0);
    const EdgeMap em = edge_map(grid, crosses, id, id);

    REQUIRE(em.curves.size() == grid.edges.size());
    int covered_ends = 0;
    for (std::size_t e = 0; e < em.curves.size(); ++e) {
        const EdgeCurve& c = em.curves[e];
        REQUIRE(c.params.size() >= 9);
        REQUIRE(c.params.size() == c.values.size());
        CHECK(c.params.front() == 0.0);
        CHECK(c.params.back() == 1.0);
        for (std::size_t k = 1; k < c.params.size(); ++k)
            CHECK(c.params[k] > c.params[k - 1]);
        for (std::size_t k = 0; k < c.params.size(); ++k)
            CHECK((c.values[k] - em.point(static_cast<int>(e), c.params[k])).norm() <= 1e-12);

        // Every subsegment (below, between, above the ramps) holds at least
        // nine samples.
        const auto count_in = [&](double lo, double hi) {
            int n = 0;
            for (const double t : c.params)
                if (t >= lo - 1e-12 && t <= hi + 1e-12) ++n;
            return n;
        };
        if (c.xi_a > 0) {
            ++covered_ends;
            CHECK(count_in(0, c.xi_a) >= 9);
        }
        if (c.xi_b > 0) {
            ++covered_ends;
            CHECK(count_in(1 - c.xi_b, 1) >= 9);
        }
        CHECK(count_in(c.xi_a, 1 - c.xi_b) >= 9);
        CHECK(c.xi_a + c.xi_b <= (2.0 / 3) * (1 + 1e-9));

        // Ramp endpoints carry the stored junction images verbatim.
        if (c.cross_a >= 0) {
            const int arm = arm_of_edge_at(em.crosses[static_cast<std::size_t>(c.cross_a)],
                                           static_cast<int>(e), true, grid);
            REQUIRE(arm >= 0);
            const auto it = std::find(c.params.begin(), c.params.end(), c.xi_a);
            REQUIRE(it != c.params.end());
            const auto k = static_cast<std::size_t>(it - c.params.begin());
            CHECK(c.values[k] ==
                  em.crosses[static_cast<std::size_t>(c.cross_a)].f_p[static_cast<std::size_t>(arm)]);
            CHECK(c.values.front() == em.crosses[static_cast<std::size_t>(c.cross_a)].y_w);
        }

        // Piecewise-linear interpolation between stored samples.
        for (std::size_t k = 0; k + 1 < c.params.size(); k += 3) {
            const double tm = 0.5 * (c.params[k] + c.params[k + 1]);
            const Vec2 expect = 0.5 * (c.values[k] + c.values[k + 1]);
            CHECK((em.eval(static_cast<int>(e), tm) - expect).norm() <= 1e-14);
        }
    }
    // Each junction covers its four incident edge-ends, and nothing else does.
    CHECK(covered_ends == 4 * static_cast<int>(em.crosses.size()));
}

TEST_CASE("skeleton distortion: identity edge function is unit and deterministic") {
    const GridComplex grid = build_tiling(unit_square_domain(), 0.25);
    const PAMap id = identity_on_unit_square();
    const auto crosses = build_crosses(grid, id, id, 1.0);
    const EdgeMap em = edge_map(grid, crosses, id, id);

    const GridBilipReport rep = verify_grid_bilip(em, 1.0, 30000, 99);
    CHECK(rep.ok);
    CHECK(rep.pairs > 20000);
    CHECK(rep.measured == doctest::Approx(1.0).epsilon(1e-9));
    // All four configuration classes are exercised and all sit at unit ratio.
    for (const double cls : {rep.same_arm, rep.off_off, rep.cross_off, rep.cross_cross}) {
        CHECK(cls > 0);
        CHECK(cls == doctest::Approx(1.0).epsilon(1e-9));
    }

    const GridBilipReport again = verify_grid_bilip(em, 1.0, 30000, 99);
    CHECK(again.measured == rep.measured);
    CHECK(again.pairs == rep.pairs);
    CHECK(again.same_arm == rep.same_arm);

    const GridBilipReport other = verify_grid_bilip(em, 1.0, 30000, 1234);
    CHECK(other.ok);
    CHECK(other.measured == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("skeleton distortion: nearby pair respects the per-class ceilings") {
    const GridComplex grid = build_tiling(unit_square_domain(), 0.25);
    const PAMap y = identity_on_unit_square();
    const double L = 2.0;
    Rng rng(7);
    const PAMap yt = nearby_certified_map(y, L, 0.35 * grid.r / (12 * L * L * L), rng);
    REQUIRE(check_closeness(yt, y, grid, L));

    const auto crosses = build_crosses(grid, yt, y, L);
    const EdgeMap em = edge_map(grid, crosses, yt, y);
    const GridBilipReport rep = verify_grid_bilip(em, L, 100000, 0x5eed);
    CHECK(rep.ok);
    CHECK(rep.pairs > 80000);
    CHECK(rep.measured <= 18 * L * (1 + 1e-9));
    CHECK(rep.same_arm > 0);
    CHECK(rep.same_arm <= 2 * L * (1 + 1e-9));
    CHECK(rep.off_off > 0);
    CHECK(rep.off_off <= 2 * L * (1 + 1e-9));
    CHECK(rep.cross_off > 0);
    CHECK(rep.cross_off <= 6 * L * (1 + 1e-9));
    CHECK(rep.cross_cross > 0);
    CHECK(rep.cross_cross <= 18 * L * (1 + 1e-9));
}

TEST_CASE("strip extension: identity data reassembles to the identity") {
    const GridComplex grid = build_tiling(unit_square_domain(), 0.25);
    const PAMap id = identity_on_unit_square();
    const auto crosses = build_crosses(grid, id, id, 1.0);
    const EdgeMap em = edge_map(grid, crosses, id, id);

    const PAMap u = extend_all_squares(em, grid, 8);
    REQUIRE(u.mesh.num_cells() > 0);
    for (int v = 0; v < u.mesh.num_vertices(); ++v)
        CHECK((u.images[static_cast<std::size_t>(v)] -
               u.mesh.vertices[static_cast<std::size_t>(v)]).norm() <= 1e-12);

    // Skeleton samples reappear as glued nodes carrying their stored images
    // verbatim.
    for (std::size_t e = 0; e < em.curves.size(); e += 17) {
        const EdgeCurve& c = em.curves[e];
        const std::size_t k = c.params.size() / 2;
        const Vec2 p = em.point(static_cast<int>(e), c.params[k]);
        int best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (int v = 0; v < u.mesh.num_vertices(); ++v) {
            const double d = (u.mesh.vertices[static_cast<std::size_t>(v)] - p).norm();
            if (d < bd) {
                bd = d;
                best = v;
            }
        }
        REQUIRE(bd <= 1e-10);
        CHECK(u.images[static_cast<std::size_t>(best)] == c.values[k]);
    }

    const Certificate cert = certify_injective(u);
    CHECK(cert.injective);
    CHECK(cert.orientation_preserving);
}

TEST_CASE("glue: affine pair reproduces the affine map on the whole domain") {
    const GridComplex grid = build_tiling(unit_square_domain(), 0.25);
    Mat2 a;
    a << 1.2, 0.3, 0.1, 0.9;
    const PAMap aff = affine_map(structured_rect_mesh(Vec2(0, 0), Vec2(1, 1), 24, 24), a);
    const double L = bilip_constant(aff);

    const auto crosses = build_crosses(grid, aff, aff, L);
    const EdgeMap em = edge_map(grid, crosses, aff, aff);
    CutoffStats stats;
    const PAMap u = extend_and_glue(em, grid, aff, aff, &stats, 8);

    CHECK(stats.squares == 96);
    CHECK(stats.modified_area ==
          doctest::Approx(grid.area_strip + grid.area_bound).epsilon(1e-14));
    CHECK(stats.modified_fraction == doctest::Approx(stats.modified_area).epsilon(1e-12));
    CHECK(stats.measured_bilip == doctest::Approx(L).epsilon(1e-6));
    CHECK(stats.mesh_cells == u.mesh.num_cells());

    // The assembled map agrees with x -> A x everywhere, not just off the strip.
    const MapEvaluator eu(u);
    Rng rng(3);
    for (int k = 0; k < 300; ++k) {
        const Vec2 p(rng.uniform(0.01, 0.99), rng.uniform(0.01, 0.99));
        CHECK((eu.forward(p) - a * p).norm() <= 1e-8);
    }

    // Boundary nodes carry the outer map's trace verbatim.
    const MapEvaluator ey(aff);
    REQUIRE(!u.mesh.boundary_loops.empty());
    for (const auto& loop : u.mesh.boundary_loops)
        for (const int v : loop)
            CHECK(u.images[static_cast<std::size_t>(v)] ==
                  ey.forward(u.mesh.vertices[static_cast<std::size_t>(v)]));
}

TEST_CASE("glue: nearby pair keeps inner gradients inside and the outer trace on the boundary") {
    const GridComplex grid = build_tiling(unit_square_domain(), 0.25);
    const PAMap y = identity_on_unit_square();
    const double L = 2.0;
    Rng rng(11);
    const PAMap yt = nearby_certified_map(y, L, 0.35 * grid.r / (12 * L * L * L), rng);
    REQUIRE(check_closeness(yt, y, grid, L));

    const auto crosses = build_crosses(grid, yt, y, L);
    const EdgeMap em = edge_map(grid, crosses, yt, y);
    CutoffStats stats;
    const PAMap u = extend_and_glue(em, grid, yt, y, &stats, 8);

    const Certificate cert = certify_injective(u);
    CHECK(cert.injective);
    CHECK(cert.orientation_preserving);
    CHECK(stats.measured_bilip == doctest::Approx(cert.bilip).epsilon(1e-12));

    // On interior (bulk) squares the glued map is the inner map, gradients
    // included; on the collar it is the outer map.
    const MapEvaluator eu(u), et(yt), eyv(y);
    int bulk_checked = 0, bound_checked = 0;
    Rng prng(5);
    for (int trial = 0; trial < 4000 && (bulk_checked < 120 || bound_checked < 60); ++trial) {
        const int i = static_cast<int>(prng.uniform() * grid.nx);
        const int j = static_cast<int>(prng.uniform() * grid.ny);
        const CellClass cc = grid.cls(i, j);
        if (cc != CellClass::Bulk && cc != CellClass::Bound) continue;
        const Vec2 p = grid.origin +
                       Vec2((i + prng.uniform(0.2, 0.8)) * grid.r, (j + prng.uniform(0.2, 0.8)) * grid.r);
        std::array<double, 3> bu, bf;
        const int cu = eu.locate(p, bu);
        const MapEvaluator& ef = cc == CellClass::Bulk ? et : eyv;
        const PAMap& fmap = cc == CellClass::Bulk ? yt : y;
        const int cf = ef.locate(p, bf);
        if (cu < 0 || cf < 0) continue;
        CHECK((eu.forward(p) - ef.forward(p)).norm() <= 1e-10);
        CHECK((u.gradient(cu) - fmap.gradient(cf)).norm() <= 1e-7);
        (cc == CellClass::Bulk ? bulk_checked : bound_checked)++;
    }
    CHECK(bulk_checked >= 120);
    CHECK(bound_checked >= 60);

    const MapEvaluator ey(y);
    for (const auto& loop : u.mesh.boundary_loops)
        for (const int v : loop)
            CHECK(u.images[static_cast<std::size_t>(v)] ==
                  ey.forward(u.mesh.vertices[static_cast<std::size_t>(v)]));
}

TEST_CASE("staged replacement: budgets consume the sequence monotonically") {
    const Domain2 dom = unit_square_domain();
    const PAMap y = identity_on_unit_square();

    // Rigid-motion companions at three distances; the middle one is far too
    // distant for any budget and must be passed over.
    Rng rng(21);
    const double b1 = (1.0 / 32) / 12;  // gate at the first budget's grid pitch
    std::vector<PAMap> seq;
    seq.push_back(nearby_certified_map(y, 1.0, 0.4 * b1, rng));
    seq.push_back(nearby_certified_map(y, 1.0, 50 * b1, rng));
    seq.push_back(nearby_certified_map(y, 1.0, 0.02 * b1, rng));

    SUBCASE("far members are skipped, areas shrink under the budgets") {
        const CutoffSequenceResult res = cutoff_sequence(seq, y, dom, {0.4, 0.2}, 8);
        REQUIRE(res.maps.size() == 2);
        CHECK(res.warnings.empty());
        REQUIRE(res.source_index.size() == 2);
        CHECK(res.source_index[0] == 0);
        CHECK(res.source_index[1] == 2);
        CHECK(res.deltas_used[0] == 0.4);
        CHECK(res.deltas_used[1] == 0.2);
        CHECK(res.modified_area[0] <= 0.4 * (1 + 1e-12));
        CHECK(res.modified_area[1] <= 0.2 * (1 + 1e-12));
        CHECK(res.modified_area[1] < res.modified_area[0]);
        for (const PAMap& u : res.maps) {
            const Certificate cert = certify_injective(u);
            CHECK(cert.injective);
            CHECK(cert.orientation_preserving);
        }
    }

    SUBCASE("an exhausted sequence leaves warnings, not maps") {
        const std::vector<PAMap> one = {seq[0]};
        const CutoffSequenceResult res = cutoff_sequence(one, y, dom, {0.4, 0.2, 0.1}, 8);
        CHECK(res.maps.size() == 1);
        CHECK(res.source_index == std::vector<int>{0});
        REQUIRE(res.warnings.size() == 2);
        for (const std::string& w : res.warnings)
            CHECK(w.find("skipped") != std::string::npos);
    }
}
