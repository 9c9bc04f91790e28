#include "bilip/cutoff.hpp"

#include "bilip/extension.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>
#include <utility>

namespace bilip {

namespace {

// Two-sided distortion of one point pair.
double pair_distortion(const Vec2& za, const Vec2& zb, const Vec2& ua, const Vec2& ub) {
    const double dz = (za - zb).norm();
    const double du = (ua - ub).norm();
    if (du == 0) return std::numeric_limits<double>::infinity();
    return std::max(du / dz, dz / du);
}

}  // namespace

Vec2 EdgeMap::point(int e, double t) const {
    const auto& ab = ends[static_cast<std::size_t>(e)];
    return ab[0] + t * (ab[1] - ab[0]);
}

Vec2 EdgeMap::eval(int e, double t) const {
    const EdgeCurve& c = curves[static_cast<std::size_t>(e)];
    if (t <= c.params.front()) return c.values.front();
    if (t >= c.params.back()) return c.values.back();
    const auto it = std::upper_bound(c.params.begin(), c.params.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - c.params.begin());
    const double t0 = c.params[k - 1], t1 = c.params[k];
    const double s = (t - t0) / (t1 - t0);
    return (1 - s) * c.values[k - 1] + s * c.values[k];
}

bool check_closeness(const PAMap& ytilde, const PAMap& y, const GridComplex& grid, double L) {
    const MapEvaluator eyt(ytilde), ey(y);
    double worst = 0;
    const auto consider = [&](const Vec2& p) {
        worst = std::max(worst, (eyt.forward(p) - ey.forward(p)).norm());
    };
    for (const Vec2& v : ytilde.mesh.vertices) consider(v);
    for (const Vec2& v : y.mesh.vertices) consider(v);
    for (const GridEdge& ge : grid.edges) {
        const Vec2 pa = grid.vertex_pos(ge.a), pb = grid.vertex_pos(ge.b);
        for (int k = 0; k <= 8; ++k) consider(pa + (k / 8.0) * (pb - pa));
    }
    const double bound = grid.r / (12 * L * L * L);
    return worst <= bound * (1 + 1e-12);
}

namespace {

// Largest parameter along one arm where the arm map leaves the r/(4L) sphere
// around the hub image. Descending scan plus bisection; throws when no
// crossing exists or the crossing leaves the admissible band.
double find_xi_impl(const MapEvaluator& f, const Vec2& y_w, const Vec2& w, const Vec2& arm_step,
                    double r, double L) {
    const double target = r / (4 * L);
    const auto g = [&](double t) { return (f.forward(w + t * arm_step) - y_w).norm() - target; };

    constexpr int kScan = 10000;
    double root = std::numeric_limits<double>::quiet_NaN();
    double t_hi = 1.0, g_hi = g(1.0);
    if (g_hi == 0) {
        root = 1.0;
    } else {
        for (int k = kScan - 1; k >= 0; --k) {
            const double t = static_cast<double>(k) / kScan;
            const double gt = g(t);
            if (gt == 0) {
                root = t;
                break;
            }
            if ((gt < 0) != (g_hi < 0)) {
                double lo = t, hi = t_hi, g_lo = gt;
                while (hi - lo > 1e-10) {
                    const double mid = 0.5 * (lo + hi);
                    const double gm = g(mid);
                    if (gm == 0) {
                        lo = hi = mid;
                        break;
                    }
                    if ((gm < 0) == (g_lo < 0)) {
                        lo = mid;
                        g_lo = gm;
                    } else {
                        hi = mid;
                    }
                }
                root = 0.5 * (lo + hi);
                break;
            }
            t_hi = t;
            g_hi = gt;
        }
    }
    if (!(root > 0)) {
        throw numeric_error(
            "arm extent: the arm image never reaches distance r/(4L) from the hub "
            "(closeness precondition violated)");
    }
    const double band_lo = 1.0 / (6 * L * L), band_hi = 1.0 / 3;
    if (root < band_lo * (1 - 1e-9) || root > band_hi * (1 + 1e-9)) {
        std::ostringstream msg;
        msg << "arm extent " << root << " outside [" << band_lo << ", " << band_hi
            << "] (bi-Lipschitz precondition violated)";
        throw numeric_error(msg.str());
    }
    return root;
}

}  // namespace

double find_xi(const Vec2& w, const Vec2& arm_dir, bool inner, const PAMap& ytilde,
               const PAMap& y, double r, double L) {
    const MapEvaluator ey(y);
    const MapEvaluator ef(inner ? ytilde : y);
    return find_xi_impl(ef, ey.forward(w), w, r * arm_dir, r, L);
}

std::vector<BoundaryCross> build_crosses(const GridComplex& grid, const PAMap& ytilde,
                                         const PAMap& y, double L) {
    const MapEvaluator eyt(ytilde), ey(y);
    std::vector<BoundaryCross> out;
    out.reserve(grid.gamma_vertices.size());
    for (const int vid : grid.gamma_vertices) {
        BoundaryCross c;
        c.vertex = vid;
        c.w = grid.vertex_pos(vid);
        c.y_w = ey.forward(c.w);
        const auto nbrs = grid.arm_neighbors(vid);
        for (int i = 0; i < 4; ++i) {
            const int nb = nbrs[static_cast<std::size_t>(i)];
            const int e = grid.edge_index(vid, nb);
            if (e < 0)
                throw numeric_error("cross at vertex " + std::to_string(vid) +
                                    ": arm edge missing from the strip skeleton");
            c.arm_vertex[static_cast<std::size_t>(i)] = nb;
            c.arm_edge[static_cast<std::size_t>(i)] = e;
            const Vec2 step = grid.vertex_pos(nb) - c.w;
            c.arms[static_cast<std::size_t>(i)] = step / grid.r;
            const bool inner = grid.edges[static_cast<std::size_t>(e)].label == EdgeLabel::Inner;
            c.inner[static_cast<std::size_t>(i)] = inner;
            const MapEvaluator& ef = inner ? eyt : ey;
            try {
                c.xi[static_cast<std::size_t>(i)] = find_xi_impl(ef, c.y_w, c.w, step, grid.r, L);
            } catch (const numeric_error& err) {
                throw numeric_error("cross at vertex " + std::to_string(vid) + ", arm " +
                                    std::to_string(i) + ": " + err.what());
            }
            c.extremals[static_cast<std::size_t>(i)] = c.w + c.xi[static_cast<std::size_t>(i)] * step;
            c.f_p[static_cast<std::size_t>(i)] = ef.forward(c.extremals[static_cast<std::size_t>(i)]);
        }
        out.push_back(c);
    }
    return out;
}

namespace {

// Insert uniform parameters so every subsegment [lo, hi] of the edge carries
// at least eight sample intervals.
void fill_subsegment(std::vector<double>& ts, double lo, double hi) {
    if (!(hi > lo)) return;
    for (int j = 1; j < 8; ++j) {
        const double t = lo + j * (hi - lo) / 8;
        bool close = false;
        for (const double s : ts)
            if (std::abs(s - t) < 1e-6) {
                close = true;
                break;
            }
        if (!close) ts.push_back(t);
    }
}

}  // namespace

EdgeMap edge_map(const GridComplex& grid, const std::vector<BoundaryCross>& crosses,
                 const PAMap& ytilde, const PAMap& y) {
    const MapEvaluator eyt(ytilde), ey(y);
    const double r = grid.r;
    const int ne = static_cast<int>(grid.edges.size());

    EdgeMap em;
    em.r = r;
    em.crosses = crosses;
    em.curves.resize(static_cast<std::size_t>(ne));
    em.ends.resize(static_cast<std::size_t>(ne));

    // Arm coverage per (edge, endpoint).
    struct ArmRef {
        int cross = -1, arm = -1;
    };
    std::vector<ArmRef> at_a(static_cast<std::size_t>(ne)), at_b(static_cast<std::size_t>(ne));
    std::unordered_map<int, int> cross_of_vertex;
    for (std::size_t ci = 0; ci < crosses.size(); ++ci) {
        cross_of_vertex[crosses[ci].vertex] = static_cast<int>(ci);
        for (int k = 0; k < 4; ++k) {
            const int e = crosses[ci].arm_edge[static_cast<std::size_t>(k)];
            ArmRef& slot = grid.edges[static_cast<std::size_t>(e)].a == crosses[ci].vertex
                               ? at_a[static_cast<std::size_t>(e)]
                               : at_b[static_cast<std::size_t>(e)];
            slot = {static_cast<int>(ci), k};
        }
    }

    // Canonical image per lattice vertex: the hub image at cross vertices, the
    // edge map's own value elsewhere.
    std::unordered_map<int, Vec2> vval;
    const auto vertex_value = [&](int vid, bool inner) -> Vec2 {
        const auto it = vval.find(vid);
        if (it != vval.end()) return it->second;
        Vec2 val;
        if (const auto g = cross_of_vertex.find(vid); g != cross_of_vertex.end())
            val = crosses[static_cast<std::size_t>(g->second)].y_w;
        else
            val = (inner ? eyt : ey).forward(grid.vertex_pos(vid));
        vval.emplace(vid, val);
        return val;
    };

    for (int e = 0; e < ne; ++e) {
        const GridEdge& ge = grid.edges[static_cast<std::size_t>(e)];
        const Vec2 pa = grid.vertex_pos(ge.a), pb = grid.vertex_pos(ge.b);
        em.ends[static_cast<std::size_t>(e)] = {pa, pb};
        const bool inner = ge.label == EdgeLabel::Inner;
        const MapEvaluator& ef = inner ? eyt : ey;
        const Mesh2& fmesh = inner ? ytilde.mesh : y.mesh;

        EdgeCurve cur;
        if (at_a[static_cast<std::size_t>(e)].cross >= 0) {
            cur.cross_a = at_a[static_cast<std::size_t>(e)].cross;
            cur.xi_a = crosses[static_cast<std::size_t>(cur.cross_a)]
                           .xi[static_cast<std::size_t>(at_a[static_cast<std::size_t>(e)].arm)];
        }
        if (at_b[static_cast<std::size_t>(e)].cross >= 0) {
            cur.cross_b = at_b[static_cast<std::size_t>(e)].cross;
            cur.xi_b = crosses[static_cast<std::size_t>(cur.cross_b)]
                           .xi[static_cast<std::size_t>(at_b[static_cast<std::size_t>(e)].arm)];
        }
        const double klo = cur.xi_a, khi = 1 - cur.xi_b;

        std::vector<double> ts = {0.0, 1.0};
        if (cur.xi_a > 0) ts.push_back(cur.xi_a);
        if (cur.xi_b > 0) ts.push_back(1 - cur.xi_b);
        for (const double t : segment_kink_params(fmesh, pa, pb))
            if (t > klo + 1e-6 && t < khi - 1e-6) ts.push_back(t);
        std::sort(ts.begin(), ts.end());
        ts.erase(std::unique(ts.begin(), ts.end(),
                             [](double u, double v) { return std::abs(u - v) < 1e-6; }),
                 ts.end());
        if (cur.xi_a > 0) fill_subsegment(ts, 0.0, cur.xi_a);
        if (cur.xi_b > 0) fill_subsegment(ts, 1 - cur.xi_b, 1.0);
        fill_subsegment(ts, klo, khi);
        std::sort(ts.begin(), ts.end());

        cur.params = ts;
        cur.values.reserve(ts.size());
        for (const double t : ts) {
            Vec2 v;
            if (t == 0.0) {
                v = cur.cross_a >= 0 ? crosses[static_cast<std::size_t>(cur.cross_a)].y_w
                                     : vertex_value(ge.a, inner);
            } else if (t == 1.0) {
                v = cur.cross_b >= 0 ? crosses[static_cast<std::size_t>(cur.cross_b)].y_w
                                     : vertex_value(ge.b, inner);
            } else if (cur.xi_a > 0 && t == cur.xi_a) {
                const auto& c = crosses[static_cast<std::size_t>(cur.cross_a)];
                v = c.f_p[static_cast<std::size_t>(at_a[static_cast<std::size_t>(e)].arm)];
            } else if (cur.xi_b > 0 && t == 1 - cur.xi_b) {
                const auto& c = crosses[static_cast<std::size_t>(cur.cross_b)];
                v = c.f_p[static_cast<std::size_t>(at_b[static_cast<std::size_t>(e)].arm)];
            } else if (cur.xi_a > 0 && t < cur.xi_a) {
                const auto& c = crosses[static_cast<std::size_t>(cur.cross_a)];
                const auto arm = static_cast<std::size_t>(at_a[static_cast<std::size_t>(e)].arm);
                v = c.y_w + (t / cur.xi_a) * (c.f_p[arm] - c.y_w);
            } else if (cur.xi_b > 0 && t > 1 - cur.xi_b) {
                const auto& c = crosses[static_cast<std::size_t>(cur.cross_b)];
                const auto arm = static_cast<std::size_t>(at_b[static_cast<std::size_t>(e)].arm);
                v = c.y_w + ((1 - t) / cur.xi_b) * (c.f_p[arm] - c.y_w);
            } else {
                v = ef.forward(pa + t * (pb - pa));
            }
            cur.values.push_back(v);
        }

        // Continuity: endpoint values must match an independent evaluation and
        // ramp junctions must meet the off-arm map.
        const Vec2 exp_a = cur.cross_a >= 0 ? ey.forward(pa) : ef.forward(pa);
        const Vec2 exp_b = cur.cross_b >= 0 ? ey.forward(pb) : ef.forward(pb);
        if ((cur.values.front() - exp_a).norm() > 1e-9 || (cur.values.back() - exp_b).norm() > 1e-9)
            throw numeric_error("edge map: discontinuity at a lattice vertex of edge " +
                                std::to_string(e));
        if (cur.xi_a > 0) {
            const auto& c = crosses[static_cast<std::size_t>(cur.cross_a)];
            const auto arm = static_cast<std::size_t>(at_a[static_cast<std::size_t>(e)].arm);
            if ((c.y_w + (c.f_p[arm] - c.y_w) - c.f_p[arm]).norm() > 1e-9)
                throw numeric_error("edge map: ramp junction mismatch on edge " + std::to_string(e));
        }
        if (cur.xi_b > 0) {
            const auto& c = crosses[static_cast<std::size_t>(cur.cross_b)];
            const auto arm = static_cast<std::size_t>(at_b[static_cast<std::size_t>(e)].arm);
            if ((c.y_w + (c.f_p[arm] - c.y_w) - c.f_p[arm]).norm() > 1e-9)
                throw numeric_error("edge map: ramp junction mismatch on edge " + std::to_string(e));
        }
        em.curves[static_cast<std::size_t>(e)] = std::move(cur);
    }
    return em;
}

namespace {

struct SkeletonPoint {
    int edge = -1;
    double t = 0;
    Vec2 z = Vec2::Zero();
    Vec2 u = Vec2::Zero();
    int arm = -1;  // 4 * cross + arm index when covered, else -1
};

SkeletonPoint make_point(const EdgeMap& em, const std::vector<std::array<int, 2>>& arm_ref, int e,
                         double t) {
    SkeletonPoint p;
    p.edge = e;
    p.t = t;
    p.z = em.point(e, t);
    p.u = em.eval(e, t);
    const EdgeCurve& c = em.curves[static_cast<std::size_t>(e)];
    if (c.xi_a > 0 && t < c.xi_a)
        p.arm = arm_ref[static_cast<std::size_t>(e)][0];
    else if (c.xi_b > 0 && t > 1 - c.xi_b)
        p.arm = arm_ref[static_cast<std::size_t>(e)][1];
    return p;
}

}  // namespace

GridBilipReport verify_grid_bilip(const EdgeMap& em, double L, int pairs, std::uint64_t seed) {
    GridBilipReport rep;
    const int ne = static_cast<int>(em.curves.size());
    if (ne == 0 || pairs <= 0) {
        rep.ok = true;
        return rep;
    }

    // Arm id (4 * cross + k) per edge endpoint.
    std::vector<std::array<int, 2>> arm_ref(static_cast<std::size_t>(ne), {-1, -1});
    for (std::size_t ci = 0; ci < em.crosses.size(); ++ci)
        for (int k = 0; k < 4; ++k) {
            const int e = em.crosses[ci].arm_edge[static_cast<std::size_t>(k)];
            const EdgeCurve& c = em.curves[static_cast<std::size_t>(e)];
            const int id = 4 * static_cast<int>(ci) + k;
            if (c.cross_a == static_cast<int>(ci) &&
                em.crosses[ci].arm_edge[static_cast<std::size_t>(k)] == e &&
                (em.point(e, 0) - em.crosses[ci].w).norm() < 1e-12 * em.r + 1e-300)
                arm_ref[static_cast<std::size_t>(e)][0] = id;
            else
                arm_ref[static_cast<std::size_t>(e)][1] = id;
        }

    Rng rng(seed);
    const auto rand_edge = [&]() {
        return std::min(ne - 1, static_cast<int>(rng.uniform() * ne));
    };
    const auto rand_point = [&]() { return make_point(em, arm_ref, rand_edge(), rng.uniform()); };

    const auto record = [&](const SkeletonPoint& a, const SkeletonPoint& b) {
        const double dz = (a.z - b.z).norm();
        if (dz < 1e-12 * em.r) return;
        const double d = pair_distortion(a.z, b.z, a.u, b.u);
        rep.measured = std::max(rep.measured, d);
        ++rep.pairs;
        if (a.arm >= 0 && b.arm >= 0) {
            if (a.arm == b.arm)
                rep.same_arm = std::max(rep.same_arm, d);
            else
                rep.cross_cross = std::max(rep.cross_cross, d);
        } else if (a.arm < 0 && b.arm < 0) {
            rep.off_off = std::max(rep.off_off, d);
        } else {
            rep.cross_off = std::max(rep.cross_off, d);
        }
    };

    // Arm sampler: uniform parameter inside one covered arm segment.
    std::vector<std::pair<int, bool>> arms;  // (edge, covered-from-a)
    for (int e = 0; e < ne; ++e) {
        const EdgeCurve& c = em.curves[static_cast<std::size_t>(e)];
        if (c.xi_a > 0) arms.emplace_back(e, true);
        if (c.xi_b > 0) arms.emplace_back(e, false);
    }
    const auto rand_arm_point = [&](int which) {
        const auto& [e, from_a] = arms[static_cast<std::size_t>(which)];
        const EdgeCurve& c = em.curves[static_cast<std::size_t>(e)];
        const double s = rng.uniform();
        const double t = from_a ? s * c.xi_a : 1 - s * c.xi_b;
        return make_point(em, arm_ref, e, t);
    };
    const auto rand_off_point = [&]() {
        for (int tries = 0; tries < 64; ++tries) {
            const SkeletonPoint p = rand_point();
            if (p.arm < 0) return p;
        }
        return make_point(em, arm_ref, 0, 0.5);
    };

    const int general = pairs * 2 / 5;
    for (int k = 0; k < general; ++k) record(rand_point(), rand_point());

    if (!arms.empty()) {
        const int quota = (pairs - general) / 4;
        const int na = static_cast<int>(arms.size());
        for (int k = 0; k < quota; ++k) {
            const int a = k % na;
            record(rand_arm_point(a), rand_arm_point(a));
        }
        for (int k = 0; k < quota; ++k) record(rand_off_point(), rand_off_point());
        for (int k = 0; k < quota; ++k) record(rand_arm_point(k % na), rand_off_point());
        for (int k = 0; k < quota; ++k) {
            const int a = k % na;
            const int b = std::min(na - 1, static_cast<int>(rng.uniform() * na));
            record(rand_arm_point(a), rand_arm_point(b));
        }
    } else {
        for (int k = general; k < pairs; ++k) record(rand_point(), rand_point());
    }

    rep.ok = rep.measured <= 18 * L * (1 + 1e-12);
    return rep;
}

namespace {

// The four oriented sides of one strip square, counterclockwise from the
// lower-left corner; `fwd` tells whether the stored lattice edge (a < b) runs
// along the traversal direction.
struct SquareFrame {
    int i = 0, j = 0;
    Vec2 center = Vec2::Zero();
    double half = 0;
    std::array<int, 4> edge{};
    std::array<bool, 4> fwd{};
};

SquareFrame square_frame(const GridComplex& grid, int i, int j) {
    SquareFrame fr;
    fr.i = i;
    fr.j = j;
    fr.center = grid.origin + Vec2((i + 0.5) * grid.r, (j + 0.5) * grid.r);
    fr.half = grid.half_size();
    const int v00 = grid.vertex_id(i, j), v10 = grid.vertex_id(i + 1, j);
    const int v01 = grid.vertex_id(i, j + 1), v11 = grid.vertex_id(i + 1, j + 1);
    const std::array<std::array<int, 2>, 4> trav = {
        {{v00, v10}, {v10, v11}, {v11, v01}, {v01, v00}}};
    for (int s = 0; s < 4; ++s) {
        const int e = grid.edge_index(trav[static_cast<std::size_t>(s)][0],
                                      trav[static_cast<std::size_t>(s)][1]);
        if (e < 0)
            throw numeric_error("strip square (" + std::to_string(i) + "," + std::to_string(j) +
                                "): side edge missing from the skeleton");
        fr.edge[static_cast<std::size_t>(s)] = e;
        fr.fwd[static_cast<std::size_t>(s)] =
            grid.edges[static_cast<std::size_t>(e)].a == trav[static_cast<std::size_t>(s)][0];
    }
    return fr;
}

BoundaryData square_boundary_data(const EdgeMap& em, const SquareFrame& fr) {
    BoundaryData bd;
    bd.center = fr.center;
    bd.half = fr.half;
    for (int s = 0; s < 4; ++s) {
        const EdgeCurve& c = em.curves[static_cast<std::size_t>(fr.edge[static_cast<std::size_t>(s)])];
        const int np = static_cast<int>(c.params.size());
        if (fr.fwd[static_cast<std::size_t>(s)]) {
            for (int k = 0; k + 1 < np; ++k) {
                bd.params.push_back((s + c.params[static_cast<std::size_t>(k)]) / 4);
                bd.values.push_back(c.values[static_cast<std::size_t>(k)]);
            }
        } else {
            for (int k = np - 1; k >= 1; --k) {
                bd.params.push_back((s + 1 - c.params[static_cast<std::size_t>(k)]) / 4);
                bd.values.push_back(c.values[static_cast<std::size_t>(k)]);
            }
        }
    }
    double m = 1;
    const int nsam = bd.size();
    std::vector<Vec2> pos(static_cast<std::size_t>(nsam));
    for (int k = 0; k < nsam; ++k)
        pos[static_cast<std::size_t>(k)] =
            square_boundary_point(bd.center, bd.half, bd.params[static_cast<std::size_t>(k)]);
    for (int a = 0; a < nsam; ++a)
        for (int b = a + 1; b < nsam; ++b) {
            const double d = pair_distortion(pos[static_cast<std::size_t>(a)],
                                             pos[static_cast<std::size_t>(b)],
                                             bd.values[static_cast<std::size_t>(a)],
                                             bd.values[static_cast<std::size_t>(b)]);
            if (d < std::numeric_limits<double>::infinity()) m = std::max(m, d);
        }
    bd.declared_l = m * (1 + 1e-7);
    return bd;
}

// Splices one square extension into the shared builder.
void splice_map(MeshBuilder& mb, const PAMap& piece) {
    std::vector<int> remap(static_cast<std::size_t>(piece.mesh.num_vertices()));
    for (int v = 0; v < piece.mesh.num_vertices(); ++v)
        remap[static_cast<std::size_t>(v)] =
            mb.add_vertex(piece.mesh.vertices[static_cast<std::size_t>(v)],
                          piece.images[static_cast<std::size_t>(v)]);
    for (const auto& cell : piece.mesh.cells)
        mb.add_cell(remap[static_cast<std::size_t>(cell[0])], remap[static_cast<std::size_t>(cell[1])],
                    remap[static_cast<std::size_t>(cell[2])]);
}

void extend_strip_squares(MeshBuilder& mb, const EdgeMap& em, const GridComplex& grid, int n,
                          bool aggregate_errors) {
    std::vector<std::string> failures;
    for (std::size_t s = 0; s < grid.squares.size(); ++s) {
        const auto [i, j] = grid.squares[s];
        try {
            const SquareFrame fr = square_frame(grid, i, j);
            const BoundaryData bd = square_boundary_data(em, fr);
            const ExtensionResult res = extend_square(bd, n);
            splice_map(mb, res.map);
        } catch (const std::exception& ex) {
            const std::string what = "square " + std::to_string(s) + " at (" + std::to_string(i) +
                                     "," + std::to_string(j) + "): " + ex.what();
            if (!aggregate_errors) throw numeric_error("strip extension failed on " + what);
            failures.push_back(what);
        }
    }
    if (!failures.empty()) {
        std::string msg =
            "strip extension failed on " + std::to_string(failures.size()) + " square(s):";
        for (const std::string& f : failures) msg += "\n  " + f;
        throw numeric_error(msg);
    }
}

}  // namespace

PAMap extend_all_squares(const EdgeMap& em, const GridComplex& grid, int n) {
    MeshBuilder mb(em.r * 1e-8);
    extend_strip_squares(mb, em, grid, n, /*aggregate_errors=*/true);
    PAMap u = mb.take();
    const Certificate cert = certify_injective(u);
    if (!cert.injective || !cert.orientation_preserving)
        throw numeric_error("strip extension: glued strip map failed certification");
    return u;
}

namespace {

// Affine evaluation data for one source cell of the overlaid map.
struct CellAffine {
    Vec2 a = Vec2::Zero();
    Mat2 inv = Mat2::Zero();
    Vec2 ia = Vec2::Zero();
    Vec2 iab = Vec2::Zero(), iac = Vec2::Zero();

    Vec2 image(const Vec2& p) const {
        const Vec2 uv = inv * (p - a);
        return ia + uv.x() * iab + uv.y() * iac;
    }
};

std::vector<CellAffine> cell_affines(const PAMap& f) {
    std::vector<CellAffine> out(static_cast<std::size_t>(f.mesh.num_cells()));
    for (int c = 0; c < f.mesh.num_cells(); ++c) {
        const auto& t = f.mesh.cells[static_cast<std::size_t>(c)];
        CellAffine ca;
        ca.a = f.mesh.vertices[static_cast<std::size_t>(t[0])];
        Mat2 m;
        m.col(0) = f.mesh.vertices[static_cast<std::size_t>(t[1])] - ca.a;
        m.col(1) = f.mesh.vertices[static_cast<std::size_t>(t[2])] - ca.a;
        ca.inv = m.inverse();
        ca.ia = f.images[static_cast<std::size_t>(t[0])];
        ca.iab = f.images[static_cast<std::size_t>(t[1])] - ca.ia;
        ca.iac = f.images[static_cast<std::size_t>(t[2])] - ca.ia;
        out[static_cast<std::size_t>(c)] = ca;
    }
    return out;
}

struct ClippedPoly {
    int src = -1;
    std::vector<Vec2> pts;
};

// Exact overlay of `f` onto every grid cell of class `want`. On-lattice-line
// polygon runs are subdivided by the canonical breakpoint set of that lattice
// edge (clip crossings from both sides plus, on strip-facing sides, the edge
// map samples) so independently clipped neighbors stay conforming.
void overlay_cells(MeshBuilder& mb, const GridComplex& grid, const EdgeMap& em, const PAMap& f,
                   CellClass want) {
    const double r = grid.r;
    std::vector<std::pair<int, int>> cells;
    for (int j = 0; j < grid.ny; ++j)
        for (int i = 0; i < grid.nx; ++i)
            if (grid.cls(i, j) == want) cells.emplace_back(i, j);
    if (cells.empty()) return;

    const auto buckets = bucket_cells_by_grid(f.mesh, grid.origin,
                                              grid.origin + Vec2(grid.nx * r, grid.ny * r),
                                              grid.nx, grid.ny);
    const auto affine = cell_affines(f);
    const double snap = 1e-12 * r;
    // On-line classification tolerance. Clipping pins crossing points onto the
    // clip line bitwise, but a kept vertex may sit a few ulp off a cell side it
    // crosses in exact arithmetic (e.g. a mesh diagonal through a cell corner).
    // Classify by distance instead: noise is < 1e-15 while distinct breakpoints
    // on a side are never closer than 1e-9 * r, so this band is unambiguous.
    const double lintol = 1e-10 * r;

    // Sides: 0 bottom (y = lo.y), 1 right (x = hi.x), 2 top (y = hi.y),
    // 3 left (x = lo.x); side lattice edge runs between its two cell corners.
    const auto side_lattice_edge = [&](int i, int j, int s) -> std::array<int, 2> {
        switch (s) {
            case 0: return {grid.vertex_id(i, j), grid.vertex_id(i + 1, j)};
            case 1: return {grid.vertex_id(i + 1, j), grid.vertex_id(i + 1, j + 1)};
            case 2: return {grid.vertex_id(i, j + 1), grid.vertex_id(i + 1, j + 1)};
            default: return {grid.vertex_id(i, j), grid.vertex_id(i, j + 1)};
        }
    };
    const auto edge_key64 = [](int a, int b) {
        return (static_cast<std::uint64_t>(std::max(a, b)) << 32) |
               static_cast<std::uint64_t>(std::min(a, b));
    };

    // Pass 1: clip, record canonical on-line parameters per lattice edge.
    std::map<std::uint64_t, std::vector<double>> line_params;
    std::vector<std::vector<ClippedPoly>> polys(cells.size());
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        const auto [i, j] = cells[ci];
        const Vec2 lo = grid.origin + Vec2(i * r, j * r);
        const Vec2 hi = grid.origin + Vec2((i + 1) * r, (j + 1) * r);
        const std::array<double, 4> side_coord = {lo.y(), hi.x(), hi.y(), lo.x()};
        const std::array<int, 4> side_axis = {1, 0, 1, 0};
        for (const int fc : buckets[static_cast<std::size_t>(j) * static_cast<std::size_t>(grid.nx) +
                                    static_cast<std::size_t>(i)]) {
            const auto& t = f.mesh.cells[static_cast<std::size_t>(fc)];
            auto poly = clip_triangle_to_rect(f.mesh.vertices[static_cast<std::size_t>(t[0])],
                                              f.mesh.vertices[static_cast<std::size_t>(t[1])],
                                              f.mesh.vertices[static_cast<std::size_t>(t[2])], lo,
                                              hi, snap);
            if (poly.size() < 3) continue;
            for (const Vec2& p : poly)
                for (int s = 0; s < 4; ++s)
                    if (std::abs(p[side_axis[static_cast<std::size_t>(s)]] -
                                 side_coord[static_cast<std::size_t>(s)]) <= lintol) {
                        const auto [va, vb] = side_lattice_edge(i, j, s);
                        const Vec2 qa = grid.vertex_pos(va);
                        const int ax = 1 - side_axis[static_cast<std::size_t>(s)];
                        line_params[edge_key64(va, vb)].push_back((p[ax] - qa[ax]) / r);
                    }
            polys[ci].push_back({fc, std::move(poly)});
        }
        // Canonical strip samples on sides facing the strip.
        const std::array<std::pair<int, int>, 4> nbr = {
            {{i, j - 1}, {i + 1, j}, {i, j + 1}, {i - 1, j}}};
        for (int s = 0; s < 4; ++s)
            if (grid.cls(nbr[static_cast<std::size_t>(s)].first,
                         nbr[static_cast<std::size_t>(s)].second) == CellClass::Strip) {
                const auto [va, vb] = side_lattice_edge(i, j, s);
                const int e = grid.edge_index(va, vb);
                if (e < 0) continue;
                auto& lp = line_params[edge_key64(va, vb)];
                for (const double t : em.curves[static_cast<std::size_t>(e)].params)
                    lp.push_back(grid.edges[static_cast<std::size_t>(e)].a == va ? t : 1 - t);
            }
    }
    for (auto& [key, lp] : line_params) {
        std::sort(lp.begin(), lp.end());
        lp.erase(std::unique(lp.begin(), lp.end(),
                             [](double u, double v) { return std::abs(u - v) < 1e-9; }),
                 lp.end());
    }

    // Pass 2: subdivide on-line runs by the canonical sets and fan.
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        const auto [i, j] = cells[ci];
        const Vec2 lo = grid.origin + Vec2(i * r, j * r);
        const Vec2 hi = grid.origin + Vec2((i + 1) * r, (j + 1) * r);
        const std::array<double, 4> side_coord = {lo.y(), hi.x(), hi.y(), lo.x()};
        const std::array<int, 4> side_axis = {1, 0, 1, 0};

        // Canonical points to insert, in traversal order, strictly inside the
        // run u -> v when it lies along a cell side; empty otherwise.
        const auto run_insertions = [&](const Vec2& u, const Vec2& v) {
            std::vector<Vec2> ins;
            for (int s = 0; s < 4; ++s) {
                const int ax = side_axis[static_cast<std::size_t>(s)];
                const double cc = side_coord[static_cast<std::size_t>(s)];
                if (std::abs(u[ax] - cc) > lintol || std::abs(v[ax] - cc) > lintol) continue;
                const auto [va, vb] = side_lattice_edge(i, j, s);
                const auto it = line_params.find(edge_key64(va, vb));
                if (it == line_params.end()) break;
                const Vec2 qa = grid.vertex_pos(va), qb = grid.vertex_pos(vb);
                const int fx = 1 - ax;
                const double tu = (u[fx] - qa[fx]) / r, tv = (v[fx] - qa[fx]) / r;
                const double tmin = std::min(tu, tv), tmax = std::max(tu, tv);
                std::vector<double> ts;
                for (const double tt : it->second)
                    if (tt > tmin + 1e-9 && tt < tmax - 1e-9) ts.push_back(tt);
                if (tu > tv) std::reverse(ts.begin(), ts.end());
                for (const double tt : ts) ins.push_back(qa + tt * (qb - qa));
                break;
            }
            return ins;
        };

        for (const ClippedPoly& cp : polys[ci]) {
            const auto& t = f.mesh.cells[static_cast<std::size_t>(cp.src)];
            const CellAffine& ca = affine[static_cast<std::size_t>(cp.src)];

            // Unchanged-triangle fast path: splice the source cell directly
            // (only when no side of it needs a canonical subdivision).
            if (cp.pts.size() == 3) {
                bool same = true;
                for (const Vec2& p : cp.pts) {
                    bool hit = false;
                    for (const int v : t)
                        if (f.mesh.vertices[static_cast<std::size_t>(v)] == p) {
                            hit = true;
                            break;
                        }
                    if (!hit) {
                        same = false;
                        break;
                    }
                }
                for (std::size_t k = 0; same && k < 3; ++k)
                    same = run_insertions(cp.pts[k], cp.pts[(k + 1) % 3]).empty();
                if (same) {
                    const int a = mb.add_vertex(f.mesh.vertices[static_cast<std::size_t>(t[0])],
                                                f.images[static_cast<std::size_t>(t[0])]);
                    const int b = mb.add_vertex(f.mesh.vertices[static_cast<std::size_t>(t[1])],
                                                f.images[static_cast<std::size_t>(t[1])]);
                    const int c = mb.add_vertex(f.mesh.vertices[static_cast<std::size_t>(t[2])],
                                                f.images[static_cast<std::size_t>(t[2])]);
                    mb.add_cell(a, b, c);
                    continue;
                }
            }

            // Ring with canonical on-line subdivisions.
            std::vector<Vec2> ring;
            const std::size_t np = cp.pts.size();
            for (std::size_t k = 0; k < np; ++k) {
                const Vec2& u = cp.pts[k];
                const Vec2& v = cp.pts[(k + 1) % np];
                ring.push_back(u);
                for (const Vec2& q : run_insertions(u, v)) ring.push_back(q);
            }

            // Centroid fan (area-weighted centroid of the convex ring).
            double a2 = 0;
            Vec2 cen = Vec2::Zero();
            for (std::size_t k = 0; k < ring.size(); ++k) {
                const Vec2& u = ring[k];
                const Vec2& v = ring[(k + 1) % ring.size()];
                const double w = u.x() * v.y() - v.x() * u.y();
                a2 += w;
                cen += w * (u + v);
            }
            if (std::abs(a2) < 8 * snap * r) continue;
            cen /= 3 * a2;

            const int cv = mb.add_vertex(cen, ca.image(cen));
            std::vector<int> ids;
            ids.reserve(ring.size());
            for (const Vec2& p : ring) ids.push_back(mb.add_vertex(p, ca.image(p)));
            for (std::size_t k = 0; k < ids.size(); ++k)
                mb.add_cell(cv, ids[k], ids[(k + 1) % ids.size()]);
        }
    }
}

}  // namespace

PAMap extend_and_glue(const EdgeMap& em, const GridComplex& grid, const PAMap& ytilde,
                      const PAMap& y, CutoffStats* stats, int n) {
    MeshBuilder mb(em.r * 1e-8);

    // Canonical skeleton nodes first so later merges adopt their images.
    for (std::size_t e = 0; e < em.curves.size(); ++e) {
        const EdgeCurve& c = em.curves[e];
        for (std::size_t k = 0; k < c.params.size(); ++k)
            mb.add_vertex(em.point(static_cast<int>(e), c.params[k]), c.values[k]);
    }

    extend_strip_squares(mb, em, grid, n, /*aggregate_errors=*/false);
    overlay_cells(mb, grid, em, ytilde, CellClass::Bulk);
    overlay_cells(mb, grid, em, y, CellClass::Bound);

    PAMap u = mb.take();

    // Reproduce the outer map's boundary trace exactly at every boundary node.
    const MapEvaluator ey(y);
    for (const auto& loop : u.mesh.boundary_loops)
        for (const int v : loop)
            u.images[static_cast<std::size_t>(v)] =
                ey.forward(u.mesh.vertices[static_cast<std::size_t>(v)]);

    const Certificate cert = certify_injective(u);
    if (!cert.injective || !cert.orientation_preserving)
        throw numeric_error("cutoff glue: assembled map failed the injectivity certificate");

    if (stats) {
        stats->modified_area = grid.area_strip + grid.area_bound;
        stats->modified_fraction = stats->modified_area / grid.domain.area();
        stats->measured_bilip = cert.bilip;
        stats->squares = static_cast<int>(grid.squares.size());
        stats->mesh_cells = u.mesh.num_cells();
    }
    return u;
}

CutoffSequenceResult cutoff_sequence(const std::vector<PAMap>& seq, const PAMap& y,
                                     const Domain2& dom, const std::vector<double>& deltas,
                                     int n) {
    double L = bilip_constant(y);
    for (const PAMap& m : seq) L = std::max(L, bilip_constant(m));

    CutoffSequenceResult out;
    int next = 0;
    for (const double delta : deltas) {
        try {
            GridComplex grid;
            double r_cap = std::numeric_limits<double>::infinity();
            for (int it = 0;; ++it) {
                grid = build_tiling(dom, delta, r_cap);
                if (grid.area_strip + grid.area_bound <= delta * (1 + 1e-12)) break;
                if (it >= 60)
                    throw numeric_error("modified area would not shrink below delta");
                r_cap = grid.r / 2;
            }
            int pick = -1;
            for (int k = next; k < static_cast<int>(seq.size()); ++k)
                if (check_closeness(seq[static_cast<std::size_t>(k)], y, grid, L)) {
                    pick = k;
                    break;
                }
            if (pick < 0) {
                std::ostringstream msg;
                msg << "delta=" << delta
                    << " skipped: no remaining sequence member within r/(12 L^3) of the limit";
                out.warnings.push_back(msg.str());
                continue;
            }
            const PAMap& yk = seq[static_cast<std::size_t>(pick)];
            const auto crosses = build_crosses(grid, yk, y, L);
            const EdgeMap em = edge_map(grid, crosses, yk, y);
            CutoffStats st;
            PAMap u = extend_and_glue(em, grid, yk, y, &st, n);
            out.maps.push_back(std::move(u));
            out.source_index.push_back(pick);
            out.deltas_used.push_back(delta);
            out.modified_area.push_back(st.modified_area);
            next = pick + 1;
        } catch (const std::exception& ex) {
            std::ostringstream msg;
            msg << "delta=" << delta << " skipped: " << ex.what();
            out.warnings.push_back(msg.str());
        }
    }
    return out;
}

}  // namespace bilip
