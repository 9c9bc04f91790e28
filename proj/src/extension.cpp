#include "bilip/extension.hpp"

#include "bilip/matgeom.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <vector>

namespace bilip {

Vec2 square_boundary_point(const Vec2& center, double half, double t) {
    t -= std::floor(t);
    const double s = 4.0 * t;
    const int side = std::min(3, static_cast<int>(std::floor(s)));
    const double f = s - side;  // position along the side, in [0,1)
    const double h = half;
    switch (side) {
        case 0: return center + Vec2(-h + 2 * h * f, -h);
        case 1: return center + Vec2(h, -h + 2 * h * f);
        case 2: return center + Vec2(h - 2 * h * f, h);
        default: return center + Vec2(-h, h - 2 * h * f);
    }
}

void validate_boundary_data(const BoundaryData& bd) {
    const int m = bd.size();
    if (m < 4 || bd.values.size() != bd.params.size())
        throw input_error("boundary data: need matching params/values with at least 4 samples");
    if (!(bd.half > 0) || !(bd.declared_l >= 1))
        throw input_error("boundary data: half-size must be positive and distortion bound >= 1");
    for (int i = 0; i < m; ++i) {
        const double t = bd.params[static_cast<std::size_t>(i)];
        if (!(t >= 0) || !(t < 1)) throw input_error("boundary data: parameters must lie in [0,1)");
        if (i > 0 && !(t > bd.params[static_cast<std::size_t>(i - 1)]))
            throw input_error("boundary data: parameters must be strictly increasing");
    }
    for (const double c : {0.0, 0.25, 0.5, 0.75}) {
        bool found = false;
        for (const double t : bd.params)
            if (std::abs(t - c) <= 1e-12) {
                found = true;
                break;
            }
        if (!found) throw input_error("boundary data: corner sample missing");
    }
    if (!closed_polyline_simple(bd.values))
        throw input_error("boundary data: image curve is not a simple closed polyline");
    if (!(polygon_signed_area(bd.values) > 0))
        throw input_error("boundary data: image curve must be positively oriented");

    std::vector<Vec2> pos(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i)
        pos[static_cast<std::size_t>(i)] =
            square_boundary_point(bd.center, bd.half, bd.params[static_cast<std::size_t>(i)]);
    const double slack = 1 + 1e-9;
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            const double dd = (pos[static_cast<std::size_t>(i)] - pos[static_cast<std::size_t>(j)]).norm();
            const double di = (bd.values[static_cast<std::size_t>(i)] - bd.values[static_cast<std::size_t>(j)]).norm();
            if (di > bd.declared_l * dd * slack || dd > bd.declared_l * di * slack)
                throw input_error("boundary data: sampled distortion exceeds the declared bound");
        }
}

namespace {

// Triangulation for extend_square: m boundary nodes (the samples, in order)
// followed by the (n-1)^2 interior grid nodes. The annulus between the boundary
// ring and the outermost interior ring is zipped by merging the two perimeter
// parameterizations.
Mesh2 build_square_mesh(const BoundaryData& bd, int n) {
    const int m = bd.size();
    const double h = bd.half;
    const double step = 2 * h / n;

    Mesh2 mesh;
    mesh.vertices.reserve(static_cast<std::size_t>(m + (n - 1) * (n - 1)));
    for (int i = 0; i < m; ++i)
        mesh.vertices.push_back(
            square_boundary_point(bd.center, h, bd.params[static_cast<std::size_t>(i)]));
    const auto interior_id = [&](int i, int j) { return m + (j - 1) * (n - 1) + (i - 1); };
    for (int j = 1; j < n; ++j)
        for (int i = 1; i < n; ++i)
            mesh.vertices.push_back(bd.center + Vec2(-h + i * step, -h + j * step));

    // Interior block.
    for (int j = 1; j + 1 < n; ++j)
        for (int i = 1; i + 1 < n; ++i) {
            mesh.cells.push_back({interior_id(i, j), interior_id(i + 1, j), interior_id(i + 1, j + 1)});
            mesh.cells.push_back({interior_id(i, j), interior_id(i + 1, j + 1), interior_id(i, j + 1)});
        }

    // Inner ring of the annulus, CCW from the interior lower-left corner.
    std::vector<int> ring;
    std::vector<double> ring_t;
    if (n == 2) {
        ring.push_back(interior_id(1, 1));
        ring_t.push_back(0.0);
    } else {
        for (int i = 1; i < n - 1; ++i) ring.push_back(interior_id(i, 1));
        for (int j = 1; j < n - 1; ++j) ring.push_back(interior_id(n - 1, j));
        for (int i = n - 1; i > 1; --i) ring.push_back(interior_id(i, n - 1));
        for (int j = n - 1; j > 1; --j) ring.push_back(interior_id(1, j));
        const int k = static_cast<int>(ring.size());
        for (int idx = 0; idx < k; ++idx) ring_t.push_back(static_cast<double>(idx) / k);
    }

    const int k = static_cast<int>(ring.size());
    if (k == 1) {
        for (int i = 0; i < m; ++i) mesh.cells.push_back({i, (i + 1) % m, ring[0]});
    } else {
        int i = 0, j = 0;
        while (i < m || j < k) {
            const double next_outer =
                i < m ? (i + 1 == m ? 1.0 : bd.params[static_cast<std::size_t>(i + 1)]) : 2.0;
            const double next_inner =
                j < k ? (j + 1 == k ? 1.0 : ring_t[static_cast<std::size_t>(j + 1)]) : 2.0;
            if (next_outer <= next_inner) {
                mesh.cells.push_back({i % m, (i + 1) % m, ring[static_cast<std::size_t>(j % k)]});
                ++i;
            } else {
                mesh.cells.push_back({i % m, ring[static_cast<std::size_t>((j + 1) % k)],
                                      ring[static_cast<std::size_t>(j % k)]});
                ++j;
            }
        }
    }
    mesh.finalize();
    return mesh;
}

// Piecewise-linear harmonic placement of interior nodes with the current
// boundary images as Dirichlet data. Reproduces affine data exactly.
void harmonic_fill(const Mesh2& mesh, int num_boundary, std::vector<Vec2>* images) {
    const int nv = mesh.num_vertices();
    const int ni = nv - num_boundary;
    if (ni <= 0) return;

    std::vector<Eigen::Triplet<double>> trips;
    Eigen::MatrixX2d rhs = Eigen::MatrixX2d::Zero(ni, 2);
    const auto unknown = [&](int v) { return v - num_boundary; };

    for (const auto& cell : mesh.cells)
        for (int e = 0; e < 3; ++e) {
            const int a = cell[static_cast<std::size_t>(e)];
            const int b = cell[static_cast<std::size_t>((e + 1) % 3)];
            const int c = cell[static_cast<std::size_t>((e + 2) % 3)];
            const Vec2 u = mesh.vertices[static_cast<std::size_t>(a)] - mesh.vertices[static_cast<std::size_t>(c)];
            const Vec2 v = mesh.vertices[static_cast<std::size_t>(b)] - mesh.vertices[static_cast<std::size_t>(c)];
            const double cross = u.x() * v.y() - u.y() * v.x();
            const double w = 0.5 * u.dot(v) / cross;  // half-cotangent of the angle at c
            const bool ia = a >= num_boundary, ib = b >= num_boundary;
            if (ia) trips.emplace_back(unknown(a), unknown(a), w);
            if (ib) trips.emplace_back(unknown(b), unknown(b), w);
            if (ia && ib) {
                trips.emplace_back(unknown(a), unknown(b), -w);
                trips.emplace_back(unknown(b), unknown(a), -w);
            } else if (ia) {
                rhs.row(unknown(a)) += w * (*images)[static_cast<std::size_t>(b)].transpose();
            } else if (ib) {
                rhs.row(unknown(b)) += w * (*images)[static_cast<std::size_t>(a)].transpose();
            }
        }

    Eigen::SparseMatrix<double> stiff(ni, ni);
    stiff.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(stiff);
    if (solver.info() != Eigen::Success)
        throw numeric_error("square extension: harmonic placement solve failed");
    const Eigen::MatrixX2d sol = solver.solve(rhs);
    for (int q = 0; q < ni; ++q)
        (*images)[static_cast<std::size_t>(num_boundary + q)] = sol.row(q).transpose();
}

struct CellGeom {
    Mat2 inv;      // inverse of the domain edge matrix
    double area2;  // twice the (positive) domain area
};

double cell_det(const Mesh2& mesh, const std::vector<Vec2>& images, const CellGeom& g, int c) {
    const auto& t = mesh.cells[static_cast<std::size_t>(c)];
    const Vec2 e1 = images[static_cast<std::size_t>(t[1])] - images[static_cast<std::size_t>(t[0])];
    const Vec2 e2 = images[static_cast<std::size_t>(t[2])] - images[static_cast<std::size_t>(t[0])];
    return (e1.x() * e2.y() - e1.y() * e2.x()) / g.area2;
}

Mat2 cell_grad(const Mesh2& mesh, const std::vector<Vec2>& images, const CellGeom& g, int c) {
    const auto& t = mesh.cells[static_cast<std::size_t>(c)];
    Mat2 im;
    im.col(0) = images[static_cast<std::size_t>(t[1])] - images[static_cast<std::size_t>(t[0])];
    im.col(1) = images[static_cast<std::size_t>(t[2])] - images[static_cast<std::size_t>(t[0])];
    return im * g.inv;
}

// Ordered one-ring (link) of an interior vertex, CCW. Empty when the ring does
// not close into a single cycle.
std::vector<int> link_ring(const Mesh2& mesh, const std::vector<int>& star, int v) {
    std::map<int, int> succ;
    for (const int c : star) {
        const auto& t = mesh.cells[static_cast<std::size_t>(c)];
        for (int k = 0; k < 3; ++k)
            if (t[static_cast<std::size_t>(k)] == v) {
                succ[t[static_cast<std::size_t>((k + 1) % 3)]] = t[static_cast<std::size_t>((k + 2) % 3)];
                break;
            }
    }
    if (succ.empty()) return {};
    std::vector<int> ring;
    int cur = succ.begin()->first;
    for (std::size_t i = 0; i < succ.size(); ++i) {
        ring.push_back(cur);
        const auto it = succ.find(cur);
        if (it == succ.end()) return {};
        cur = it->second;
    }
    if (cur != ring.front()) return {};
    return ring;
}

// Point strictly inside the kernel of the (possibly nonconvex) image polygon,
// i.e. a position for the center vertex making every fan triangle positively
// oriented. Returns false when the kernel is empty.
bool kernel_point(const std::vector<Vec2>& poly, Vec2* out) {
    Vec2 lo = poly[0], hi = poly[0];
    for (const Vec2& p : poly) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const Vec2 pad = 0.1 * (hi - lo) + Vec2(1e-12, 1e-12);
    std::vector<Vec2> ker = {Vec2(lo - pad), Vec2(hi.x() + pad.x(), lo.y() - pad.y()),
                             Vec2(hi + pad), Vec2(lo.x() - pad.x(), hi.y() + pad.y())};
    const double scale2 = (hi - lo).squaredNorm();
    for (std::size_t i = 0; i < poly.size() && !ker.empty(); ++i) {
        const Vec2& a = poly[i];
        const Vec2 e = poly[(i + 1) % poly.size()] - a;
        if (e.squaredNorm() <= 1e-28 * scale2) continue;
        std::vector<Vec2> next;
        const std::size_t n = ker.size();
        for (std::size_t k = 0; k < n; ++k) {
            const Vec2& cur = ker[k];
            const Vec2& nxt = ker[(k + 1) % n];
            const double dc = e.x() * (cur.y() - a.y()) - e.y() * (cur.x() - a.x());
            const double dn = e.x() * (nxt.y() - a.y()) - e.y() * (nxt.x() - a.x());
            if (dc >= 0) next.push_back(cur);
            if ((dc > 0 && dn < 0) || (dc < 0 && dn > 0)) next.push_back(cur + (dc / (dc - dn)) * (nxt - cur));
        }
        ker = std::move(next);
    }
    if (ker.size() < 3) return false;
    double a2 = 0;
    Vec2 centroid = Vec2::Zero();
    for (std::size_t k = 0; k < ker.size(); ++k) {
        const Vec2& p = ker[k];
        const Vec2& q = ker[(k + 1) % ker.size()];
        const double w = p.x() * q.y() - p.y() * q.x();
        a2 += w;
        centroid += w * (p + q);
    }
    if (a2 <= 1e-24 * scale2) return false;
    *out = centroid / (3 * a2);
    return true;
}

// Local cost of the star of cells around a vertex: primarily the number of
// non-positive cells, secondarily how far they are folded (when any) or the
// largest distortion (when none).
std::pair<int, double> star_cost(const Mesh2& mesh, const std::vector<Vec2>& images,
                                 const std::vector<CellGeom>& geom, const std::vector<int>& star) {
    int folded = 0;
    double depth = 0;
    double dist = 0;
    for (const int c : star) {
        const double d = cell_det(mesh, images, geom[static_cast<std::size_t>(c)], c);
        if (d <= 0) {
            ++folded;
            depth += -d;
        } else {
            double smax = 0, smin = 0;
            singular_values(cell_grad(mesh, images, geom[static_cast<std::size_t>(c)], c), smax, smin);
            dist = std::max(dist, std::max(smax, 1.0 / smin));
        }
    }
    return {folded, folded > 0 ? depth : dist};
}

// Everything extend_square's relocation passes need about the (fixed) mesh.
struct SquareAssembly {
    Mesh2 mesh;
    int num_boundary = 0;
    std::vector<CellGeom> geom;
    std::vector<std::vector<int>> star;
    std::vector<std::vector<int>> rings;
};

SquareAssembly assemble(const BoundaryData& bd, int n) {
    SquareAssembly sq;
    sq.mesh = build_square_mesh(bd, n);
    sq.num_boundary = bd.size();
    sq.geom.resize(static_cast<std::size_t>(sq.mesh.num_cells()));
    for (int c = 0; c < sq.mesh.num_cells(); ++c) {
        const auto& t = sq.mesh.cells[static_cast<std::size_t>(c)];
        Mat2 dm;
        dm.col(0) = sq.mesh.vertices[static_cast<std::size_t>(t[1])] - sq.mesh.vertices[static_cast<std::size_t>(t[0])];
        dm.col(1) = sq.mesh.vertices[static_cast<std::size_t>(t[2])] - sq.mesh.vertices[static_cast<std::size_t>(t[0])];
        sq.geom[static_cast<std::size_t>(c)].area2 =
            dm.col(0).x() * dm.col(1).y() - dm.col(0).y() * dm.col(1).x();
        sq.geom[static_cast<std::size_t>(c)].inv = dm.inverse();
    }
    sq.star.resize(static_cast<std::size_t>(sq.mesh.num_vertices()));
    for (int c = 0; c < sq.mesh.num_cells(); ++c)
        for (const int v : sq.mesh.cells[static_cast<std::size_t>(c)])
            sq.star[static_cast<std::size_t>(v)].push_back(c);
    sq.rings.resize(static_cast<std::size_t>(sq.mesh.num_vertices()));
    for (int v = sq.num_boundary; v < sq.mesh.num_vertices(); ++v)
        sq.rings[static_cast<std::size_t>(v)] = link_ring(sq.mesh, sq.star[static_cast<std::size_t>(v)], v);
    return sq;
}

int count_folds(const SquareAssembly& sq, const std::vector<Vec2>& images) {
    int folded = 0;
    for (int c = 0; c < sq.mesh.num_cells(); ++c)
        if (cell_det(sq.mesh, images, sq.geom[static_cast<std::size_t>(c)], c) <= 0) ++folded;
    return folded;
}

namespace untangle_detail {

const std::array<Vec2, 8> kDirs = {
    Vec2(1, 0),  Vec2(M_SQRT1_2, M_SQRT1_2),   Vec2(0, 1),  Vec2(-M_SQRT1_2, M_SQRT1_2),
    Vec2(-1, 0), Vec2(-M_SQRT1_2, -M_SQRT1_2), Vec2(0, -1), Vec2(M_SQRT1_2, -M_SQRT1_2)};

bool improves(const std::pair<int, double>& cand, const std::pair<int, double>& base) {
    return cand.first < base.first ||
           (cand.first == base.first && cand.second < base.second * (1 - 1e-12));
}

// Best single-vertex relocation: kernel re-embedding when available, compass
// probes at two scales otherwise. Returns the fold-count change; -1 updates if
// nothing improved.
int relocate_vertex(const SquareAssembly& sq, std::vector<Vec2>& images, int v, double step,
                    bool* moved) {
    const auto& star = sq.star[static_cast<std::size_t>(v)];
    const auto base = star_cost(sq.mesh, images, sq.geom, star);
    const Vec2 old = images[static_cast<std::size_t>(v)];
    std::pair<int, double> best_cost = base;
    Vec2 best_pos = old;

    const auto& ring = sq.rings[static_cast<std::size_t>(v)];
    if (!ring.empty()) {
        std::vector<Vec2> ring_img;
        ring_img.reserve(ring.size());
        for (const int w : ring) ring_img.push_back(images[static_cast<std::size_t>(w)]);
        Vec2 q;
        if (kernel_point(ring_img, &q)) {
            images[static_cast<std::size_t>(v)] = q;
            const auto cand = star_cost(sq.mesh, images, sq.geom, star);
            if (improves(cand, best_cost)) best_cost = cand, best_pos = q;
        }
    }
    if (best_pos == old) {
        for (const double s : {step, step / 4}) {
            for (const Vec2& d : kDirs) {
                images[static_cast<std::size_t>(v)] = old + s * d;
                const auto cand = star_cost(sq.mesh, images, sq.geom, star);
                if (improves(cand, best_cost)) best_cost = cand, best_pos = images[static_cast<std::size_t>(v)];
            }
        }
    }
    images[static_cast<std::size_t>(v)] = best_pos;
    *moved = best_pos != old;
    return *moved ? best_cost.first - base.first : 0;
}

// Joint relocation of two vertices of a folded cell; needed when single moves
// deadlock (each vertex blocks the other's escape).
int relocate_pair(const SquareAssembly& sq, std::vector<Vec2>& images, int u, int v, double step,
                  bool* moved) {
    std::vector<int> star = sq.star[static_cast<std::size_t>(u)];
    star.insert(star.end(), sq.star[static_cast<std::size_t>(v)].begin(),
                sq.star[static_cast<std::size_t>(v)].end());
    std::sort(star.begin(), star.end());
    star.erase(std::unique(star.begin(), star.end()), star.end());

    const auto base = star_cost(sq.mesh, images, sq.geom, star);
    const Vec2 old_u = images[static_cast<std::size_t>(u)];
    const Vec2 old_v = images[static_cast<std::size_t>(v)];
    std::pair<int, double> best_cost = base;
    Vec2 best_u = old_u, best_v = old_v;
    for (const double s : {step, step / 4}) {
        for (const Vec2& du : kDirs)
            for (const Vec2& dv : kDirs) {
                images[static_cast<std::size_t>(u)] = old_u + s * du;
                images[static_cast<std::size_t>(v)] = old_v + s * dv;
                const auto cand = star_cost(sq.mesh, images, sq.geom, star);
                if (improves(cand, best_cost)) {
                    best_cost = cand;
                    best_u = images[static_cast<std::size_t>(u)];
                    best_v = images[static_cast<std::size_t>(v)];
                }
            }
    }
    images[static_cast<std::size_t>(u)] = best_u;
    images[static_cast<std::size_t>(v)] = best_v;
    *moved = best_u != old_u || best_v != old_v;
    return *moved ? best_cost.first - base.first : 0;
}

}  // namespace untangle_detail

// Deterministic local relocation sweeps: kernel re-embedding of folded stars
// when possible, compass pattern steps otherwise, and joint two-vertex moves
// on folded cells when single moves stall. Returns the remaining fold count;
// `updates` accumulates accepted moves against the shared budget.
int untangle(const SquareAssembly& sq, std::vector<Vec2>& images, int budget, int& updates,
             int max_levels = 48) {
    using namespace untangle_detail;
    int folded_total = count_folds(sq, images);
    if (folded_total == 0) return 0;

    Vec2 lo = images[0], hi = images[0];
    for (const Vec2& p : images) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    double step = std::max((hi - lo).norm(), 1e-12) / 16;

    for (int level = 0; level < max_levels && folded_total > 0 && updates < budget; ++level) {
        bool any = false;
        const int nv = sq.mesh.num_vertices();
        for (int idx = sq.num_boundary; idx < nv && updates < budget; ++idx) {
            const int v = level % 2 == 0 ? idx : sq.num_boundary + (nv - 1 - idx);
            bool near_fold = false;
            for (const int c : sq.star[static_cast<std::size_t>(v)])
                if (cell_det(sq.mesh, images, sq.geom[static_cast<std::size_t>(c)], c) <= 0) {
                    near_fold = true;
                    break;
                }
            if (!near_fold) continue;
            bool moved = false;
            folded_total += relocate_vertex(sq, images, v, step, &moved);
            if (moved) {
                ++updates;
                any = true;
            }
        }
        if (!any) {
            // Single moves stalled: try coordinated moves on the folded cells.
            for (int c = 0; c < sq.mesh.num_cells() && updates + 1 < budget; ++c) {
                if (cell_det(sq.mesh, images, sq.geom[static_cast<std::size_t>(c)], c) > 0) continue;
                const auto& t = sq.mesh.cells[static_cast<std::size_t>(c)];
                for (int a = 0; a < 3 && !any; ++a)
                    for (int b = a + 1; b < 3 && !any; ++b) {
                        const int u = t[static_cast<std::size_t>(a)], v = t[static_cast<std::size_t>(b)];
                        if (u < sq.num_boundary || v < sq.num_boundary) continue;
                        bool moved = false;
                        folded_total += relocate_pair(sq, images, u, v, step, &moved);
                        if (moved) {
                            updates += 2;
                            any = true;
                        }
                    }
            }
        }
        if (!any) step *= 0.5;
    }
    return folded_total;
}

// Fatten the worst (smallest relative determinant) fold-free stars by moving
// their centers toward the ring-image kernel centroid. Keeps congested
// clusters left behind by fold repair from collapsing again on the next
// continuation step.
void smooth_worst(const SquareAssembly& sq, std::vector<Vec2>& images, int max_moves, int& updates) {
    const int nv = sq.mesh.num_vertices();
    std::vector<std::pair<double, int>> rank;
    rank.reserve(static_cast<std::size_t>(nv - sq.num_boundary));
    for (int v = sq.num_boundary; v < nv; ++v) {
        double worst = std::numeric_limits<double>::infinity();
        for (const int c : sq.star[static_cast<std::size_t>(v)])
            worst = std::min(worst, cell_det(sq.mesh, images, sq.geom[static_cast<std::size_t>(c)], c));
        rank.emplace_back(worst, v);
    }
    std::sort(rank.begin(), rank.end());

    int moves = 0;
    for (const auto& [det0, v] : rank) {
        if (moves >= max_moves) break;
        if (det0 <= 0) continue;  // folded stars belong to the untangler
        const auto& ring = sq.rings[static_cast<std::size_t>(v)];
        if (ring.empty()) continue;
        std::vector<Vec2> ring_img;
        ring_img.reserve(ring.size());
        for (const int w : ring) ring_img.push_back(images[static_cast<std::size_t>(w)]);
        Vec2 q;
        if (!kernel_point(ring_img, &q)) continue;
        const Vec2 old = images[static_cast<std::size_t>(v)];
        images[static_cast<std::size_t>(v)] = q;
        double det1 = std::numeric_limits<double>::infinity();
        for (const int c : sq.star[static_cast<std::size_t>(v)])
            det1 = std::min(det1, cell_det(sq.mesh, images, sq.geom[static_cast<std::size_t>(c)], c));
        if (det1 > det0 * (1 + 1e-9)) {
            ++moves;
            ++updates;
        } else {
            images[static_cast<std::size_t>(v)] = old;
        }
    }
}

}  // namespace

ExtensionResult extend_square(const BoundaryData& bd, int n, int untangle_budget,
                              ExtensionResult* best) {
    validate_boundary_data(bd);
    if (n < 2) throw input_error("square extension: grid resolution must be at least 2");

    const SquareAssembly sq = assemble(bd, n);
    const int m = bd.size();

    const int nv = sq.mesh.num_vertices();
    std::vector<Vec2> images(static_cast<std::size_t>(nv), Vec2::Zero());
    for (int i = 0; i < m; ++i) images[static_cast<std::size_t>(i)] = bd.values[static_cast<std::size_t>(i)];
    harmonic_fill(sq.mesh, m, &images);
    const std::vector<Vec2> harm = images;

    int updates = 0;
    int folds = untangle(sq, images, untangle_budget, updates);

    if (folds > 0) {
        // Continuation fallback: start from the identity map (fold-free by
        // construction) and morph the boundary toward the real data in
        // adaptive steps. The interior is advected with the harmonic
        // interpolation of the boundary displacement (linear in the blend
        // weight, so it reuses the solve above) and the untangler's
        // corrections ride along, so interior nodes track the moving boundary
        // instead of lagging behind it.
        for (int i = 0; i < nv; ++i) images[static_cast<std::size_t>(i)] = sq.mesh.vertices[static_cast<std::size_t>(i)];
        folds = count_folds(sq, images);

        double lam = 0, stepw = 0.25;
        int guard = 0, streak = 0;
        while (folds == 0 && lam < 1 && guard++ < 4000) {
            const double trial = std::min(1.0, lam + stepw);
            const std::vector<Vec2> snapshot = images;
            for (int i = 0; i < m; ++i)
                images[static_cast<std::size_t>(i)] =
                    trial == 1.0
                        ? bd.values[static_cast<std::size_t>(i)]
                        : Vec2((1 - trial) * sq.mesh.vertices[static_cast<std::size_t>(i)] +
                               trial * bd.values[static_cast<std::size_t>(i)]);
            for (int i = m; i < nv; ++i)
                images[static_cast<std::size_t>(i)] +=
                    (trial - lam) * (harm[static_cast<std::size_t>(i)] - sq.mesh.vertices[static_cast<std::size_t>(i)]);
            const int f = untangle(sq, images, untangle_budget, updates, 20);
            if (f == 0) {
                lam = trial;
                smooth_worst(sq, images, 16, updates);
                if (++streak >= 3) {
                    stepw = std::min(0.25, stepw * 2);
                    streak = 0;
                }
            } else if (stepw > 1.0 / 4096 && updates < untangle_budget) {
                images = snapshot;
                stepw *= 0.5;
                streak = 0;
            } else {
                folds = f;
                break;
            }
        }
        if (lam < 1 && folds == 0) folds = count_folds(sq, images);
        if (lam < 1 && folds == 0) folds = 1;  // morph incomplete: boundary values are not yet the data
        if (lam >= 1) folds = count_folds(sq, images);
    }

    ExtensionResult res;
    res.map = PAMap(sq.mesh, std::move(images));
    res.updates = updates;
    res.cert = certify_injective(res.map);
    if (folds > 0 || !res.cert.injective || !res.cert.orientation_preserving) {
        if (best) *best = std::move(res);
        throw numeric_error("square extension: untangling failed to certify injectivity within budget (" +
                            std::to_string(updates) + " updates, " + std::to_string(folds) +
                            " folded cells)");
    }
    res.measured_l = res.cert.bilip;
    return res;
}

}  // namespace bilip
