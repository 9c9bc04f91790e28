#include "bilip/mesh.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace bilip {

namespace {

inline double tri_area2(const Vec2& a, const Vec2& b, const Vec2& c) {
    return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

}  // namespace

const std::vector<int>& Mesh2::boundary() const {
    if (boundary_loops.size() != 1)
        throw input_error("mesh has " + std::to_string(boundary_loops.size()) +
                          " boundary loops where a single loop is required");
    return boundary_loops[0];
}

double Mesh2::cell_area(int c) const {
    const auto& t = cells[static_cast<std::size_t>(c)];
    return 0.5 * tri_area2(vertices[static_cast<std::size_t>(t[0])],
                           vertices[static_cast<std::size_t>(t[1])],
                           vertices[static_cast<std::size_t>(t[2])]);
}

double Mesh2::total_area() const {
    double s = 0;
    for (int c = 0; c < num_cells(); ++c) s += cell_area(c);
    return s;
}

Vec2 Mesh2::cell_centroid(int c) const {
    const auto& t = cells[static_cast<std::size_t>(c)];
    return (vertices[static_cast<std::size_t>(t[0])] + vertices[static_cast<std::size_t>(t[1])] +
            vertices[static_cast<std::size_t>(t[2])]) /
           3.0;
}

void Mesh2::finalize() {
    const int nv = num_vertices();
    for (const auto& t : cells) {
        for (int k = 0; k < 3; ++k)
            if (t[static_cast<std::size_t>(k)] < 0 || t[static_cast<std::size_t>(k)] >= nv)
                throw input_error("cell vertex index out of range");
        const double a2 = tri_area2(vertices[static_cast<std::size_t>(t[0])],
                                    vertices[static_cast<std::size_t>(t[1])],
                                    vertices[static_cast<std::size_t>(t[2])]);
        if (a2 <= 0) throw input_error("cell with non-positive reference area");
    }

    // Collect directed boundary edges: undirected edges used by exactly one cell.
    std::vector<std::pair<std::uint64_t, int>> edge_use;  // key -> cell
    edge_use.reserve(cells.size() * 3);
    auto key = [](int a, int b) {
        const std::uint64_t lo = static_cast<std::uint64_t>(std::min(a, b));
        const std::uint64_t hi = static_cast<std::uint64_t>(std::max(a, b));
        return (hi << 32) | lo;
    };
    for (int c = 0; c < num_cells(); ++c) {
        const auto& t = cells[static_cast<std::size_t>(c)];
        for (int k = 0; k < 3; ++k)
            edge_use.emplace_back(key(t[static_cast<std::size_t>(k)],
                                      t[static_cast<std::size_t>((k + 1) % 3)]),
                                  c);
    }
    std::sort(edge_use.begin(), edge_use.end());
    std::map<int, int> next;  // boundary half-edge successor (tail -> head)
    for (std::size_t i = 0; i < edge_use.size();) {
        std::size_t j = i;
        while (j < edge_use.size() && edge_use[j].first == edge_use[i].first) ++j;
        if (j - i > 2) throw input_error("non-conforming mesh: edge shared by >2 cells");
        if (j - i == 1) {
            // Recover the directed orientation from the owning cell.
            const auto& t = cells[static_cast<std::size_t>(edge_use[i].second)];
            const int a = static_cast<int>(edge_use[i].first & 0xffffffffull);
            const int b = static_cast<int>(edge_use[i].first >> 32);
            for (int k = 0; k < 3; ++k) {
                const int u = t[static_cast<std::size_t>(k)];
                const int v = t[static_cast<std::size_t>((k + 1) % 3)];
                if ((u == a && v == b) || (u == b && v == a)) {
                    if (next.count(u)) throw input_error("boundary is not a disjoint union of loops");
                    next[u] = v;
                    break;
                }
            }
        }
        i = j;
    }

    boundary_loops.clear();
    std::map<int, bool> used;
    for (const auto& kv : next) used[kv.first] = false;
    for (const auto& kv : next) {
        if (used[kv.first]) continue;
        std::vector<int> loop;
        int v = kv.first;
        while (!used[v]) {
            used[v] = true;
            loop.push_back(v);
            auto it = next.find(v);
            if (it == next.end()) throw input_error("open boundary chain");
            v = it->second;
        }
        if (v != loop.front()) throw input_error("boundary chain does not close");
        boundary_loops.push_back(std::move(loop));
    }
    if (boundary_loops.empty() && !cells.empty())
        throw input_error("mesh without boundary");

    // Outer loop = largest |signed area|; cells are CCW so it is CCW itself.
    std::size_t outer = 0;
    double best = -1;
    for (std::size_t i = 0; i < boundary_loops.size(); ++i) {
        std::vector<Vec2> pts;
        pts.reserve(boundary_loops[i].size());
        for (int v : boundary_loops[i]) pts.push_back(vertices[static_cast<std::size_t>(v)]);
        const double a = std::abs(polygon_signed_area(pts));
        if (a > best) {
            best = a;
            outer = i;
        }
    }
    if (outer != 0) std::swap(boundary_loops[0], boundary_loops[outer]);
}

Mesh2 structured_rect_mesh(const Vec2& lo, const Vec2& hi, int nx, int ny) {
    if (nx < 1 || ny < 1) throw input_error("structured mesh needs nx, ny >= 1");
    std::vector<double> xs(static_cast<std::size_t>(nx) + 1), ys(static_cast<std::size_t>(ny) + 1);
    for (int i = 0; i <= nx; ++i)
        xs[static_cast<std::size_t>(i)] = lo.x() + (hi.x() - lo.x()) * i / nx;
    for (int j = 0; j <= ny; ++j)
        ys[static_cast<std::size_t>(j)] = lo.y() + (hi.y() - lo.y()) * j / ny;
    return structured_tensor_mesh(xs, ys);
}

Mesh2 structured_tensor_mesh(const std::vector<double>& xs, const std::vector<double>& ys) {
    const int nx = static_cast<int>(xs.size()) - 1;
    const int ny = static_cast<int>(ys.size()) - 1;
    if (nx < 1 || ny < 1) throw input_error("tensor mesh needs >= 2 grid lines per axis");
    for (int i = 0; i < nx; ++i)
        if (xs[static_cast<std::size_t>(i + 1)] <= xs[static_cast<std::size_t>(i)])
            throw input_error("tensor mesh x-lines not increasing");
    for (int j = 0; j < ny; ++j)
        if (ys[static_cast<std::size_t>(j + 1)] <= ys[static_cast<std::size_t>(j)])
            throw input_error("tensor mesh y-lines not increasing");
    Mesh2 m;
    m.vertices.reserve(static_cast<std::size_t>((nx + 1) * (ny + 1)));
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i)
            m.vertices.emplace_back(xs[static_cast<std::size_t>(i)], ys[static_cast<std::size_t>(j)]);
    auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
    m.cells.reserve(static_cast<std::size_t>(2 * nx * ny));
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            // lower-left to upper-right diagonal
            m.cells.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            m.cells.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    m.finalize();
    return m;
}

std::array<double, 3> barycentric(const Mesh2& mesh, int c, const Vec2& x) {
    const auto& t = mesh.cells[static_cast<std::size_t>(c)];
    const Vec2& a = mesh.vertices[static_cast<std::size_t>(t[0])];
    const Vec2& b = mesh.vertices[static_cast<std::size_t>(t[1])];
    const Vec2& d = mesh.vertices[static_cast<std::size_t>(t[2])];
    const double area2 = tri_area2(a, b, d);
    return {tri_area2(x, b, d) / area2, tri_area2(a, x, d) / area2, tri_area2(a, b, x) / area2};
}

Locator::Locator(const Mesh2& mesh) : mesh_(mesh) {
    neighbors_.assign(mesh.cells.size(), {-1, -1, -1});
    std::vector<std::pair<std::uint64_t, std::pair<int, int>>> edges;  // key -> (cell, opp)
    edges.reserve(mesh.cells.size() * 3);
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const auto& t = mesh.cells[static_cast<std::size_t>(c)];
        for (int k = 0; k < 3; ++k) {
            const int a = t[static_cast<std::size_t>((k + 1) % 3)];
            const int b = t[static_cast<std::size_t>((k + 2) % 3)];
            const std::uint64_t lo = static_cast<std::uint64_t>(std::min(a, b));
            const std::uint64_t hi = static_cast<std::uint64_t>(std::max(a, b));
            edges.push_back({(hi << 32) | lo, {c, k}});
        }
    }
    std::sort(edges.begin(), edges.end(),
              [](const auto& l, const auto& r) { return l.first < r.first; });
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        if (edges[i].first == edges[i + 1].first) {
            const auto [c0, k0] = edges[i].second;
            const auto [c1, k1] = edges[i + 1].second;
            neighbors_[static_cast<std::size_t>(c0)][static_cast<std::size_t>(k0)] = c1;
            neighbors_[static_cast<std::size_t>(c1)][static_cast<std::size_t>(k1)] = c0;
            ++i;
        }
    }
}

int Locator::locate(const Vec2& x, std::array<double, 3>& bary, double tol) const {
    if (mesh_.num_cells() == 0) return -1;
    int c = hint_;
    if (c < 0 || c >= mesh_.num_cells()) c = 0;
    // Greedy walk: move across the most-violated edge. Bounded to avoid cycling
    // on non-convex domains; falls back to a deterministic scan.
    const int max_steps = mesh_.num_cells() + 8;
    for (int step = 0; step < max_steps; ++step) {
        bary = barycentric(mesh_, c, x);
        int worst = -1;
        double worst_val = -tol;
        for (int k = 0; k < 3; ++k) {
            if (bary[static_cast<std::size_t>(k)] < worst_val) {
                worst_val = bary[static_cast<std::size_t>(k)];
                worst = k;
            }
        }
        if (worst < 0) return resolve_ties(x, c, bary, tol);
        const int nb = neighbors_[static_cast<std::size_t>(c)][static_cast<std::size_t>(worst)];
        if (nb < 0) break;
        c = nb;
    }
    // Exhaustive fallback (lowest containing index by construction).
    for (c = 0; c < mesh_.num_cells(); ++c) {
        bary = barycentric(mesh_, c, x);
        if (bary[0] >= -tol && bary[1] >= -tol && bary[2] >= -tol) {
            hint_ = c;
            return c;
        }
    }
    return -1;
}

// Deterministic tie-breaking: if x sits on an edge or vertex of the located
// cell, return the lowest containing cell index from the local patch.
int Locator::resolve_ties(const Vec2& x, int c, std::array<double, 3>& bary, double tol) const {
    bool tie = false;
    for (double b : bary)
        if (b <= tol) tie = true;
    if (!tie) {
        hint_ = c;
        return c;
    }
    // Breadth-3 patch around c covers full vertex stars on conforming meshes.
    int best = c;
    std::vector<int> patch{c};
    std::size_t head = 0;
    int depth_end = 1, depth = 0;
    while (head < patch.size() && depth < 3 && patch.size() < 32) {
        const int cur = patch[head++];
        for (int k = 0; k < 3; ++k) {
            const int nb = neighbors_[static_cast<std::size_t>(cur)][static_cast<std::size_t>(k)];
            if (nb >= 0 && std::find(patch.begin(), patch.end(), nb) == patch.end())
                patch.push_back(nb);
        }
        if (static_cast<int>(head) == depth_end) {
            ++depth;
            depth_end = static_cast<int>(patch.size());
        }
    }
    for (int cand : patch) {
        if (cand >= best) continue;
        const auto bc = barycentric(mesh_, cand, x);
        if (bc[0] >= -tol && bc[1] >= -tol && bc[2] >= -tol) best = cand;
    }
    bary = barycentric(mesh_, best, x);
    hint_ = best;
    return best;
}

// --- polyline predicates ------------------------------------------------------

namespace {

// Orientation of c relative to segment a-b, normalized by segment scale.
inline double orient(const Vec2& a, const Vec2& b, const Vec2& c) {
    return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

inline bool bbox_overlap(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d, double tol) {
    return std::max(std::min(a.x(), b.x()), std::min(c.x(), d.x())) <=
               std::min(std::max(a.x(), b.x()), std::max(c.x(), d.x())) + tol &&
           std::max(std::min(a.y(), b.y()), std::min(c.y(), d.y())) <=
               std::min(std::max(a.y(), b.y()), std::max(c.y(), d.y())) + tol;
}

inline double point_segment_dist(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 <= 0) return (p - a).norm();
    double t = (p - a).dot(ab) / len2;
    t = std::clamp(t, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

}  // namespace

bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d, double tol) {
    if (!bbox_overlap(a, b, c, d, tol)) return false;
    const double d1 = orient(c, d, a);
    const double d2 = orient(c, d, b);
    const double d3 = orient(a, b, c);
    const double d4 = orient(a, b, d);
    const double s1 = (d - c).norm();
    const double s2 = (b - a).norm();
    const double e1 = tol * std::max(1.0, s1);
    const double e2 = tol * std::max(1.0, s2);
    if (((d1 > e1 && d2 < -e1) || (d1 < -e1 && d2 > e1)) &&
        ((d3 > e2 && d4 < -e2) || (d3 < -e2 && d4 > e2)))
        return true;
    // Near-collinear / endpoint-touching cases via point-segment distances.
    if (point_segment_dist(a, c, d) <= tol) return true;
    if (point_segment_dist(b, c, d) <= tol) return true;
    if (point_segment_dist(c, a, b) <= tol) return true;
    if (point_segment_dist(d, a, b) <= tol) return true;
    return false;
}

bool closed_polyline_simple(const std::vector<Vec2>& loop, double tol) {
    const int n = static_cast<int>(loop.size());
    if (n < 3) return false;
    for (int i = 0; i < n; ++i) {
        const Vec2& a = loop[static_cast<std::size_t>(i)];
        const Vec2& b = loop[static_cast<std::size_t>((i + 1) % n)];
        if ((b - a).norm() <= tol) return false;  // degenerate segment
    }
    // Adjacent segments must not fold back onto each other.
    for (int i = 0; i < n; ++i) {
        const Vec2& a = loop[static_cast<std::size_t>(i)];
        const Vec2& b = loop[static_cast<std::size_t>((i + 1) % n)];
        const Vec2& c = loop[static_cast<std::size_t>((i + 2) % n)];
        const Vec2 u = b - a, v = c - b;
        const double cross = u.x() * v.y() - u.y() * v.x();
        if (std::abs(cross) <= tol * u.norm() * v.norm() && u.dot(v) < 0) return false;
    }
    // Sweep over segments ordered by x-interval; prune by interval overlap.
    struct Seg {
        double xmin, xmax;
        int i;
    };
    std::vector<Seg> segs(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const Vec2& a = loop[static_cast<std::size_t>(i)];
        const Vec2& b = loop[static_cast<std::size_t>((i + 1) % n)];
        segs[static_cast<std::size_t>(i)] = {std::min(a.x(), b.x()), std::max(a.x(), b.x()), i};
    }
    std::sort(segs.begin(), segs.end(), [](const Seg& l, const Seg& r) { return l.xmin < r.xmin; });
    std::vector<int> active;
    for (const Seg& s : segs) {
        active.erase(std::remove_if(active.begin(), active.end(),
                                    [&](int j) {
                                        return segs[static_cast<std::size_t>(j)].xmax <
                                               s.xmin - tol;
                                    }),
                     active.end());
        for (int j : active) {
            const int si = s.i;
            const int sj = segs[static_cast<std::size_t>(j)].i;
            const int diff = std::abs(si - sj);
            if (diff == 1 || diff == n - 1) continue;  // adjacency handled above
            const Vec2& a = loop[static_cast<std::size_t>(si)];
            const Vec2& b = loop[static_cast<std::size_t>((si + 1) % n)];
            const Vec2& c = loop[static_cast<std::size_t>(sj)];
            const Vec2& d = loop[static_cast<std::size_t>((sj + 1) % n)];
            if (segments_intersect(a, b, c, d, tol)) return false;
        }
        active.push_back(static_cast<int>(&s - segs.data()));
    }
    return true;
}

bool polylines_disjoint(const std::vector<Vec2>& a, const std::vector<Vec2>& b, double tol) {
    const int na = static_cast<int>(a.size());
    const int nb = static_cast<int>(b.size());
    for (int i = 0; i < na; ++i)
        for (int j = 0; j < nb; ++j)
            if (segments_intersect(a[static_cast<std::size_t>(i)],
                                   a[static_cast<std::size_t>((i + 1) % na)],
                                   b[static_cast<std::size_t>(j)],
                                   b[static_cast<std::size_t>((j + 1) % nb)], tol))
                return false;
    return true;
}

bool point_in_polygon(const Vec2& p, const std::vector<Vec2>& loop) {
    bool inside = false;
    const int n = static_cast<int>(loop.size());
    for (int i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& vi = loop[static_cast<std::size_t>(i)];
        const Vec2& vj = loop[static_cast<std::size_t>(j)];
        if ((vi.y() > p.y()) != (vj.y() > p.y()) &&
            p.x() < (vj.x() - vi.x()) * (p.y() - vi.y()) / (vj.y() - vi.y()) + vi.x())
            inside = !inside;
    }
    return inside;
}

double polygon_signed_area(const std::vector<Vec2>& loop) {
    double s = 0;
    const int n = static_cast<int>(loop.size());
    for (int i = 0; i < n; ++i) {
        const Vec2& a = loop[static_cast<std::size_t>(i)];
        const Vec2& b = loop[static_cast<std::size_t>((i + 1) % n)];
        s += a.x() * b.y() - a.y() * b.x();
    }
    return 0.5 * s;
}

}  // namespace bilip
