#include "bilip/tiling.hpp"

#include <algorithm>
#include <deque>

namespace bilip {

namespace {

constexpr int kUnset = std::numeric_limits<int>::max();

inline std::uint64_t edge_key(int a, int b) {
    const std::uint64_t lo = static_cast<std::uint64_t>(std::min(a, b));
    const std::uint64_t hi = static_cast<std::uint64_t>(std::max(a, b));
    return (hi << 32) | lo;
}

struct Raster {
    int nx = 0, ny = 0;
    std::vector<std::uint8_t> inside;
    std::vector<int> cheb;  // Chebyshev cell distance to the exterior (inside cells)

    bool in_range(int i, int j) const { return i >= 0 && j >= 0 && i < nx && j < ny; }
    std::size_t idx(int i, int j) const {
        return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) +
               static_cast<std::size_t>(i);
    }
    bool is_inside(int i, int j) const { return in_range(i, j) && inside[idx(i, j)] != 0; }
};

Raster rasterize(const Domain2& dom, const Vec2& origin, double r, int nx, int ny) {
    Raster ras;
    ras.nx = nx;
    ras.ny = ny;
    ras.inside.assign(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), 0);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const Vec2 c = origin + Vec2((i + 0.5) * r, (j + 0.5) * r);
            if (dom.contains(c)) ras.inside[ras.idx(i, j)] = 1;
        }
    // Multi-source BFS over the 8-neighborhood = Chebyshev distance transform.
    ras.cheb.assign(ras.inside.size(), kUnset);
    std::deque<std::pair<int, int>> queue;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            if (!ras.is_inside(i, j)) continue;
            bool touches_exterior = false;
            for (int dj = -1; dj <= 1 && !touches_exterior; ++dj)
                for (int di = -1; di <= 1; ++di)
                    if ((di || dj) && !ras.is_inside(i + di, j + dj)) {
                        touches_exterior = true;
                        break;
                    }
            if (touches_exterior) {
                ras.cheb[ras.idx(i, j)] = 1;
                queue.emplace_back(i, j);
            }
        }
    while (!queue.empty()) {
        const auto [i, j] = queue.front();
        queue.pop_front();
        const int d = ras.cheb[ras.idx(i, j)];
        for (int dj = -1; dj <= 1; ++dj)
            for (int di = -1; di <= 1; ++di) {
                if (!di && !dj) continue;
                if (!ras.is_inside(i + di, j + dj)) continue;
                auto& target = ras.cheb[ras.idx(i + di, j + dj)];
                if (target > d + 1) {
                    target = d + 1;
                    queue.emplace_back(i + di, j + dj);
                }
            }
    }
    return ras;
}

// Attempt the two-layer strip construction at pitch r; returns false if the
// configuration is inadmissible at this resolution.
bool try_build(const Domain2& dom, double delta, double r, GridComplex& g, std::string& why) {
    const double w = dom.bbox_hi.x() - dom.bbox_lo.x();
    const double h = dom.bbox_hi.y() - dom.bbox_lo.y();
    const int nx = static_cast<int>(std::llround(w / r));
    const int ny = static_cast<int>(std::llround(h / r));
    if (nx < 7 || ny < 7) {
        why = "grid too coarse";
        return false;
    }
    const Vec2 origin = dom.bbox_lo;
    Raster ras = rasterize(dom, origin, r, nx, ny);

    auto is_strip = [&](int i, int j) {
        if (!ras.is_inside(i, j)) return false;
        const int m = ras.cheb[ras.idx(i, j)];
        return m == 2 || m == 3;
    };

    // Strip squares must stay strictly inside the delta-strip: the distance
    // function is 1-Lipschitz, so center distance + half diagonal bounds the max.
    const double half_diag = r * 0.70710678118654757;
    std::vector<std::pair<int, int>> squares;
    bool have_bulk = false;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            if (!ras.is_inside(i, j)) continue;
            const int m = ras.cheb[ras.idx(i, j)];
            if (m >= 4) have_bulk = true;
            if (m == 2 || m == 3) {
                const Vec2 c = origin + Vec2((i + 0.5) * r, (j + 0.5) * r);
                if (dom.boundary_distance(c) + half_diag >= delta) {
                    why = "strip square escapes the delta-strip";
                    return false;
                }
                squares.emplace_back(i, j);
            }
        }
    if (squares.empty()) {
        why = "no strip squares";
        return false;
    }
    if (!have_bulk) {
        why = "no bulk remains inside the strip";
        return false;
    }

    // Gamma: edges between the two strip layers (Chebyshev offsets 2 and 3).
    const int vstride = nx + 1;
    auto vid = [vstride](int i, int j) { return j * vstride + i; };
    std::vector<std::pair<int, int>> gamma;  // sorted vertex pairs
    auto layer = [&](int i, int j) { return ras.is_inside(i, j) ? ras.cheb[ras.idx(i, j)] : 0; };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const int m = layer(i, j);
            if (m != 2 && m != 3) continue;
            // right neighbor: shared vertical edge
            if (const int mr = layer(i + 1, j); (m == 2 && mr == 3) || (m == 3 && mr == 2))
                gamma.emplace_back(vid(i + 1, j), vid(i + 1, j + 1));
            // top neighbor: shared horizontal edge
            if (const int mt = layer(i, j + 1); (m == 2 && mt == 3) || (m == 3 && mt == 2))
                gamma.emplace_back(vid(i, j + 1), vid(i + 1, j + 1));
        }
    if (gamma.empty()) {
        why = "no separating layer";
        return false;
    }

    // Gamma must be a disjoint union of simple cycles interior to the strip:
    // every Gamma vertex has exactly two incident Gamma edges and four incident
    // strip squares.
    std::unordered_map<int, int> gamma_degree;
    for (const auto& e : gamma) {
        gamma_degree[e.first]++;
        gamma_degree[e.second]++;
    }
    for (const auto& [v, deg] : gamma_degree) {
        if (deg != 2) {
            why = "separating layer is not a union of simple cycles";
            return false;
        }
        const int i = v % vstride;
        const int j = v / vstride;
        if (!(is_strip(i - 1, j - 1) && is_strip(i, j - 1) && is_strip(i - 1, j) &&
              is_strip(i, j))) {
            why = "separating vertex not interior to the strip";
            return false;
        }
    }

    // Side classification: flood from the collar (offset-1 cells) through shared
    // edges, with Gamma edges as walls.
    std::vector<std::uint8_t> outer_side(ras.inside.size(), 0);
    std::unordered_map<std::uint64_t, bool> is_gamma_wall;
    for (const auto& e : gamma) is_gamma_wall[edge_key(e.first, e.second)] = true;
    auto wall_between = [&](int i0, int j0, int i1, int j1) {
        // Shared lattice edge between 4-adjacent cells (i0,j0) and (i1,j1).
        int va, vb;
        if (i1 == i0 + 1) {
            va = vid(i0 + 1, j0);
            vb = vid(i0 + 1, j0 + 1);
        } else if (i1 == i0 - 1) {
            va = vid(i0, j0);
            vb = vid(i0, j0 + 1);
        } else if (j1 == j0 + 1) {
            va = vid(i0, j0 + 1);
            vb = vid(i0 + 1, j0 + 1);
        } else {
            va = vid(i0, j0);
            vb = vid(i0 + 1, j0);
        }
        return is_gamma_wall.count(edge_key(va, vb)) > 0;
    };
    std::deque<std::pair<int, int>> flood;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            if (ras.is_inside(i, j) && ras.cheb[ras.idx(i, j)] == 1) {
                outer_side[ras.idx(i, j)] = 1;
                flood.emplace_back(i, j);
            }
    const int di4[4] = {1, -1, 0, 0};
    const int dj4[4] = {0, 0, 1, -1};
    while (!flood.empty()) {
        const auto [i, j] = flood.front();
        flood.pop_front();
        for (int d = 0; d < 4; ++d) {
            const int i2 = i + di4[d], j2 = j + dj4[d];
            if (!ras.is_inside(i2, j2) || outer_side[ras.idx(i2, j2)]) continue;
            if (wall_between(i, j, i2, j2)) continue;
            outer_side[ras.idx(i2, j2)] = 1;
            flood.emplace_back(i2, j2);
        }
    }
    // Separation: nothing at offset >= 3 may be reachable from the collar.
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            if (ras.is_inside(i, j) && outer_side[ras.idx(i, j)] &&
                ras.cheb[ras.idx(i, j)] >= 3) {
                why = "separating layer leaks";
                return false;
            }

    // Commit.
    g.delta = delta;
    g.r = r;
    g.origin = origin;
    g.nx = nx;
    g.ny = ny;
    g.squares = std::move(squares);
    g.outer_side = std::move(outer_side);

    g.cell_class.assign(ras.inside.size(), CellClass::Outside);
    g.area_bulk = g.area_strip = g.area_bound = 0;
    const double cell_area = r * r;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            if (!ras.is_inside(i, j)) continue;
            const int m = ras.cheb[ras.idx(i, j)];
            CellClass cc;
            if (m == 2 || m == 3) {
                cc = CellClass::Strip;
                g.area_strip += cell_area;
            } else if (g.outer_side[ras.idx(i, j)]) {
                cc = CellClass::Bound;
                g.area_bound += cell_area;
            } else {
                cc = CellClass::Bulk;
                g.area_bulk += cell_area;
            }
            g.cell_class[ras.idx(i, j)] = cc;
        }

    // Q: all edges of strip squares, labeled.
    g.edges.clear();
    g.edge_lookup.clear();
    auto strip_cell_outer = [&](int i, int j) -> int {
        // -1: not strip; 0: inner side; 1: outer side
        if (!is_strip(i, j)) return -1;
        return g.outer_side[ras.idx(i, j)] ? 1 : 0;
    };
    auto add_edge = [&](int va, int vb, int ci0, int cj0, int ci1, int cj1) {
        const std::uint64_t key = edge_key(va, vb);
        if (g.edge_lookup.count(key)) return;
        GridEdge e;
        e.a = std::min(va, vb);
        e.b = std::max(va, vb);
        if (is_gamma_wall.count(key)) {
            e.label = EdgeLabel::Gamma;
        } else {
            const int s0 = strip_cell_outer(ci0, cj0);
            const int s1 = strip_cell_outer(ci1, cj1);
            const int side = s0 >= 0 ? s0 : s1;
            e.label = side == 1 ? EdgeLabel::Outer : EdgeLabel::Inner;
        }
        g.edge_lookup[key] = static_cast<int>(g.edges.size());
        g.edges.push_back(e);
    };
    for (const auto& [i, j] : g.squares) {
        add_edge(vid(i, j), vid(i + 1, j), i, j, i, j - 1);          // bottom
        add_edge(vid(i, j + 1), vid(i + 1, j + 1), i, j, i, j + 1);  // top
        add_edge(vid(i, j), vid(i, j + 1), i, j, i - 1, j);          // left
        add_edge(vid(i + 1, j), vid(i + 1, j + 1), i, j, i + 1, j);  // right
    }

    g.gamma_vertices.clear();
    for (const auto& [v, deg] : gamma_degree) g.gamma_vertices.push_back(v);
    std::sort(g.gamma_vertices.begin(), g.gamma_vertices.end());
    return true;
}

}  // namespace

int GridComplex::edge_index(int va, int vb) const {
    const auto it = edge_lookup.find(edge_key(va, vb));
    return it == edge_lookup.end() ? -1 : it->second;
}

std::array<int, 4> GridComplex::arm_neighbors(int vid) const {
    const int stride = nx + 1;
    return {vid + 1, vid - 1, vid + stride, vid - stride};
}

GridComplex build_tiling(const Domain2& dom, double delta, double r_cap) {
    if (delta <= 0) throw input_error("build_tiling needs delta > 0");
    const double target = std::min(delta / 4.0, r_cap);
    if (!(target > 0)) throw input_error("invalid r cap");
    const double h = dom.lattice;
    int k = std::max(1, static_cast<int>(std::ceil(h / target - 1e-12)));
    while (h / k > target * (1 + 1e-12)) ++k;

    GridComplex g;
    g.domain = dom;
    std::string why = "no admissible pitch tried";
    for (int attempt = 0; attempt < 256; ++attempt, ++k) {
        const double r = h / k;
        const double w = dom.bbox_hi.x() - dom.bbox_lo.x();
        const double ht = dom.bbox_hi.y() - dom.bbox_lo.y();
        if ((w / r) * (ht / r) > 6.4e7) break;  // raster budget
        if (try_build(dom, delta, r, g, why)) return g;
    }
    throw numeric_error("no admissible square strip for delta=" + std::to_string(delta) +
                        " (" + why + ")");
}

bool separation_check(const GridComplex& g, const std::vector<int>& dropped_gamma_edges) {
    // Rebuild the wall set, minus dropped edges.
    std::unordered_map<std::uint64_t, bool> wall;
    for (std::size_t i = 0; i < g.edges.size(); ++i)
        if (g.edges[i].label == EdgeLabel::Gamma) wall[edge_key(g.edges[i].a, g.edges[i].b)] = true;
    for (int idx : dropped_gamma_edges) {
        if (idx < 0 || idx >= static_cast<int>(g.edges.size()))
            throw input_error("dropped edge index out of range");
        wall.erase(edge_key(g.edges[static_cast<std::size_t>(idx)].a,
                            g.edges[static_cast<std::size_t>(idx)].b));
    }

    const int nx = g.nx, ny = g.ny;
    auto idx = [nx](int i, int j) {
        return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) +
               static_cast<std::size_t>(i);
    };
    auto inside = [&](int i, int j) {
        return i >= 0 && j >= 0 && i < nx && j < ny && g.cls(i, j) != CellClass::Outside;
    };
    const int vstride = nx + 1;
    auto vid = [vstride](int i, int j) { return j * vstride + i; };
    auto blocked = [&](int i0, int j0, int i1, int j1) {
        int va, vb;
        if (i1 == i0 + 1) {
            va = vid(i0 + 1, j0);
            vb = vid(i0 + 1, j0 + 1);
        } else if (i1 == i0 - 1) {
            va = vid(i0, j0);
            vb = vid(i0, j0 + 1);
        } else if (j1 == j0 + 1) {
            va = vid(i0, j0 + 1);
            vb = vid(i0 + 1, j0 + 1);
        } else {
            va = vid(i0, j0);
            vb = vid(i0 + 1, j0);
        }
        return wall.count(edge_key(va, vb)) > 0;
    };

    std::vector<std::uint8_t> reached(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny),
                                      0);
    std::deque<std::pair<int, int>> queue;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            if (g.cls(i, j) == CellClass::Bound) {
                reached[idx(i, j)] = 1;
                queue.emplace_back(i, j);
            }
    const int di4[4] = {1, -1, 0, 0};
    const int dj4[4] = {0, 0, 1, -1};
    while (!queue.empty()) {
        const auto [i, j] = queue.front();
        queue.pop_front();
        for (int d = 0; d < 4; ++d) {
            const int i2 = i + di4[d], j2 = j + dj4[d];
            if (!inside(i2, j2) || reached[idx(i2, j2)]) continue;
            if (blocked(i, j, i2, j2)) continue;
            if (g.cls(i2, j2) == CellClass::Bulk) return false;  // leaked past Gamma
            if (!g.outer_side[idx(i2, j2)]) return false;        // inner strip layer reached
            reached[idx(i2, j2)] = 1;
            queue.emplace_back(i2, j2);
        }
    }
    return true;
}

}  // namespace bilip
