#include "bilip/meshbuild.hpp"

#include <algorithm>
#include <cmath>

namespace bilip {

namespace {

inline double tri_area2(const Vec2& a, const Vec2& b, const Vec2& c) {
    return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

}  // namespace

MeshBuilder::MeshBuilder(double merge_tol) : tol_(merge_tol), cell_(std::max(merge_tol * 8, 1e-300)) {}

std::int64_t MeshBuilder::bucket_key(std::int64_t qx, std::int64_t qy) {
    return ((qx & 0xffffffffll) << 32) | (qy & 0xffffffffll);
}

std::int64_t MeshBuilder::bucket_of(double x, double y) const {
    return bucket_key(static_cast<std::int64_t>(std::floor(x / cell_)),
                      static_cast<std::int64_t>(std::floor(y / cell_)));
}

int MeshBuilder::add_vertex(const Vec2& p, const Vec2& image) {
    // Probe the 3x3 bucket neighborhood in integer coordinates: re-flooring a
    // perturbed coordinate can skip a bucket when p sits on a bucket boundary.
    const auto bx = static_cast<std::int64_t>(std::floor(p.x() / cell_));
    const auto by = static_cast<std::int64_t>(std::floor(p.y() / cell_));
    for (std::int64_t dx = -1; dx <= 1; ++dx)
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
            const auto it = hash_.find(bucket_key(bx + dx, by + dy));
            if (it == hash_.end()) continue;
            for (int v : it->second)
                if ((vertices_[static_cast<std::size_t>(v)] - p).norm() <= tol_) {
                    if ((images_[static_cast<std::size_t>(v)] - image).norm() > 1e-6)
                        throw numeric_error("mesh glue: conflicting images at a shared node");
                    return v;
                }
        }
    const int idx = static_cast<int>(vertices_.size());
    vertices_.push_back(p);
    images_.push_back(image);
    hash_[bucket_of(p.x(), p.y())].push_back(idx);
    return idx;
}

void MeshBuilder::add_cell(int a, int b, int c) {
    if (a == b || b == c || a == c) return;  // collapsed under merging
    const double a2 = tri_area2(vertices_[static_cast<std::size_t>(a)],
                                vertices_[static_cast<std::size_t>(b)],
                                vertices_[static_cast<std::size_t>(c)]);
    // Slivers squeezed shut by vertex merging: drop (their long edges coincide,
    // so edge pairing stays consistent). Anything clearly inverted is kept for
    // finalize() to reject loudly.
    const double perim = (vertices_[static_cast<std::size_t>(a)] - vertices_[static_cast<std::size_t>(b)]).norm() +
                         (vertices_[static_cast<std::size_t>(b)] - vertices_[static_cast<std::size_t>(c)]).norm() +
                         (vertices_[static_cast<std::size_t>(c)] - vertices_[static_cast<std::size_t>(a)]).norm();
    if (a2 <= 0 && a2 > -8 * tol_ * perim) return;
    cells_.push_back({a, b, c});
}

void MeshBuilder::add_fan(const Vec2& center, const Vec2& center_image,
                          const std::vector<int>& ring) {
    const int c = add_vertex(center, center_image);
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) add_cell(c, ring[i], ring[(i + 1) % n]);
}

PAMap MeshBuilder::take() {
    Mesh2 mesh;
    mesh.vertices = std::move(vertices_);
    mesh.cells = std::move(cells_);
    mesh.finalize();
    return PAMap(std::move(mesh), std::move(images_));
}

std::vector<Vec2> clip_triangle_to_rect(const Vec2& a, const Vec2& b, const Vec2& c,
                                        const Vec2& lo, const Vec2& hi, double snap) {
    std::vector<Vec2> poly = {a, b, c};
    // Signed distance to each half-plane boundary, positive inside.
    const auto clip_plane = [&](int axis, double coord, double sign) {
        std::vector<Vec2> out;
        out.reserve(poly.size() + 2);
        const std::size_t n = poly.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2& cur = poly[i];
            const Vec2& nxt = poly[(i + 1) % n];
            const double dc = sign * (cur[axis] - coord);
            const double dn = sign * (nxt[axis] - coord);
            if (dc >= -snap) out.push_back(cur);
            if ((dc > snap && dn < -snap) || (dc < -snap && dn > snap)) {
                const double t = dc / (dc - dn);
                Vec2 p = cur + t * (nxt - cur);
                p[axis] = coord;  // exact on the clip line
                out.push_back(p);
            }
        }
        poly = std::move(out);
    };
    clip_plane(0, lo.x(), 1.0);
    if (poly.empty()) return {};
    clip_plane(0, hi.x(), -1.0);
    if (poly.empty()) return {};
    clip_plane(1, lo.y(), 1.0);
    if (poly.empty()) return {};
    clip_plane(1, hi.y(), -1.0);

    // Drop near-duplicate consecutive vertices introduced by on-line snapping.
    std::vector<Vec2> clean;
    for (const Vec2& p : poly) {
        if (!clean.empty() && (clean.back() - p).norm() <= snap) continue;
        clean.push_back(p);
    }
    while (clean.size() > 1 && (clean.front() - clean.back()).norm() <= snap) clean.pop_back();
    if (clean.size() < 3) return {};
    if (std::abs(polygon_signed_area(clean)) <= snap * (hi - lo).norm()) return {};
    return clean;
}

std::vector<double> segment_kink_params(const Mesh2& mesh, const Vec2& a, const Vec2& b,
                                        double tol) {
    std::vector<double> out;
    const Vec2 d = b - a;
    const double len2 = d.squaredNorm();
    if (len2 <= 0) return out;
    const Vec2 blo = a.cwiseMin(b);
    const Vec2 bhi = a.cwiseMax(b);

    std::vector<std::uint64_t> seen;
    seen.reserve(mesh.cells.size() * 3);
    for (const auto& t : mesh.cells)
        for (int k = 0; k < 3; ++k) {
            const int va = t[static_cast<std::size_t>(k)];
            const int vb = t[static_cast<std::size_t>((k + 1) % 3)];
            seen.push_back((static_cast<std::uint64_t>(std::min(va, vb)) << 32) |
                           static_cast<std::uint64_t>(std::max(va, vb)));
        }
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());

    const double eps = 1e-12 * std::max(1.0, std::sqrt(len2));
    for (const std::uint64_t key : seen) {
        const Vec2& p = mesh.vertices[static_cast<std::size_t>(key >> 32)];
        const Vec2& q = mesh.vertices[static_cast<std::size_t>(key & 0xffffffffull)];
        if (std::max(p.x(), q.x()) < blo.x() - eps || std::min(p.x(), q.x()) > bhi.x() + eps ||
            std::max(p.y(), q.y()) < blo.y() - eps || std::min(p.y(), q.y()) > bhi.y() + eps)
            continue;
        const Vec2 e = q - p;
        const double denom = d.x() * e.y() - d.y() * e.x();
        const Vec2 ap = p - a;
        if (std::abs(denom) > eps * eps) {
            const double t = (ap.x() * e.y() - ap.y() * e.x()) / denom;
            const double s = (ap.x() * d.y() - ap.y() * d.x()) / denom;
            if (s >= -1e-9 && s <= 1 + 1e-9 && t > tol && t < 1 - tol) out.push_back(t);
        } else if (std::abs(ap.x() * d.y() - ap.y() * d.x()) <= eps * std::sqrt(len2)) {
            // Collinear overlap: the function restricted to [a,b] kinks at the
            // projections of the edge endpoints.
            for (const Vec2* v : {&p, &q}) {
                const double t = (*v - a).dot(d) / len2;
                if (t > tol && t < 1 - tol) out.push_back(t);
            }
        }
    }
    std::sort(out.begin(), out.end());
    std::vector<double> dedup;
    for (double t : out)
        if (dedup.empty() || t - dedup.back() > tol) dedup.push_back(t);
    return dedup;
}

std::vector<std::vector<int>> bucket_cells_by_grid(const Mesh2& mesh, const Vec2& lo,
                                                   const Vec2& hi, int nx, int ny) {
    std::vector<std::vector<int>> buckets(static_cast<std::size_t>(nx) *
                                          static_cast<std::size_t>(ny));
    const double wx = (hi.x() - lo.x()) / nx;
    const double wy = (hi.y() - lo.y()) / ny;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const auto& t = mesh.cells[static_cast<std::size_t>(c)];
        Vec2 clo = mesh.vertices[static_cast<std::size_t>(t[0])];
        Vec2 chi = clo;
        for (int k = 1; k < 3; ++k) {
            clo = clo.cwiseMin(mesh.vertices[static_cast<std::size_t>(t[k])]);
            chi = chi.cwiseMax(mesh.vertices[static_cast<std::size_t>(t[k])]);
        }
        const int i0 = std::max(0, static_cast<int>(std::floor((clo.x() - lo.x()) / wx - 1e-9)));
        const int j0 = std::max(0, static_cast<int>(std::floor((clo.y() - lo.y()) / wy - 1e-9)));
        const int i1 = std::min(nx - 1, static_cast<int>(std::floor((chi.x() - lo.x()) / wx + 1e-9)));
        const int j1 = std::min(ny - 1, static_cast<int>(std::floor((chi.y() - lo.y()) / wy + 1e-9)));
        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i)
                buckets[static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) +
                        static_cast<std::size_t>(i)]
                    .push_back(c);
    }
    return buckets;
}

}  // namespace bilip
