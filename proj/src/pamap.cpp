#include "bilip/pamap.hpp"

#include <algorithm>

namespace bilip {

PAMap::PAMap(Mesh2 m, std::vector<Vec2> im) : mesh(std::move(m)), images(std::move(im)) {
    if (images.size() != mesh.vertices.size())
        throw input_error("image count does not match vertex count");
}

Mat2 PAMap::gradient(int c) const {
    const auto& t = mesh.cells[static_cast<std::size_t>(c)];
    const Vec2& x0 = mesh.vertices[static_cast<std::size_t>(t[0])];
    const Vec2& x1 = mesh.vertices[static_cast<std::size_t>(t[1])];
    const Vec2& x2 = mesh.vertices[static_cast<std::size_t>(t[2])];
    const Vec2& y0 = images[static_cast<std::size_t>(t[0])];
    const Vec2& y1 = images[static_cast<std::size_t>(t[1])];
    const Vec2& y2 = images[static_cast<std::size_t>(t[2])];
    Mat2 dx, dy;
    dx.col(0) = x1 - x0;
    dx.col(1) = x2 - x0;
    dy.col(0) = y1 - y0;
    dy.col(1) = y2 - y0;
    return dy * dx.inverse();
}

std::vector<Mat2> PAMap::gradients() const {
    std::vector<Mat2> g(static_cast<std::size_t>(mesh.num_cells()));
    for (int c = 0; c < mesh.num_cells(); ++c) g[static_cast<std::size_t>(c)] = gradient(c);
    return g;
}

Vec2 PAMap::image_of_cell_point(int c, const std::array<double, 3>& bary) const {
    const auto& t = mesh.cells[static_cast<std::size_t>(c)];
    return bary[0] * images[static_cast<std::size_t>(t[0])] +
           bary[1] * images[static_cast<std::size_t>(t[1])] +
           bary[2] * images[static_cast<std::size_t>(t[2])];
}

std::vector<Vec2> PAMap::boundary_image_loop(std::size_t loop) const {
    std::vector<Vec2> pts;
    pts.reserve(mesh.boundary_loops[loop].size());
    for (int v : mesh.boundary_loops[loop]) pts.push_back(images[static_cast<std::size_t>(v)]);
    return pts;
}

MapEvaluator::MapEvaluator(const PAMap& map) : map_(map), ref_locator_(map.mesh) {
    neighbors_ = ref_locator_.neighbors();
}

int MapEvaluator::locate(const Vec2& x, std::array<double, 3>& bary) const {
    return ref_locator_.locate(x, bary);
}

Vec2 MapEvaluator::forward(const Vec2& x) const {
    std::array<double, 3> bary;
    const int c = ref_locator_.locate(x, bary);
    if (c < 0) throw input_error("evaluation point outside the domain");
    return map_.image_of_cell_point(c, bary);
}

namespace {

inline std::array<double, 3> image_barycentric(const PAMap& map, int c, const Vec2& y) {
    const auto& t = map.mesh.cells[static_cast<std::size_t>(c)];
    const Vec2& a = map.images[static_cast<std::size_t>(t[0])];
    const Vec2& b = map.images[static_cast<std::size_t>(t[1])];
    const Vec2& d = map.images[static_cast<std::size_t>(t[2])];
    const double area2 =
        (b.x() - a.x()) * (d.y() - a.y()) - (b.y() - a.y()) * (d.x() - a.x());
    auto tri2 = [](const Vec2& p, const Vec2& q, const Vec2& r) {
        return (q.x() - p.x()) * (r.y() - p.y()) - (q.y() - p.y()) * (r.x() - p.x());
    };
    return {tri2(y, b, d) / area2, tri2(a, y, d) / area2, tri2(a, b, y) / area2};
}

}  // namespace

Vec2 MapEvaluator::inverse(const Vec2& y) const {
    const int nc = map_.mesh.num_cells();
    if (nc == 0) throw input_error("empty mesh");
    int c = inv_hint_;
    if (c < 0 || c >= nc) c = 0;
    const int max_steps = nc + 8;
    std::array<double, 3> bary{};
    for (int step = 0; step < max_steps; ++step) {
        bary = image_barycentric(map_, c, y);
        int worst = -1;
        double worst_val = -kGeomTol;
        for (int k = 0; k < 3; ++k) {
            if (bary[static_cast<std::size_t>(k)] < worst_val) {
                worst_val = bary[static_cast<std::size_t>(k)];
                worst = k;
            }
        }
        if (worst < 0) {
            inv_hint_ = c;
            const auto& t = map_.mesh.cells[static_cast<std::size_t>(c)];
            return bary[0] * map_.mesh.vertices[static_cast<std::size_t>(t[0])] +
                   bary[1] * map_.mesh.vertices[static_cast<std::size_t>(t[1])] +
                   bary[2] * map_.mesh.vertices[static_cast<std::size_t>(t[2])];
        }
        const int nb = neighbors_[static_cast<std::size_t>(c)][static_cast<std::size_t>(worst)];
        if (nb < 0) break;
        c = nb;
    }
    for (c = 0; c < nc; ++c) {
        bary = image_barycentric(map_, c, y);
        if (bary[0] >= -kGeomTol && bary[1] >= -kGeomTol && bary[2] >= -kGeomTol) {
            inv_hint_ = c;
            const auto& t = map_.mesh.cells[static_cast<std::size_t>(c)];
            return bary[0] * map_.mesh.vertices[static_cast<std::size_t>(t[0])] +
                   bary[1] * map_.mesh.vertices[static_cast<std::size_t>(t[1])] +
                   bary[2] * map_.mesh.vertices[static_cast<std::size_t>(t[2])];
        }
    }
    throw input_error("evaluation point outside the image");
}

double bilip_constant(const PAMap& map) {
    double l = 1.0;
    for (int c = 0; c < map.mesh.num_cells(); ++c) {
        const double d = distortion(map.gradient(c));
        if (!std::isfinite(d)) throw numeric_error("degenerate cell gradient");
        if (map.gradient(c).determinant() <= 0)
            throw numeric_error("orientation-reversing cell in bilip_constant");
        l = std::max(l, d);
    }
    return l;
}

double sampled_distortion(const PAMap& map, int pairs, Rng& rng) {
    MapEvaluator ev(map);
    const int nc = map.mesh.num_cells();
    if (nc == 0) return 1.0;
    double worst = 1.0;
    auto random_point = [&](Vec2& x, Vec2& y) {
        const int c = static_cast<int>(rng.below(static_cast<std::uint64_t>(nc)));
        double b0 = rng.uniform(), b1 = rng.uniform();
        if (b0 + b1 > 1) {
            b0 = 1 - b0;
            b1 = 1 - b1;
        }
        const std::array<double, 3> bary{1 - b0 - b1, b0, b1};
        const auto& t = map.mesh.cells[static_cast<std::size_t>(c)];
        x = bary[0] * map.mesh.vertices[static_cast<std::size_t>(t[0])] +
            bary[1] * map.mesh.vertices[static_cast<std::size_t>(t[1])] +
            bary[2] * map.mesh.vertices[static_cast<std::size_t>(t[2])];
        y = map.image_of_cell_point(c, bary);
    };
    for (int i = 0; i < pairs; ++i) {
        Vec2 x1, y1, x2, y2;
        random_point(x1, y1);
        random_point(x2, y2);
        const double dx = (x1 - x2).norm();
        const double dy = (y1 - y2).norm();
        if (dx <= 1e-14 || dy <= 1e-14) continue;
        worst = std::max({worst, dy / dx, dx / dy});
    }
    return worst;
}

bool is_orientation_preserving(const PAMap& map) {
    for (int c = 0; c < map.mesh.num_cells(); ++c)
        if (map.gradient(c).determinant() <= 0) return false;
    return true;
}

Certificate certify_injective(const PAMap& map, double tol) {
    Certificate cert;
    cert.min_det = std::numeric_limits<double>::infinity();
    bool positive = true;
    for (int c = 0; c < map.mesh.num_cells(); ++c) {
        const double det = map.gradient(c).determinant();
        cert.min_det = std::min(cert.min_det, det);
        if (det <= 0) positive = false;
    }
    cert.orientation_preserving = positive;

    const std::size_t nloops = map.mesh.boundary_loops.size();
    std::vector<std::vector<Vec2>> loops(nloops);
    bool simple = nloops > 0;
    for (std::size_t i = 0; i < nloops; ++i) {
        loops[i] = map.boundary_image_loop(i);
        if (!closed_polyline_simple(loops[i], tol)) simple = false;
    }
    if (simple) {
        // Outer image must stay counter-clockwise, holes clockwise, holes inside.
        if (polygon_signed_area(loops[0]) <= 0) simple = false;
        for (std::size_t i = 1; i < nloops && simple; ++i) {
            if (polygon_signed_area(loops[i]) >= 0) simple = false;
            if (!polylines_disjoint(loops[0], loops[i], tol)) simple = false;
            if (simple && !point_in_polygon(loops[i][0], loops[0])) simple = false;
        }
        for (std::size_t i = 1; i < nloops && simple; ++i)
            for (std::size_t j = i + 1; j < nloops && simple; ++j)
                if (!polylines_disjoint(loops[i], loops[j], tol)) simple = false;
    }
    cert.boundary_simple = simple;
    cert.injective = positive && simple;
    if (cert.injective) {
        double l = 1.0;
        for (int c = 0; c < map.mesh.num_cells(); ++c)
            l = std::max(l, distortion(map.gradient(c)));
        cert.bilip = l;
    }
    return cert;
}

PAMap rescale(const PAMap& map, const Vec2& center, double eps) {
    if (eps <= 0) throw input_error("rescale needs eps > 0");
    PAMap out;
    out.mesh = map.mesh;
    for (auto& v : out.mesh.vertices) v = center + eps * v;
    out.images.resize(map.images.size());
    for (std::size_t i = 0; i < map.images.size(); ++i) out.images[i] = eps * map.images[i];
    return out;
}

PAMap resample(const PAMap& map, Mesh2 mesh) {
    MapEvaluator ev(map);
    std::vector<Vec2> im(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) im[i] = ev.forward(mesh.vertices[i]);
    return PAMap(std::move(mesh), std::move(im));
}

PAMap post_compose_affine(const PAMap& map, const Mat2& a, const Vec2& b) {
    PAMap out = map;
    for (auto& y : out.images) y = a * y + b;
    return out;
}

double sup_distance(const PAMap& a, const PAMap& b, const std::vector<Vec2>& extra) {
    MapEvaluator ea(a), eb(b);
    double worst = 0;
    for (std::size_t i = 0; i < a.mesh.vertices.size(); ++i)
        worst = std::max(worst, (a.images[i] - eb.forward(a.mesh.vertices[i])).norm());
    for (std::size_t i = 0; i < b.mesh.vertices.size(); ++i)
        worst = std::max(worst, (ea.forward(b.mesh.vertices[i]) - b.images[i]).norm());
    for (const Vec2& p : extra)
        worst = std::max(worst, (ea.forward(p) - eb.forward(p)).norm());
    return worst;
}

PAMap identity_map(Mesh2 mesh) {
    std::vector<Vec2> im = mesh.vertices;
    return PAMap(std::move(mesh), std::move(im));
}

PAMap affine_map(Mesh2 mesh, const Mat2& a, const Vec2& b) {
    std::vector<Vec2> im(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) im[i] = a * mesh.vertices[i] + b;
    return PAMap(std::move(mesh), std::move(im));
}

}  // namespace bilip
