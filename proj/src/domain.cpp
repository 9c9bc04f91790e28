#include "bilip/domain.hpp"

#include "bilip/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bilip {

namespace {

double loop_perimeter(const std::vector<Vec2>& loop) {
    double s = 0;
    const std::size_t n = loop.size();
    for (std::size_t i = 0; i < n; ++i) s += (loop[(i + 1) % n] - loop[i]).norm();
    return s;
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 <= 0) return (p - a).norm();
    const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

void check_rectilinear(const std::vector<Vec2>& loop) {
    const std::size_t n = loop.size();
    if (n < 4) throw input_error("rectilinear loop needs >= 4 vertices");
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 d = loop[(i + 1) % n] - loop[i];
        const bool horizontal = std::abs(d.y()) <= kGeomTol && std::abs(d.x()) > kGeomTol;
        const bool vertical = std::abs(d.x()) <= kGeomTol && std::abs(d.y()) > kGeomTol;
        if (!horizontal && !vertical)
            throw input_error("domain edge neither horizontal nor vertical");
    }
}

// Approximate positive gcd with tolerance (Euclid on reals).
double real_gcd(double a, double b, double tol) {
    a = std::abs(a);
    b = std::abs(b);
    if (a < b) std::swap(a, b);
    for (int it = 0; it < 128 && b > tol; ++it) {
        const double r = std::fmod(a, b);
        a = b;
        b = (r > b - tol) ? 0.0 : r;  // fmod can return ~b under roundoff
    }
    return a;
}

}  // namespace

bool Domain2::contains(const Vec2& p) const {
    if (!point_in_polygon(p, outer)) return false;
    for (const auto& h : holes)
        if (point_in_polygon(p, h)) return false;
    return true;
}

double Domain2::boundary_distance(const Vec2& p) const {
    double d = std::numeric_limits<double>::infinity();
    auto scan = [&](const std::vector<Vec2>& loop) {
        const std::size_t n = loop.size();
        for (std::size_t i = 0; i < n; ++i)
            d = std::min(d, point_segment_distance(p, loop[i], loop[(i + 1) % n]));
    };
    scan(outer);
    for (const auto& h : holes) scan(h);
    return d;
}

double Domain2::area() const {
    double a = polygon_signed_area(outer);
    for (const auto& h : holes) a += polygon_signed_area(h);  // holes clockwise: negative
    return a;
}

double Domain2::perimeter() const {
    double s = loop_perimeter(outer);
    for (const auto& h : holes) s += loop_perimeter(h);
    return s;
}

Domain2 make_domain(std::vector<Vec2> outer, std::vector<std::vector<Vec2>> holes) {
    Domain2 dom;
    check_rectilinear(outer);
    if (polygon_signed_area(outer) < 0) std::reverse(outer.begin(), outer.end());
    for (auto& h : holes) {
        check_rectilinear(h);
        if (polygon_signed_area(h) > 0) std::reverse(h.begin(), h.end());
    }
    dom.outer = std::move(outer);
    dom.holes = std::move(holes);

    dom.bbox_lo = dom.outer[0];
    dom.bbox_hi = dom.outer[0];
    for (const auto& v : dom.outer) {
        dom.bbox_lo = dom.bbox_lo.cwiseMin(v);
        dom.bbox_hi = dom.bbox_hi.cwiseMax(v);
    }

    // Lattice pitch: gcd of all coordinate offsets from the bounding-box corner.
    double g = 0;
    auto feed = [&](const Vec2& v) {
        const double dx = v.x() - dom.bbox_lo.x();
        const double dy = v.y() - dom.bbox_lo.y();
        for (double d : {dx, dy}) {
            if (d <= kGeomTol) continue;
            g = (g == 0) ? d : real_gcd(g, d, kGeomTol);
        }
    };
    for (const auto& v : dom.outer) feed(v);
    for (const auto& h : dom.holes)
        for (const auto& v : h) feed(v);
    if (g < 1e-6) throw input_error("domain vertices do not sit on a usable common lattice");
    dom.lattice = g;

    for (const auto& h : dom.holes)
        if (!point_in_polygon(h[0], dom.outer))
            throw input_error("hole outside the outer loop");
    return dom;
}

Domain2 unit_square_domain() {
    return make_domain({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
}

Domain2 lshape_domain() {
    return make_domain({{0, 0}, {1, 0}, {1, 0.5}, {0.5, 0.5}, {0.5, 1}, {0, 1}});
}

bool Region::contains(const Vec2& p) const {
    const int i = static_cast<int>(std::floor((p.x() - origin.x()) / cell));
    const int j = static_cast<int>(std::floor((p.y() - origin.y()) / cell));
    if (i < 0 || j < 0 || i >= nx || j >= ny) return false;
    return mask[static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) +
                static_cast<std::size_t>(i)] != 0;
}

double Region::area() const {
    std::size_t count = 0;
    for (std::uint8_t v : mask) count += v ? 1 : 0;
    return static_cast<double>(count) * cell * cell;
}

namespace {

double pick_resolution(const Domain2& dom, double delta, double resolution) {
    if (resolution > 0) return resolution;
    double c = delta / 256.0;
    const double w = dom.bbox_hi.x() - dom.bbox_lo.x();
    const double h = dom.bbox_hi.y() - dom.bbox_lo.y();
    const double budget = 2.5e7;
    if ((w / c) * (h / c) > budget) c = std::sqrt(w * h / budget);
    return c;
}

}  // namespace

Region boundary_strip(const Domain2& dom, double delta, double resolution) {
    if (delta <= 0) throw input_error("boundary strip needs delta > 0");
    const double c = pick_resolution(dom, delta, resolution);
    Region reg;
    reg.origin = dom.bbox_lo;
    reg.cell = c;
    reg.nx = static_cast<int>(std::ceil((dom.bbox_hi.x() - dom.bbox_lo.x()) / c));
    reg.ny = static_cast<int>(std::ceil((dom.bbox_hi.y() - dom.bbox_lo.y()) / c));
    reg.mask.assign(static_cast<std::size_t>(reg.nx) * static_cast<std::size_t>(reg.ny), 0);
    double max_dist = 0;
    for (int j = 0; j < reg.ny; ++j) {
        for (int i = 0; i < reg.nx; ++i) {
            const Vec2 p = reg.origin + Vec2((i + 0.5) * c, (j + 0.5) * c);
            if (!dom.contains(p)) continue;
            const double d = dom.boundary_distance(p);
            max_dist = std::max(max_dist, d);
            if (d < delta)
                reg.mask[static_cast<std::size_t>(j) * static_cast<std::size_t>(reg.nx) +
                         static_cast<std::size_t>(i)] = 1;
        }
    }
    if (max_dist < delta)
        throw input_error("delta >= inradius: the boundary strip swallows the domain");
    return reg;
}

double inradius_estimate(const Domain2& dom, double resolution) {
    const double w = dom.bbox_hi.x() - dom.bbox_lo.x();
    const double h = dom.bbox_hi.y() - dom.bbox_lo.y();
    const double c = resolution > 0 ? resolution : std::min(w, h) / 512.0;
    double max_dist = 0;
    for (double y = dom.bbox_lo.y() + c / 2; y < dom.bbox_hi.y(); y += c)
        for (double x = dom.bbox_lo.x() + c / 2; x < dom.bbox_hi.x(); x += c) {
            const Vec2 p(x, y);
            if (dom.contains(p)) max_dist = std::max(max_dist, dom.boundary_distance(p));
        }
    return max_dist;
}

}  // namespace bilip
