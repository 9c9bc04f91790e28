#include "bilip/energy.hpp"

#include "bilip/matgeom.hpp"
#include "bilip/relax.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bilip {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

struct TraceLoop {
    std::vector<Vec2> pts;  // closed (last connects to first)
    std::vector<Vec2> ims;
    Vec2 center = Vec2::Zero();
};

std::vector<TraceLoop> trace_loops(const PAMap& map) {
    std::vector<TraceLoop> loops;
    for (const auto& loop : map.mesh.boundary_loops) {
        TraceLoop t;
        for (const int v : loop) {
            t.pts.push_back(map.mesh.vertices[static_cast<std::size_t>(v)]);
            t.ims.push_back(map.images[static_cast<std::size_t>(v)]);
            t.center += t.pts.back();
        }
        t.center /= static_cast<double>(t.pts.size());
        loops.push_back(std::move(t));
    }
    return loops;
}

// Image of a point on the loop's polyline, or nullopt-style failure when the
// point is farther than tol from every segment.
bool interp_on_loop(const TraceLoop& loop, const Vec2& p, double tol, Vec2* image) {
    const std::size_t n = loop.pts.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = loop.pts[i];
        const Vec2& b = loop.pts[(i + 1) % n];
        const Vec2 d = b - a;
        const double len2 = d.squaredNorm();
        if (len2 <= 0) continue;
        const double t = std::clamp((p - a).dot(d) / len2, 0.0, 1.0);
        if ((p - (a + t * d)).norm() <= tol) {
            *image = loop.ims[i] + t * (loop.ims[(i + 1) % n] - loop.ims[i]);
            return true;
        }
    }
    return false;
}

// Two piecewise-linear boundary traces agree as functions iff each one's
// breakpoints lie on the other's polyline with matching interpolated images.
bool traces_match(const PAMap& u, const PAMap& u0, double tol) {
    const auto lu = trace_loops(u);
    const auto l0 = trace_loops(u0);
    if (lu.size() != l0.size()) return false;

    const auto check = [&](const std::vector<TraceLoop>& from, const std::vector<TraceLoop>& to) {
        for (const TraceLoop& f : from) {
            const TraceLoop* best = nullptr;
            double bd = kInf;
            for (const TraceLoop& t : to) {
                const double d = (t.center - f.center).norm();
                if (d < bd) {
                    bd = d;
                    best = &t;
                }
            }
            if (!best) return false;
            for (std::size_t i = 0; i < f.pts.size(); ++i) {
                Vec2 im;
                if (!interp_on_loop(*best, f.pts[i], tol, &im)) return false;
                if ((f.ims[i] - im).norm() > tol * (1.0 + im.norm())) return false;
            }
        }
        return true;
    };
    return check(lu, l0) && check(l0, lu);
}

double domain_scale(const PAMap& map) {
    Vec2 lo = map.mesh.vertices.front(), hi = lo;
    for (const Vec2& p : map.mesh.vertices) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    return (hi - lo).norm();
}

// Exact affine fit of the boundary trace when one exists: solved from three
// spread-out boundary nodes, then verified on all of them.
bool affine_trace_of(const PAMap& map, Mat2* a_out, Vec2* b_out) {
    std::vector<Vec2> pts, ims;
    for (const auto& loop : map.mesh.boundary_loops)
        for (const int v : loop) {
            pts.push_back(map.mesh.vertices[static_cast<std::size_t>(v)]);
            ims.push_back(map.images[static_cast<std::size_t>(v)]);
        }
    if (pts.size() < 3) return false;

    std::size_t i1 = 0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        if ((pts[i] - pts[0]).norm() > (pts[i1] - pts[0]).norm()) i1 = i;
    std::size_t i2 = 0;
    double best = 0;
    const Vec2 e = pts[i1] - pts[0];
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Vec2 f = pts[i] - pts[0];
        const double area = std::abs(e.x() * f.y() - e.y() * f.x());
        if (area > best) {
            best = area;
            i2 = i;
        }
    }
    if (best <= 0) return false;

    Mat2 x;
    x.col(0) = pts[i1] - pts[0];
    x.col(1) = pts[i2] - pts[0];
    Mat2 w;
    w.col(0) = ims[i1] - ims[0];
    w.col(1) = ims[i2] - ims[0];
    const Mat2 a = w * x.inverse();
    const Vec2 b = ims[0] - a * pts[0];

    const double scale = domain_scale(map);
    for (std::size_t i = 0; i < pts.size(); ++i)
        if ((ims[i] - (a * pts[i] + b)).norm() > 1e-9 * (1.0 + scale)) return false;
    *a_out = a;
    *b_out = b;
    return true;
}

}  // namespace

double i_eps(const EnergySpec& spec, const PAMap& u) {
    if (spec.eps < 0) throw input_error("i_eps: negative regularization weight");
    if (u.mesh.cells.empty()) throw input_error("i_eps: empty map");
    if (!certify_injective(u).injective)
        throw input_error("i_eps: map is not certified injective");
    const double tol = 1e-9 * (1.0 + domain_scale(spec.u0));
    if (!traces_match(u, spec.u0, tol))
        throw input_error("i_eps: boundary trace does not match the datum");

    double area_term = 0, mx = 0, mi = 0;
    for (int c = 0; c < u.mesh.num_cells(); ++c) {
        const Mat2 g = u.gradient(c);
        const double val = spec.v(g);
        if (!std::isfinite(val)) return kInf;
        area_term += u.mesh.cell_area(c) * val;
        mx = std::max(mx, spectral_norm(g));
        mi = std::max(mi, inverse_spectral_norm(g));
    }
    return area_term + spec.eps * (mx + mi);
}

MinimizeResult minimize(const EnergySpec& spec, int budget) {
    if (spec.eps < 0) throw input_error("minimize: negative regularization weight");
    if (spec.u0.mesh.cells.empty()) throw input_error("minimize: empty boundary datum");
    if (!certify_injective(spec.u0).injective)
        throw input_error("minimize: boundary datum is not certified injective");

    std::vector<PAMap> starts{spec.u0};

    // Laminate starts apply when the datum is affine on the boundary of a
    // rectangle-filling mesh: their trace then reproduces the datum exactly.
    Mat2 a;
    Vec2 b;
    if (affine_trace_of(spec.u0, &a, &b) && a.determinant() > 0 && !spec.v.wells.empty()) {
        Vec2 lo = spec.u0.mesh.vertices.front(), hi = lo;
        for (const Vec2& p : spec.u0.mesh.vertices) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        const double box_area = (hi.x() - lo.x()) * (hi.y() - lo.y());
        if (box_area > 0 &&
            std::abs(spec.u0.mesh.total_area() - box_area) <= 1e-9 * box_area) {
            for (const LaminateSpec& base : well_laminate_specs(spec.v, a))
                for (const double rel : {1.0 / 16, 1.0 / 64}) {
                    LaminateSpec s = base;
                    s.period = rel * (hi[s.axis] - lo[s.axis]);
                    try {
                        PAMap lam = make_laminate(lo, hi, s);
                        for (Vec2& im : lam.images) im += b;
                        starts.push_back(std::move(lam));
                    } catch (const numeric_error&) {
                    } catch (const input_error&) {
                    }
                }
        }
    }

    MinimizeResult out;
    out.explored = static_cast<int>(starts.size());
    out.value = kInf;
    const double datum_value = i_eps(spec, spec.u0);

    for (PAMap& start : starts) {
        const double initial = i_eps(spec, start);
        DescentOptions opt;
        opt.sweeps = budget;
        opt.sup_eps = spec.eps;
        PAMap work = start;
        const DescentResult res = descend_interior_images(work, spec.v, opt);
        const double value = std::isfinite(res.energy) ? res.energy : initial;
        if (value < out.value || out.trace.empty()) {
            out.value = std::min(value, initial);
            out.u_star = std::move(work);
            out.trace.clear();
            out.trace.push_back(initial);
            for (const double e : res.sweep_trace) out.trace.push_back(e);
        }
    }

    // The datum itself is admissible, so the result never exceeds its energy.
    if (datum_value < out.value) {
        out.value = datum_value;
        out.u_star = spec.u0;
        out.trace = {datum_value};
    }
    return out;
}

}  // namespace bilip
