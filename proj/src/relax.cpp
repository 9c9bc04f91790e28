#include "bilip/relax.hpp"

#include "bilip/maps.hpp"
#include "bilip/matgeom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace bilip {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

// Strictly-decreasing acceptance that stays well-defined when the current
// objective is infinite (any finite trial then improves).
bool improves(double trial, double current) {
    if (!std::isfinite(current)) return trial < current;
    return trial < current - 1e-14 * (1.0 + std::abs(current));
}

struct CellFrame {
    std::array<int, 3> v;
    Mat2 xinv;    // inverse of the reference edge matrix
    double area;
};

Mat2 cell_gradient(const CellFrame& f, const std::vector<Vec2>& images) {
    Mat2 u;
    u.col(0) = images[static_cast<std::size_t>(f.v[1])] - images[static_cast<std::size_t>(f.v[0])];
    u.col(1) = images[static_cast<std::size_t>(f.v[2])] - images[static_cast<std::size_t>(f.v[0])];
    return u * f.xinv;
}

}  // namespace

DescentResult descend_interior_images(PAMap& map, const Density& v, const DescentOptions& opt) {
    const Mesh2& mesh = map.mesh;
    const int nc = mesh.num_cells();
    const std::size_t nv = mesh.vertices.size();

    std::vector<CellFrame> frames(static_cast<std::size_t>(nc));
    std::vector<std::vector<int>> incident(nv);
    for (int c = 0; c < nc; ++c) {
        CellFrame& f = frames[static_cast<std::size_t>(c)];
        f.v = mesh.cells[static_cast<std::size_t>(c)];
        Mat2 x;
        x.col(0) = mesh.vertices[static_cast<std::size_t>(f.v[1])] -
                   mesh.vertices[static_cast<std::size_t>(f.v[0])];
        x.col(1) = mesh.vertices[static_cast<std::size_t>(f.v[2])] -
                   mesh.vertices[static_cast<std::size_t>(f.v[0])];
        const double det = x.determinant();
        if (det <= 0) throw input_error("descent requires positively oriented cells");
        f.xinv = Mat2{{x(1, 1) / det, -x(0, 1) / det}, {-x(1, 0) / det, x(0, 0) / det}};
        f.area = 0.5 * det;
        for (int k = 0; k < 3; ++k) incident[static_cast<std::size_t>(f.v[k])].push_back(c);
    }

    std::vector<char> interior(nv, 1);
    for (const auto& loop : mesh.boundary_loops)
        for (const int b : loop) interior[static_cast<std::size_t>(b)] = 0;

    // Caches: per-cell energy contribution and, with the sup regularizer on,
    // both operator norms.
    std::vector<double> cell_e(static_cast<std::size_t>(nc));
    std::vector<double> cell_smax, cell_sinv;
    const bool sup_on = opt.sup_eps > 0;
    if (sup_on) {
        cell_smax.resize(static_cast<std::size_t>(nc));
        cell_sinv.resize(static_cast<std::size_t>(nc));
    }
    const auto fill_cell = [&](int c) {
        const Mat2 g = cell_gradient(frames[static_cast<std::size_t>(c)], map.images);
        cell_e[static_cast<std::size_t>(c)] = frames[static_cast<std::size_t>(c)].area * v(g);
        if (sup_on) {
            cell_smax[static_cast<std::size_t>(c)] = spectral_norm(g);
            cell_sinv[static_cast<std::size_t>(c)] = inverse_spectral_norm(g);
        }
    };
    for (int c = 0; c < nc; ++c) fill_cell(c);

    const auto total_objective = [&]() {
        double e = std::accumulate(cell_e.begin(), cell_e.end(), 0.0);
        if (sup_on)
            e += opt.sup_eps * (*std::max_element(cell_smax.begin(), cell_smax.end()) +
                                *std::max_element(cell_sinv.begin(), cell_sinv.end()));
        return e;
    };

    DescentResult out;
    double objective = total_objective();
    for (int sweep = 0; sweep < opt.sweeps; ++sweep) {
        const std::vector<Vec2> snapshot = map.images;
        const double before = objective;
        bool any = false;

        for (std::size_t vd = 0; vd < nv; ++vd) {
            if (!interior[vd]) continue;
            const auto& cells = incident[vd];
            if (cells.empty()) continue;

            // Sup-norm terms contributed by everything this vertex cannot move.
            double ex_smax = 0, ex_sinv = 0;
            if (sup_on) {
                std::vector<char> mine(static_cast<std::size_t>(nc), 0);
                for (const int c : cells) mine[static_cast<std::size_t>(c)] = 1;
                for (int c = 0; c < nc; ++c)
                    if (!mine[static_cast<std::size_t>(c)]) {
                        ex_smax = std::max(ex_smax, cell_smax[static_cast<std::size_t>(c)]);
                        ex_sinv = std::max(ex_sinv, cell_sinv[static_cast<std::size_t>(c)]);
                    }
            }

            const Vec2 q0 = map.images[vd];
            const auto local = [&](const Vec2& q) {
                map.images[vd] = q;
                double e = 0, mx = ex_smax, mi = ex_sinv;
                for (const int c : cells) {
                    const Mat2 g = cell_gradient(frames[static_cast<std::size_t>(c)], map.images);
                    if (g.determinant() <= 1e-12) {
                        map.images[vd] = q0;
                        return kInf;
                    }
                    e += frames[static_cast<std::size_t>(c)].area * v(g);
                    if (sup_on) {
                        mx = std::max(mx, spectral_norm(g));
                        mi = std::max(mi, inverse_spectral_norm(g));
                    }
                }
                map.images[vd] = q0;
                if (sup_on) e += opt.sup_eps * (mx + mi);
                return e;
            };

            const double e0 = local(q0);
            double edge = 0;
            int edges = 0;
            for (const int c : cells)
                for (int k = 0; k < 3; ++k) {
                    const int w = frames[static_cast<std::size_t>(c)].v[static_cast<std::size_t>(k)];
                    if (static_cast<std::size_t>(w) == vd) continue;
                    edge += (map.images[static_cast<std::size_t>(w)] - q0).norm();
                    ++edges;
                }
            const double hloc = edges ? edge / edges : 1.0;
            if (!(hloc > 0)) continue;

            const double h = 1e-6 * hloc;
            Vec2 g;
            g.x() = (local(q0 + Vec2(h, 0)) - local(q0 - Vec2(h, 0))) / (2 * h);
            g.y() = (local(q0 + Vec2(0, h)) - local(q0 + Vec2(0, -h))) / (2 * h);
            if (!std::isfinite(g.x()) || !std::isfinite(g.y())) continue;
            const double gn = g.norm();
            if (gn <= 0) continue;

            double step = 0.5 * hloc / gn;
            for (int bt = 0; bt < 10; ++bt, step *= 0.5) {
                const double trial = local(q0 - step * g);
                if (improves(trial, e0)) {
                    map.images[vd] = q0 - step * g;
                    objective += trial - e0;
                    for (const int c : cells) fill_cell(c);
                    any = true;
                    break;
                }
            }
        }

        if (!certify_injective(map).injective) {
            map.images = snapshot;
            for (int c = 0; c < nc; ++c) fill_cell(c);
            objective = total_objective();
            out.sweep_trace.push_back(objective);
            break;
        }
        // Remove incremental drift before the stopping test.
        objective = total_objective();
        out.sweep_trace.push_back(objective);
        if (!any || before - objective <= opt.improve_tol * (1.0 + std::abs(objective))) break;
    }

    out.energy = total_objective();
    return out;
}

namespace {

double mean_energy(const PAMap& map, const Density& v) {
    double e = 0;
    for (int c = 0; c < map.mesh.num_cells(); ++c) {
        const double val = v(map.gradient(c));
        if (!std::isfinite(val)) return kInf;
        e += map.mesh.cell_area(c) * val;
    }
    return e / map.mesh.total_area();
}

bool has_affine_trace(const PAMap& map, const Mat2& a, double tol) {
    for (const auto& loop : map.mesh.boundary_loops)
        for (const int b : loop) {
            const Vec2 want = a * map.mesh.vertices[static_cast<std::size_t>(b)];
            if ((map.images[static_cast<std::size_t>(b)] - want).norm() > tol * (1.0 + want.norm()))
                return false;
        }
    return true;
}

}  // namespace

std::vector<LaminateSpec> well_laminate_specs(const Density& v, const Mat2& a) {
    std::vector<LaminateSpec> specs;
    for (std::size_t i = 0; i < v.wells.size(); ++i)
        for (std::size_t j = i + 1; j < v.wells.size(); ++j) {
            const Mat2& w1 = v.wells[i];
            const Mat2& w2 = v.wells[j];
            Vec2 dir, normal;
            double amp = 0;
            if (!rank_one_connection(w1, w2, dir, normal, amp)) continue;
            if (std::abs(normal.x()) < 0.999 && std::abs(normal.y()) < 0.999) continue;
            const int axis = std::abs(normal.y()) > 0.999 ? 1 : 0;

            const Mat2 d = w1 - w2;
            const double denom = d.squaredNorm();
            if (denom > 0) {
                const double lambda = ((a - w2).cwiseProduct(d)).sum() / denom;
                const Mat2 resid = a - (lambda * w1 + (1.0 - lambda) * w2);
                if (lambda > 0.02 && lambda < 0.98 &&
                    resid.norm() <= 1e-9 * (1.0 + a.norm())) {
                    LaminateSpec s;
                    s.a = w1;
                    s.b = w2;
                    s.lambda = lambda;
                    s.axis = axis;
                    specs.push_back(s);
                }
            }

            const Mat2 rank1 = amp * dir * normal.transpose();
            for (const double lambda : {0.25, 0.5, 0.75})
                for (const double t : {1.0, 0.5}) {
                    LaminateSpec s;
                    s.a = a + (1.0 - lambda) * t * rank1;
                    s.b = a - lambda * t * rank1;
                    if (s.a.determinant() <= 0 || s.b.determinant() <= 0) continue;
                    s.lambda = lambda;
                    s.axis = axis;
                    specs.push_back(s);
                }
        }
    return specs;
}

ZvResult zv_estimate(const RelaxProblem& p) {
    ZvResult out;
    if (p.a.determinant() <= 0) {
        out.value = kInf;
        return out;
    }
    if (p.n < 1) throw input_error("zv_estimate: resolution must be positive");

    const Vec2 lo(0, 0), hi(1, 1);
    std::vector<PAMap> candidates;
    candidates.push_back(affine_map(structured_rect_mesh(lo, hi, p.n, p.n), p.a));

    for (const PAMap& seed : p.seeds) {
        if (seed.mesh.cells.empty()) continue;
        if (!has_affine_trace(seed, p.a, 1e-9)) continue;
        if (!certify_injective(seed).injective) continue;
        candidates.push_back(seed);
    }

    for (const LaminateSpec& base : well_laminate_specs(p.v, p.a))
        for (const double period : {1.0 / 16, 1.0 / 64, 1.0 / 256}) {
            LaminateSpec s = base;
            s.period = period;
            try {
                candidates.push_back(make_laminate(lo, hi, s));
            } catch (const numeric_error&) {
            } catch (const input_error&) {
            }
        }

    std::vector<double> energy(candidates.size());
    for (std::size_t k = 0; k < candidates.size(); ++k)
        energy[k] = mean_energy(candidates[k], p.v);
    // The affine candidate's exact mean energy is v(a): its true gradient is
    // constant, so the cell-wise sum telescopes to v(a) independent of mesh
    // round-off.
    energy[0] = p.v(p.a);
    out.explored = static_cast<int>(candidates.size());

    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return energy[x] < energy[y];
    });

    const std::size_t refine =
        std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max(0, p.descend_top)));
    std::vector<PAMap> refined(refine);
    std::vector<double> refined_e(refine, kInf);
    parallel_for(refine, p.jobs, [&](std::size_t k) {
        if (!std::isfinite(energy[order[k]])) return;
        PAMap work = candidates[order[k]];
        DescentOptions opt;
        opt.sweeps = p.budget;
        const DescentResult res = descend_interior_images(work, p.v, opt);
        refined[k] = std::move(work);
        refined_e[k] = res.energy / refined[k].mesh.total_area();
    });

    std::size_t best = order[0];
    out.value = energy[best];
    out.argmap = candidates[best];
    for (std::size_t k = 0; k < refine; ++k)
        if (refined_e[k] < out.value) {
            out.value = refined_e[k];
            out.argmap = std::move(refined[k]);
        }
    if (!std::isfinite(out.value)) out.argmap = PAMap();
    return out;
}

ViolationWitness biqc_violation_witness(const Density& v, const Mat2& a, const PAMap& candidate) {
    if (candidate.mesh.cells.empty())
        throw input_error("violation witness: empty candidate");
    if (!has_affine_trace(candidate, a, 1e-9))
        throw input_error("violation witness: candidate trace is not the affine map");
    const Certificate cert = certify_injective(candidate);
    if (!cert.injective || !cert.orientation_preserving)
        throw input_error("violation witness: candidate is not an admissible certified map");

    ViolationWitness out;
    out.integral = 0;
    for (int c = 0; c < candidate.mesh.num_cells(); ++c) {
        const double val = v(candidate.gradient(c));
        if (!std::isfinite(val)) {
            out.integral = kInf;
            break;
        }
        out.integral += candidate.mesh.cell_area(c) * val;
    }

    const double area = candidate.mesh.total_area();
    const double va = v(a);
    if (!std::isfinite(va)) {
        // v is infinite at `a` while an admissible map has finite energy: the
        // inequality fails as badly as possible.
        out.violates = std::isfinite(out.integral);
        out.gap = out.violates ? kInf : 0.0;
        return out;
    }
    out.gap = area * va - out.integral;
    out.violates = out.gap > 1e-9 * area * (1.0 + std::abs(va));
    return out;
}

std::vector<JensenResult> jensen_check(const YoungMeasure& m, const PAMap& u, const Density& v,
                                       int resolution) {
    check_measure(m);
    // The measure's first moments already determine the left side; the
    // underlying map is part of the interface but adds no information here.
    (void)u;
    const std::vector<Mat2> moments = first_moment(m);
    const std::vector<double> pairings = pair_with_test(m, v);

    std::vector<JensenResult> out(static_cast<std::size_t>(m.regions.size()));
    for (int r = 0; r < m.regions.size(); ++r) {
        JensenResult& jr = out[static_cast<std::size_t>(r)];
        if (m.mass[static_cast<std::size_t>(r)] <= 0 ||
            m.atoms[static_cast<std::size_t>(r)].empty()) {
            // Nothing is asserted where the measure carries no mass.
            jr.holds = true;
            jr.lhs = jr.rhs = 0.0;
            continue;
        }
        RelaxProblem p;
        p.v = v;
        p.a = moments[static_cast<std::size_t>(r)];
        p.n = resolution;
        const ZvResult zr = zv_estimate(p);
        jr.lhs = zr.value;
        jr.rhs = pairings[static_cast<std::size_t>(r)];
        jr.holds = jr.lhs <= jr.rhs + 1e-6 + 1e-3 * std::abs(jr.rhs);
        if (std::isinf(jr.rhs)) jr.holds = true;
    }
    return out;
}

}  // namespace bilip
