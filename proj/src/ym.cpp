#include "bilip/ym.hpp"

#include "bilip/maps.hpp"
#include "bilip/meshbuild.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>

namespace bilip {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

// Atoms closer than this in the max-entry metric are one atom.
constexpr double kAtomTol = 1e-8;

// Linear inset of Vitali copies inside their free box (keeps copies strictly
// disjoint with positive margins).
constexpr double kCopyMargin = 1.0 / 64.0;

std::array<Vec2, 2> mesh_bbox(const Mesh2& mesh) {
    Vec2 lo = mesh.vertices.front(), hi = lo;
    for (const Vec2& p : mesh.vertices) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    return {lo, hi};
}

void add_atom(std::vector<WeightedAtom>& atoms, const Mat2& a, double w) {
    for (WeightedAtom& at : atoms)
        if ((at.a - a).cwiseAbs().maxCoeff() < kAtomTol) {
            at.w += w;
            return;
        }
    atoms.push_back({a, w});
}
}  // namespace

int RegionPartition::index_of(const Vec2& p) const {
    for (std::size_t k = 0; k < boxes.size(); ++k) {
        const auto& b = boxes[k];
        if (p.x() >= b[0].x() && p.x() <= b[1].x() && p.y() >= b[0].y() && p.y() <= b[1].y())
            return static_cast<int>(k);
    }
    return -1;
}

double RegionPartition::box_area(int k) const {
    const auto& b = boxes[static_cast<std::size_t>(k)];
    return (b[1].x() - b[0].x()) * (b[1].y() - b[0].y());
}

RegionPartition single_region(const Vec2& lo, const Vec2& hi) {
    RegionPartition out;
    out.boxes.push_back({lo, hi});
    return out;
}

RegionPartition uniform_partition(const Vec2& lo, const Vec2& hi, int nx, int ny) {
    if (nx < 1 || ny < 1 || !(hi.x() > lo.x()) || !(hi.y() > lo.y()))
        throw input_error("uniform_partition: empty box or non-positive subdivision");
    const double sx = (hi.x() - lo.x()) / nx;
    const double sy = (hi.y() - lo.y()) / ny;
    RegionPartition out;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            out.boxes.push_back({Vec2(lo.x() + i * sx, lo.y() + j * sy),
                                 Vec2(lo.x() + (i + 1) * sx, lo.y() + (j + 1) * sy)});
    return out;
}

YoungMeasure make_measure(RegionPartition regions, std::vector<std::vector<WeightedAtom>> atoms,
                          std::vector<double> mass) {
    if (atoms.size() != static_cast<std::size_t>(regions.size()))
        throw input_error("make_measure: one atom list per region required");
    YoungMeasure m;
    m.regions = std::move(regions);
    m.atoms = std::move(atoms);
    if (mass.empty()) {
        mass.resize(m.atoms.size());
        for (int k = 0; k < m.regions.size(); ++k)
            mass[static_cast<std::size_t>(k)] = m.regions.box_area(k);
    }
    if (mass.size() != m.atoms.size())
        throw input_error("make_measure: one mass per region required");
    m.mass = std::move(mass);
    double rho = 1.0;
    for (const auto& regional : m.atoms)
        for (const WeightedAtom& at : regional) rho = std::max(rho, distortion(at.a));
    m.support_rho = rho;
    check_measure(m);
    return m;
}

void check_measure(const YoungMeasure& m) {
    if (m.atoms.size() != static_cast<std::size_t>(m.regions.size()) ||
        m.mass.size() != m.atoms.size())
        throw input_error("measure: regions, atom lists and masses disagree in size");
    for (std::size_t r = 0; r < m.atoms.size(); ++r) {
        double sum = 0;
        for (const WeightedAtom& at : m.atoms[r]) {
            if (at.w < 0) throw input_error("measure: negative weight in region " +
                                            std::to_string(r));
            sum += at.w;
            if (at.a.determinant() <= 0)
                throw input_error("measure: support violation in region " + std::to_string(r) +
                                  " (atom with non-positive determinant)");
            if (std::isfinite(m.support_rho) &&
                !in_distortion_class(at.a, m.support_rho, true, 1e-9 * m.support_rho))
                throw input_error("measure: support violation in region " + std::to_string(r) +
                                  " (atom outside the declared distortion class)");
        }
        if (m.mass[r] > 0 && std::abs(sum - 1.0) > 1e-12)
            throw input_error("measure: weights in region " + std::to_string(r) +
                              " sum to " + std::to_string(sum));
    }
}

YoungMeasure empirical_measure(const std::vector<PAMap>& seq, const RegionPartition& regions,
                               bool tail_average) {
    if (seq.empty()) throw input_error("empirical_measure: empty sequence");
    const auto bb = mesh_bbox(seq.front().mesh);
    const double scale = (bb[1] - bb[0]).norm() + 1.0;
    const double area0 = seq.front().mesh.total_area();
    for (const PAMap& map : seq) {
        const auto b = mesh_bbox(map.mesh);
        if ((b[0] - bb[0]).norm() > 1e-9 * scale || (b[1] - bb[1]).norm() > 1e-9 * scale ||
            std::abs(map.mesh.total_area() - area0) > 1e-9 * area0)
            throw input_error("empirical_measure: sequence members live on incompatible meshes");
    }

    YoungMeasure m;
    m.regions = regions;
    m.atoms.assign(static_cast<std::size_t>(regions.size()), {});
    m.mass.assign(static_cast<std::size_t>(regions.size()), 0.0);

    const std::size_t first = tail_average ? 0 : seq.size() - 1;
    const double member_w = 1.0 / static_cast<double>(seq.size() - first);
    for (std::size_t s = first; s < seq.size(); ++s) {
        const PAMap& map = seq[s];
        for (int c = 0; c < map.mesh.num_cells(); ++c) {
            const int r = regions.index_of(map.mesh.cell_centroid(c));
            if (r < 0)
                throw input_error(
                    "empirical_measure: cell centroid outside every region (mesh and "
                    "partition are incompatible)");
            const double w = member_w * map.mesh.cell_area(c);
            add_atom(m.atoms[static_cast<std::size_t>(r)], map.gradient(c), w);
            m.mass[static_cast<std::size_t>(r)] += w;
        }
    }
    for (std::size_t r = 0; r < m.atoms.size(); ++r) {
        if (m.mass[r] <= 0) continue;
        for (WeightedAtom& at : m.atoms[r]) at.w /= m.mass[r];
    }
    double rho = 1.0;
    for (const auto& regional : m.atoms)
        for (const WeightedAtom& at : regional) rho = std::max(rho, distortion(at.a));
    m.support_rho = rho;
    return m;
}

std::vector<Mat2> first_moment(const YoungMeasure& m) {
    std::vector<Mat2> out(m.atoms.size(), Mat2::Zero());
    for (std::size_t r = 0; r < m.atoms.size(); ++r)
        for (const WeightedAtom& at : m.atoms[r]) out[r] += at.w * at.a;
    return out;
}

std::vector<double> pair_with_test(const YoungMeasure& m, const Density& v) {
    std::vector<double> out(m.atoms.size(), 0.0);
    for (std::size_t r = 0; r < m.atoms.size(); ++r)
        for (const WeightedAtom& at : m.atoms[r]) {
            if (at.w <= 0) continue;
            const double val = v(at.a);
            if (!std::isfinite(val)) {
                out[r] = kInf;
                break;
            }
            out[r] += at.w * val;
        }
    return out;
}

YoungMeasure homogenize(const YoungMeasure& m) {
    check_measure(m);
    Vec2 lo(kInf, kInf), hi(-kInf, -kInf);
    double total = 0;
    for (int r = 0; r < m.regions.size(); ++r) {
        lo = lo.cwiseMin(m.regions.boxes[static_cast<std::size_t>(r)][0]);
        hi = hi.cwiseMax(m.regions.boxes[static_cast<std::size_t>(r)][1]);
        total += m.mass[static_cast<std::size_t>(r)];
    }
    if (total <= 0) throw input_error("homogenize: measure carries no mass");

    YoungMeasure out;
    out.regions = single_region(lo, hi);
    out.atoms.resize(1);
    out.mass = {total};
    out.support_rho = m.support_rho;
    auto& pooled = out.atoms[0];
    for (std::size_t r = 0; r < m.atoms.size(); ++r) {
        const double f = m.mass[r] / total;
        if (f <= 0) continue;
        for (const WeightedAtom& at : m.atoms[r]) {
            // Merge bitwise-equal atoms only: pairing with any density is then
            // conserved exactly, not just up to an atom-metric tolerance.
            bool merged = false;
            for (WeightedAtom& ex : pooled)
                if (ex.a == at.a) {
                    ex.w += f * at.w;
                    merged = true;
                    break;
                }
            if (!merged) pooled.push_back({at.a, f * at.w});
        }
    }
    return out;
}

LocalizedMaps localize(const std::vector<PAMap>& seq, const Vec2& a, int j) {
    if (seq.empty()) throw input_error("localize: empty sequence");
    if (j < 1) throw input_error("localize: scale index must be >= 1");
    const auto bb = mesh_bbox(seq.front().mesh);
    const double scale = (bb[1] - bb[0]).norm();
    const Vec2 wlo = a + bb[0] / j, whi = a + bb[1] / j;
    if (wlo.x() < bb[0].x() - 1e-9 * scale || wlo.y() < bb[0].y() - 1e-9 * scale ||
        whi.x() > bb[1].x() + 1e-9 * scale || whi.y() > bb[1].y() + 1e-9 * scale)
        throw input_error("localize: window escapes the domain");

    const double window_area =
        seq.front().mesh.total_area() / (static_cast<double>(j) * static_cast<double>(j));

    LocalizedMaps out;
    out.exact = true;
    for (const PAMap& map : seq) {
        // Exact path: the window is a union of whole cells.
        const double vtol = 1e-12 * (scale + 1.0);
        std::vector<char> in(map.mesh.vertices.size(), 0);
        for (std::size_t v = 0; v < map.mesh.vertices.size(); ++v) {
            const Vec2& p = map.mesh.vertices[v];
            in[v] = p.x() >= wlo.x() - vtol && p.x() <= whi.x() + vtol &&
                    p.y() >= wlo.y() - vtol && p.y() <= whi.y() + vtol;
        }
        std::vector<int> taken;
        double covered = 0;
        for (int c = 0; c < map.mesh.num_cells(); ++c) {
            const auto& t = map.mesh.cells[static_cast<std::size_t>(c)];
            if (in[static_cast<std::size_t>(t[0])] && in[static_cast<std::size_t>(t[1])] &&
                in[static_cast<std::size_t>(t[2])]) {
                taken.push_back(c);
                covered += map.mesh.cell_area(c);
            }
        }
        if (std::abs(covered - window_area) <= 1e-9 * window_area) {
            std::vector<int> remap(map.mesh.vertices.size(), -1);
            Mesh2 sub;
            std::vector<Vec2> images;
            for (const int c : taken) {
                std::array<int, 3> cell{};
                for (int k = 0; k < 3; ++k) {
                    const int v = map.mesh.cells[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)];
                    if (remap[static_cast<std::size_t>(v)] < 0) {
                        remap[static_cast<std::size_t>(v)] = sub.num_vertices();
                        sub.vertices.push_back(j * (map.mesh.vertices[static_cast<std::size_t>(v)] - a));
                        images.push_back(j * map.images[static_cast<std::size_t>(v)]);
                    }
                    cell[static_cast<std::size_t>(k)] = remap[static_cast<std::size_t>(v)];
                }
                sub.cells.push_back(cell);
            }
            sub.finalize();
            out.maps.emplace_back(std::move(sub), std::move(images));
            continue;
        }

        // Resampled path: structured mesh at a resolution matching the blown-up
        // feature size.
        out.exact = false;
        const int msrc = std::max(
            8, static_cast<int>(std::lround(std::sqrt(map.mesh.num_cells() / 2.0))));
        const int mloc = std::min(msrc * j, 256);
        Mesh2 mesh = structured_rect_mesh(bb[0], bb[1], mloc, mloc);
        MapEvaluator ev(map);
        std::vector<Vec2> images(mesh.vertices.size());
        for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
            Vec2 q = a + mesh.vertices[v] / j;
            q = q.cwiseMax(wlo).cwiseMin(whi);
            images[v] = static_cast<double>(j) * ev.forward(q);
        }
        out.maps.emplace_back(std::move(mesh), std::move(images));
    }
    return out;
}

// --- Vitali covers -------------------------------------------------------------

namespace {

// Rectangles of bbox(shape) minus shape, from a raster at the shape's lattice
// pitch; horizontal runs merged vertically when aligned.
std::vector<std::array<Vec2, 2>> bbox_minus_shape(const Domain2& shape) {
    const Vec2 size = shape.bbox_hi - shape.bbox_lo;
    double pitch = shape.lattice;
    if (!(pitch > 0)) pitch = std::min(size.x(), size.y()) / 64.0;
    const int nx = std::max(1, static_cast<int>(std::lround(size.x() / pitch)));
    const int ny = std::max(1, static_cast<int>(std::lround(size.y() / pitch)));
    const double sx = size.x() / nx, sy = size.y() / ny;

    struct Run {
        int i0, i1, j0, j1;  // half-open cell ranges
    };
    std::vector<Run> runs;
    for (int jj = 0; jj < ny; ++jj) {
        int start = -1;
        for (int ii = 0; ii <= nx; ++ii) {
            bool outside = false;
            if (ii < nx) {
                const Vec2 c = shape.bbox_lo + Vec2((ii + 0.5) * sx, (jj + 0.5) * sy);
                outside = !shape.contains(c);
            }
            if (outside && start < 0) start = ii;
            if (!outside && start >= 0) {
                bool merged = false;
                for (Run& rn : runs)
                    if (rn.i0 == start && rn.i1 == ii && rn.j1 == jj) {
                        rn.j1 = jj + 1;
                        merged = true;
                        break;
                    }
                if (!merged) runs.push_back({start, ii, jj, jj + 1});
                start = -1;
            }
        }
    }
    std::vector<std::array<Vec2, 2>> out;
    out.reserve(runs.size());
    for (const Run& rn : runs)
        out.push_back({shape.bbox_lo + Vec2(rn.i0 * sx, rn.j0 * sy),
                       shape.bbox_lo + Vec2(rn.i1 * sx, rn.j1 * sy)});
    return out;
}

}  // namespace

VitaliCover vitali_cover(const std::array<Vec2, 2>& target, const Domain2& shape, double fill,
                         int budget) {
    if (!(fill > 0) || !(fill < 1)) throw input_error("vitali_cover: fill must be in (0,1)");
    const Vec2 tsize = target[1] - target[0];
    if (!(tsize.x() > 0) || !(tsize.y() > 0)) throw input_error("vitali_cover: empty target box");
    const double target_area = tsize.x() * tsize.y();
    const double shape_area = shape.area();
    if (!(shape_area > 0)) throw input_error("vitali_cover: degenerate shape");
    const Vec2 ssize = shape.bbox_hi - shape.bbox_lo;
    const auto notches = bbox_minus_shape(shape);
    const double min_side = 1e-7 * std::min(tsize.x(), tsize.y());

    struct FreeBox {
        double area;
        std::array<Vec2, 2> b;
        bool operator<(const FreeBox& o) const { return area < o.area; }
    };
    std::priority_queue<FreeBox> pq;
    const auto push_box = [&](const Vec2& lo, const Vec2& hi) {
        const double w = hi.x() - lo.x(), h = hi.y() - lo.y();
        if (w <= min_side || h <= min_side) return;
        pq.push({w * h, {lo, hi}});
    };
    push_box(target[0], target[1]);

    VitaliCover out;
    double covered = 0;
    while (!pq.empty() && static_cast<int>(out.copies.size()) < budget &&
           covered < fill * target_area) {
        const FreeBox fb = pq.top();
        pq.pop();
        const double bw = fb.b[1].x() - fb.b[0].x(), bh = fb.b[1].y() - fb.b[0].y();
        const double eps = (1.0 - kCopyMargin) * std::min(bw / ssize.x(), bh / ssize.y());
        if (eps * std::min(ssize.x(), ssize.y()) <= min_side) continue;
        const Vec2 csize = eps * ssize;
        const Vec2 cblo = Vec2(fb.b[0].x() + (bw - csize.x()) / 2,
                               fb.b[0].y() + (bh - csize.y()) / 2);
        const Vec2 cbhi = cblo + csize;
        const Vec2 anchor = cblo - eps * shape.bbox_lo;
        out.copies.push_back({anchor, eps});
        covered += eps * eps * shape_area;

        push_box(fb.b[0], Vec2(cblo.x(), fb.b[1].y()));
        push_box(Vec2(cbhi.x(), fb.b[0].y()), fb.b[1]);
        push_box(Vec2(cblo.x(), fb.b[0].y()), Vec2(cbhi.x(), cblo.y()));
        push_box(Vec2(cblo.x(), cbhi.y()), Vec2(cbhi.x(), fb.b[1].y()));
        for (const auto& nr : notches) push_box(anchor + eps * nr[0], anchor + eps * nr[1]);
    }
    out.covered_fraction = covered / target_area;
    if (out.covered_fraction < fill) {
        std::ostringstream msg;
        msg << "vitali_cover: achieved fraction " << out.covered_fraction
            << " of requested " << fill << " within a budget of " << budget << " copies";
        throw numeric_error(msg.str());
    }
    return out;
}

// --- convex combination and synthesis ------------------------------------------

namespace {

// Triangulates the annulus between a convex CCW node loop and the four CCW
// corners of an enclosing box, using only existing nodes (cell sides stay
// single edges, so neighboring cells conform through shared corners).
void annulus_triangulate(MeshBuilder& mb, const std::vector<int>& in_ids,
                         const std::vector<Vec2>& in_pos, const std::array<int, 4>& out_ids,
                         const std::array<Vec2, 4>& out_pos, const Vec2& center) {
    const std::size_t m = in_ids.size();
    if (m < 3) throw numeric_error("annulus: inner loop too short");

    // Unwrapped ascending angle sequences, inner rotated to start at or after
    // the first corner's angle.
    const auto ang = [&](const Vec2& p) { return std::atan2(p.y() - center.y(), p.x() - center.x()); };
    const double base = ang(out_pos[0]);
    const auto lift = [&](double a) {
        double d = a - base;
        while (d < 0) d += 2 * M_PI;
        while (d >= 2 * M_PI) d -= 2 * M_PI;
        return d;
    };
    std::size_t i0 = 0;
    double best = kInf;
    for (std::size_t i = 0; i < m; ++i) {
        const double d = lift(ang(in_pos[i]));
        if (d < best) {
            best = d;
            i0 = i;
        }
    }
    std::vector<double> ia(m + 1), oa(5);
    for (std::size_t i = 0; i <= m; ++i) {
        if (i == m) {
            ia[i] = ia[0] + 2 * M_PI;
            break;
        }
        ia[i] = lift(ang(in_pos[(i0 + i) % m]));
        if (i > 0 && ia[i] < ia[i - 1]) ia[i] += 2 * M_PI;
    }
    for (std::size_t i = 0; i < 5; ++i)
        oa[i] = i == 4 ? oa[0] + 2 * M_PI : lift(ang(out_pos[i]));

    std::size_t ci = 0, co = 0;  // advances on each loop
    const auto inner = [&](std::size_t k) { return in_ids[(i0 + k) % m]; };
    while (ci < m || co < 4) {
        const bool take_inner = co >= 4 || (ci < m && ia[ci + 1] <= oa[co + 1]);
        if (take_inner) {
            mb.add_cell(inner(ci + 1), inner(ci), out_ids[co % 4]);
            ++ci;
        } else {
            mb.add_cell(out_ids[co % 4], out_ids[(co + 1) % 4], inner(ci % m));
            ++co;
        }
    }
}

// Similarity placing a generator's bounding box inside [clo, chi] with linear
// inset factor s: position p maps to t + eps * p.
struct Placement {
    double eps;
    Vec2 t;
};

Placement place_in_cell(const PAMap& gen, const Vec2& clo, const Vec2& chi, double s) {
    const auto gb = mesh_bbox(gen.mesh);
    const Vec2 gsize = gb[1] - gb[0];
    const Vec2 csize = chi - clo;
    const double eps = s * csize.x() / gsize.x();
    if (std::abs(eps * gsize.y() - s * csize.y()) > 1e-9 * csize.y())
        throw input_error("place_in_cell: generator and cell aspect ratios disagree");
    return {eps, clo + 0.5 * (1.0 - s) * csize - eps * gb[0]};
}

// Adds a rescaled copy of `gen` to the builder: positions pl.t + pl.eps * p,
// images shift + pl.eps * image. Returns the copy's CCW boundary chain
// (builder ids and positions).
struct PlantedChain {
    std::vector<int> ids;
    std::vector<Vec2> pos;
};

PlantedChain plant_copy(MeshBuilder& mb, const PAMap& gen, const Placement& pl,
                        const Vec2& shift) {
    std::vector<int> remap(gen.mesh.vertices.size());
    for (std::size_t v = 0; v < gen.mesh.vertices.size(); ++v)
        remap[v] =
            mb.add_vertex(pl.t + pl.eps * gen.mesh.vertices[v], shift + pl.eps * gen.images[v]);
    for (const auto& c : gen.mesh.cells)
        mb.add_cell(remap[static_cast<std::size_t>(c[0])], remap[static_cast<std::size_t>(c[1])],
                    remap[static_cast<std::size_t>(c[2])]);

    PlantedChain chain;
    for (const int v : gen.mesh.boundary_loops.front()) {
        chain.ids.push_back(remap[static_cast<std::size_t>(v)]);
        chain.pos.push_back(pl.t + pl.eps * gen.mesh.vertices[static_cast<std::size_t>(v)]);
    }
    return chain;
}

void require_affine_trace(const PAMap& map, const Mat2& a, const char* who) {
    const auto& loop = map.mesh.boundary_loops.front();
    for (const int v : loop) {
        const Vec2 p = map.mesh.vertices[static_cast<std::size_t>(v)];
        const Vec2 want = a * p;
        if ((map.images[static_cast<std::size_t>(v)] - want).norm() > 1e-9 * (1.0 + want.norm()))
            throw input_error(std::string(who) + ": boundary trace is not the given affine map");
    }
}
}  // namespace

PAMap convex_combine(const PAMap& y1, const PAMap& y2, const Mat2& a, double lambda, int depth) {
    if (!(lambda > 0) || lambda > 1)
        throw input_error("convex_combine: lambda must lie in (0, 1]");
    if (depth < 1 || depth > 40) throw input_error("convex_combine: depth must lie in [1, 40]");
    const auto b1 = mesh_bbox(y1.mesh), b2 = mesh_bbox(y2.mesh);
    const double scale = (b1[1] - b1[0]).norm();
    if ((b1[0] - b2[0]).norm() > 1e-12 * scale || (b1[1] - b2[1]).norm() > 1e-12 * scale)
        throw input_error("convex_combine: inputs live on different rectangles");
    const Vec2 size = b1[1] - b1[0];
    for (const PAMap* m : {&y1, &y2}) {
        if (std::abs(m->mesh.total_area() - size.x() * size.y()) > 1e-9 * size.x() * size.y())
            throw input_error("convex_combine: input mesh does not fill its bounding rectangle");
        if (!certify_injective(*m).injective)
            throw input_error("convex_combine: input map is not certified injective");
    }
    require_affine_trace(y1, a, "convex_combine");
    require_affine_trace(y2, a, "convex_combine");

    constexpr int n = 8;
    const int k1 = static_cast<int>(std::lround(lambda * n * n));
    const double s = std::sqrt(1.0 - std::pow(2.0, -depth));

    MeshBuilder mb(1e-9 * std::min(size.x(), size.y()) / n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const Vec2 clo = b1[0] + Vec2(i * size.x() / n, j * size.y() / n);
            const Vec2 chi = b1[0] + Vec2((i + 1) * size.x() / n, (j + 1) * size.y() / n);
            const PAMap& carrier = (j * n + i) < k1 ? y1 : y2;

            std::array<int, 4> corner_ids{};
            const std::array<Vec2, 4> corner_pos = {Vec2(clo.x(), clo.y()), Vec2(chi.x(), clo.y()),
                                                    Vec2(chi.x(), chi.y()), Vec2(clo.x(), chi.y())};
            for (int k = 0; k < 4; ++k)
                corner_ids[static_cast<std::size_t>(k)] =
                    mb.add_vertex(corner_pos[static_cast<std::size_t>(k)],
                                  a * corner_pos[static_cast<std::size_t>(k)]);

            // The carrier traces a * p on its own boundary, so shifting images
            // by a * t makes the planted trace a * x at every copy boundary
            // node, matching the affine annulus around it.
            const Placement pl = place_in_cell(carrier, clo, chi, s);
            const auto chain = plant_copy(mb, carrier, pl, a * pl.t);
            annulus_triangulate(mb, chain.ids, chain.pos, corner_ids, corner_pos,
                                0.5 * (clo + chi));
        }

    PAMap out = mb.take();
    const Certificate cert = certify_injective(out);
    if (!cert.injective)
        throw numeric_error(
            "convex_combine: combined map failed the injectivity certificate (bug signal: "
            "inputs were certified)");
    return out;
}

PAMap synthesize_sequence(const YoungMeasure& m, const PAMap& u, int k) {
    if (k < 1) throw input_error("synthesize_sequence: member index must be >= 1");
    check_measure(m);
    const auto bb = mesh_bbox(u.mesh);
    const Vec2 size = bb[1] - bb[0];
    double region_area_sum = 0;
    for (int r = 0; r < m.regions.size(); ++r) region_area_sum += m.regions.box_area(r);
    if (std::abs(region_area_sum - size.x() * size.y()) > 1e-9 * size.x() * size.y())
        throw input_error("synthesize_sequence: regions do not tile the domain rectangle");

    const std::vector<Mat2> moments = first_moment(m);
    MapEvaluator ev(u);
    const Vec2 sub0 = (m.regions.boxes.front()[1] - m.regions.boxes.front()[0]) / k;
    MeshBuilder mb(1e-9 * std::min(sub0.x(), sub0.y()));
    const double s = std::sqrt(1.0 - std::pow(2.0, -6));

    for (int r = 0; r < m.regions.size(); ++r) {
        const auto& box = m.regions.boxes[static_cast<std::size_t>(r)];
        const Vec2 bsize = box[1] - box[0];
        const auto& atoms = m.atoms[static_cast<std::size_t>(r)];

        // Region gradient and the homogeneous generator realizing the atoms.
        Mat2 grad;
        PAMap gen;
        bool affine_region = true;
        if (atoms.empty() || m.mass[static_cast<std::size_t>(r)] <= 0 || atoms.size() == 1) {
            std::array<double, 3> bary{};
            const int c = MapEvaluator(u).locate(0.5 * (box[0] + box[1]), bary);
            grad = atoms.size() == 1 ? atoms[0].a
                                     : u.gradient(c >= 0 ? c : 0);
        } else if (atoms.size() == 2) {
            affine_region = false;
            grad = moments[static_cast<std::size_t>(r)];
            Vec2 dir, normal;
            double amp = 0;
            if (!rank_one_connection(atoms[0].a, atoms[1].a, dir, normal, amp))
                throw numeric_error("synthesize_sequence: region " + std::to_string(r) +
                                    " atoms are not rank-one connected");
            int axis;
            if (std::abs(normal.x()) > 0.999)
                axis = 0;
            else if (std::abs(normal.y()) > 0.999)
                axis = 1;
            else
                throw numeric_error("synthesize_sequence: region " + std::to_string(r) +
                                    " lamination normal is not axis-aligned");
            LaminateSpec spec;
            spec.a = atoms[0].a;
            spec.b = atoms[1].a;
            spec.lambda = atoms[0].w;
            spec.axis = axis;
            // Oscillation scale shrinks relative to the copy as the member
            // index grows: transition layers then carry O(1/k) of the mass and
            // the member histograms converge to the measure.
            spec.period = (axis == 0 ? bsize.x() : bsize.y()) / (4.0 * k * k);
            const double target = 2.0 * std::min(bsize.x(), bsize.y()) / k / k;
            const Vec2 glo = Vec2::Zero(), ghi = bsize / k;
            for (int halving = 0;; ++halving) {
                gen = make_laminate(glo, ghi, spec);
                const PAMap ref = affine_map(gen.mesh, grad);
                if (sup_distance(gen, ref) <= target) break;
                if (halving >= 24)
                    throw numeric_error(
                        "synthesize_sequence: generator oscillation cannot meet the distance "
                        "budget; request a larger member index");
                spec.period /= 2;
            }
        } else {
            throw numeric_error("synthesize_sequence: region " + std::to_string(r) +
                                " carries more than two atoms; no homogeneous generator");
        }

        for (int jj = 0; jj < k; ++jj)
            for (int ii = 0; ii < k; ++ii) {
                const Vec2 clo = box[0] + Vec2(ii * bsize.x() / k, jj * bsize.y() / k);
                const Vec2 chi = box[0] + Vec2((ii + 1) * bsize.x() / k, (jj + 1) * bsize.y() / k);
                const std::array<Vec2, 4> cp = {Vec2(clo.x(), clo.y()), Vec2(chi.x(), clo.y()),
                                                Vec2(chi.x(), chi.y()), Vec2(clo.x(), chi.y())};
                const Vec2 u00 = ev.forward(cp[0]);
                std::array<int, 4> cid{};
                for (int q = 0; q < 4; ++q) {
                    const Vec2 im = ev.forward(cp[static_cast<std::size_t>(q)]);
                    if ((im - (u00 + grad * (cp[static_cast<std::size_t>(q)] - cp[0]))).norm() >
                        1e-7 * (1.0 + im.norm()))
                        throw numeric_error(
                            "synthesize_sequence: underlying map is not affine with the region "
                            "mean across a copy window");
                    cid[static_cast<std::size_t>(q)] =
                        mb.add_vertex(cp[static_cast<std::size_t>(q)], im);
                }
                if (affine_region) {
                    mb.add_cell(cid[0], cid[1], cid[2]);
                    mb.add_cell(cid[0], cid[2], cid[3]);
                    continue;
                }
                const Placement pl = place_in_cell(gen, clo, chi, s);
                const Vec2 shift = u00 + grad * (pl.t - cp[0]);
                const auto chain = plant_copy(mb, gen, pl, shift);
                annulus_triangulate(mb, chain.ids, chain.pos, cid, cp, 0.5 * (clo + chi));
            }
    }

    PAMap out = mb.take();
    const Certificate cert = certify_injective(out);
    if (!cert.injective)
        throw numeric_error("synthesize_sequence: assembled member failed the injectivity "
                            "certificate");
    return out;
}

}  // namespace bilip
