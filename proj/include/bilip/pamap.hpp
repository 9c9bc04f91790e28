#pragma once

#include "bilip/common.hpp"
#include "bilip/matgeom.hpp"
#include "bilip/mesh.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace bilip {

// Piecewise-affine map: nodal images over a conforming triangle mesh.
struct PAMap {
    Mesh2 mesh;
    std::vector<Vec2> images;

    PAMap() = default;
    PAMap(Mesh2 m, std::vector<Vec2> im);

    // Gradient (2x2 deformation matrix) of cell c.
    Mat2 gradient(int c) const;
    std::vector<Mat2> gradients() const;

    // Image of a vertex / barycentric image of a point in cell c.
    Vec2 image_of_cell_point(int c, const std::array<double, 3>& bary) const;

    std::vector<Vec2> boundary_image_loop(std::size_t loop) const;
};

// Stateful evaluator: forward and inverse evaluation with cell walking.
// Inverse evaluation walks the image triangulation (valid while the map is
// injective and orientation-preserving).
class MapEvaluator {
  public:
    explicit MapEvaluator(const PAMap& map);

    Vec2 operator()(const Vec2& x) const { return forward(x); }
    Vec2 forward(const Vec2& x) const;   // throws input_error outside the domain
    Vec2 inverse(const Vec2& y) const;   // throws input_error outside the image

    // Cell containing x, or -1.
    int locate(const Vec2& x, std::array<double, 3>& bary) const;

  private:
    const PAMap& map_;
    Locator ref_locator_;
    mutable int inv_hint_ = 0;
    std::vector<std::array<int, 3>> neighbors_;
};

// Smallest L such that max(|F_c|, |F_c^{-1}|) <= L over all cells. This is the
// certified bi-Lipschitz constant of the map on convex domains. Throws
// numeric_error if some cell is degenerate or orientation-reversing.
double bilip_constant(const PAMap& map);

// Max over sampled point pairs of max(|u(x)-u(y)|/|x-y|, |x-y|/|u(x)-u(y)|).
// A lower bound for the true constant, used as a cross-check.
double sampled_distortion(const PAMap& map, int pairs, Rng& rng);

// True if every cell gradient has positive determinant.
bool is_orientation_preserving(const PAMap& map);

struct Certificate {
    bool injective = false;
    bool orientation_preserving = false;
    bool boundary_simple = false;
    double min_det = 0;
    double bilip = 0;  // certified constant when injective, else 0
};

// Discrete injectivity certificate: positive determinants on all cells plus a
// simple (non-self-intersecting) boundary image; with holes, loop images must
// additionally be pairwise disjoint and correctly nested.
Certificate certify_injective(const PAMap& map, double tol = kGeomTol);

// Rescaled copy living on center + eps * mesh with images eps * u. Gradients and
// the certified bi-Lipschitz constant are unchanged.
PAMap rescale(const PAMap& map, const Vec2& center, double eps);

// Nodal resampling of `map` onto `mesh` (vertex-wise evaluation).
PAMap resample(const PAMap& map, Mesh2 mesh);

// Post-compose with the affine map x -> A x + b (gradients become A * F).
PAMap post_compose_affine(const PAMap& map, const Mat2& a, const Vec2& b);

// Sup distance between two maps over both vertex sets plus `extra` sample points.
double sup_distance(const PAMap& a, const PAMap& b, const std::vector<Vec2>& extra = {});

// Identity map on a mesh.
PAMap identity_map(Mesh2 mesh);

// Affine map x -> A x + b on a mesh.
PAMap affine_map(Mesh2 mesh, const Mat2& a, const Vec2& b = Vec2::Zero());

}  // namespace bilip
