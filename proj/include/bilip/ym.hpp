#pragma once

#include "bilip/density.hpp"
#include "bilip/domain.hpp"
#include "bilip/pamap.hpp"

#include <array>
#include <limits>
#include <vector>

namespace bilip {

// Family of axis-aligned sample boxes. Used as a partition: triangles are
// binned by centroid, so a partition whose boxes tile the sampled domain bins
// every cell exactly once.
struct RegionPartition {
    std::vector<std::array<Vec2, 2>> boxes;  // {lo, hi} per region

    int size() const { return static_cast<int>(boxes.size()); }
    int index_of(const Vec2& p) const;  // first box containing p (closed), -1 if none
    double box_area(int k) const;
};

RegionPartition single_region(const Vec2& lo, const Vec2& hi);
// nx-by-ny uniform boxes over [lo, hi], row-major.
RegionPartition uniform_partition(const Vec2& lo, const Vec2& hi, int nx, int ny);

struct WeightedAtom {
    Mat2 a = Mat2::Zero();
    double w = 0;
};

// Finite atomic gradient distribution per region. `mass` is the area each
// region's histogram was accumulated over; weights sum to 1 in every region
// with positive mass. `support_rho` is the distortion class the atoms are
// declared to lie in (+inf when untagged / degenerate atoms present).
struct YoungMeasure {
    RegionPartition regions;
    std::vector<std::vector<WeightedAtom>> atoms;
    std::vector<double> mass;
    double support_rho = std::numeric_limits<double>::infinity();
};

// Builds a measure from explicit atoms; mass defaults to the box areas.
// Validates shape and weight sums; computes support_rho from the atoms.
YoungMeasure make_measure(RegionPartition regions, std::vector<std::vector<WeightedAtom>> atoms,
                          std::vector<double> mass = {});

// Weights sum to 1 (1e-12) in every region with positive mass; every atom lies
// in the declared distortion class. Throws input_error naming the violation.
void check_measure(const YoungMeasure& m);

// Per-region area-weighted histogram of the cell gradients of the last member
// of seq (tail_average: equal-weight average over all members). Cells are
// binned by centroid; atoms within 1e-8 (max-entry metric) are merged onto the
// first representative. Members must agree in bounding box and total area, and
// every cell centroid must fall in some region; otherwise input_error.
YoungMeasure empirical_measure(const std::vector<PAMap>& seq, const RegionPartition& regions,
                               bool tail_average = false);

// Mean matrix per region.
std::vector<Mat2> first_moment(const YoungMeasure& m);

// Pairing sum(w * v(A)) per region; +inf propagates from any charged atom.
std::vector<double> pair_with_test(const YoungMeasure& m, const Density& v);

// Mass-weighted union of all regions' atoms over the single bounding box:
// pairing with every density and the first moment are conserved exactly
// (finite sums; only bitwise-equal atoms are merged).
YoungMeasure homogenize(const YoungMeasure& m);

struct LocalizedMaps {
    std::vector<PAMap> maps;
    bool exact = false;  // exact submesh extraction vs evaluator resampling
};

// Blow-up maps x -> j * u(a + x/j) on the original bounding box. Gradients are
// unchanged, so injectivity and the bi-Lipschitz constant are preserved. When
// the window a + bbox/j is a union of whole mesh cells the submesh is extracted
// exactly; otherwise the maps are resampled on a structured mesh at matched
// resolution and flagged approximate. Throws input_error when the window is
// not contained in the domain.
LocalizedMaps localize(const std::vector<PAMap>& seq, const Vec2& a, int j);

struct VitaliCopy {
    Vec2 a = Vec2::Zero();  // copy = a + eps * shape
    double eps = 0;
};

struct VitaliCover {
    std::vector<VitaliCopy> copies;
    double covered_fraction = 0;  // of the target box area
};

// Greedy packing of disjoint scaled copies of `shape` (rectilinear, possibly
// non-convex) into the target box until the covered fraction reaches `fill`:
// largest free box first, one inset copy per box, then recursion into the
// guillotine remainder and into the rectangles of bbox(shape) minus shape.
// Copies are pairwise disjoint with positive margins. Throws numeric_error
// reporting the achieved fraction when the budget runs out first.
VitaliCover vitali_cover(const std::array<Vec2, 2>& target, const Domain2& shape, double fill,
                         int budget = 4096);

// A certified map with affine trace a * x whose gradient distribution is the
// lambda : 1-lambda mixture of the inputs' distributions plus a residual atom
// (a, 1 - s^2) with s^2 = 1 - 2^-depth: the domain rectangle is split into an
// 8x8 grid, round(lambda * 64) cells receive inset rescaled copies of y1, the
// rest copies of y2, and the thin frames between copies and cell boundaries
// stay affine. Inputs must be certified with exact affine trace a * x on a
// common rectangle; lambda in (0, 1].
PAMap convex_combine(const PAMap& y1, const PAMap& y2, const Mat2& a, double lambda, int depth);

// The k-th member of a sequence generating `m` with underlying map `u`:
// per region, k x k sub-cells each carrying an inset copy of a homogeneous
// generator (affine for one atom, a laminate for two rank-one-connected atoms
// with axis-aligned normal) scaled so that |u_k - u| <= 2 eps / k per copy.
// Requires the regions to tile the (rectangular) domain of u and u to be
// affine across every copy with gradient equal to the region's first moment.
// The result is certified and equals u on all copy and cell boundaries.
PAMap synthesize_sequence(const YoungMeasure& m, const PAMap& u, int k);

}  // namespace bilip
