#pragma once

#include "bilip/mesh.hpp"
#include "bilip/pamap.hpp"

#include <unordered_map>
#include <vector>

namespace bilip {

// Incremental construction of a conforming mesh with per-vertex image points.
// Vertices inserted within `merge_tol` of an existing vertex are unified (the
// first inserted position and image win), which lets independently computed
// pieces share nodes without bitwise coordination.
class MeshBuilder {
  public:
    explicit MeshBuilder(double merge_tol);

    // Returns the index of the (possibly pre-existing) vertex at p.
    int add_vertex(const Vec2& p, const Vec2& image);

    // Adds a CCW triangle; cells that collapse under vertex merging are skipped.
    void add_cell(int a, int b, int c);

    // Adds a fan around an interior point over a closed CCW boundary ring.
    void add_fan(const Vec2& center, const Vec2& center_image,
                 const std::vector<int>& ring);

    int num_vertices() const { return static_cast<int>(vertices_.size()); }

    // Read-only views of the pending soup (useful for diagnostics).
    const std::vector<Vec2>& vertices() const { return vertices_; }
    const std::vector<Vec2>& images() const { return images_; }
    const std::vector<std::array<int, 3>>& cells() const { return cells_; }

    // Validates and returns the assembled map (mesh finalized).
    PAMap take();

  private:
    static std::int64_t bucket_key(std::int64_t qx, std::int64_t qy);
    std::int64_t bucket_of(double x, double y) const;

    double tol_;
    double cell_;  // spatial-hash pitch
    std::vector<Vec2> vertices_;
    std::vector<Vec2> images_;
    std::vector<std::array<int, 3>> cells_;
    std::unordered_map<std::int64_t, std::vector<int>> hash_;
};

// Convex polygon clipping of a triangle against an axis-aligned rectangle.
// Vertices within `snap` of a clip line are treated as lying on it. Returns the
// (possibly empty) clipped polygon, counter-clockwise.
std::vector<Vec2> clip_triangle_to_rect(const Vec2& a, const Vec2& b, const Vec2& c,
                                        const Vec2& lo, const Vec2& hi, double snap);

// Parameters t in (0,1) where the open segment a->b crosses edges of the mesh
// (kinks of any piecewise-affine function on that mesh), sorted ascending and
// deduplicated within `tol` (parameter units).
std::vector<double> segment_kink_params(const Mesh2& mesh, const Vec2& a, const Vec2& b,
                                        double tol = 1e-10);

// For each cell of an nx-by-ny grid over [lo, hi], the list of mesh cells whose
// bounding boxes overlap it (overlay acceleration).
std::vector<std::vector<int>> bucket_cells_by_grid(const Mesh2& mesh, const Vec2& lo,
                                                   const Vec2& hi, int nx, int ny);

}  // namespace bilip
