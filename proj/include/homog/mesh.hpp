#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace homog {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

struct Cell {
    int x = 0;
    int y = 0;

    friend bool operator==(const Cell&, const Cell&) = default;
};

using Triangle = std::array<std::int32_t, 3>;

/// Uniform triangulation of the square (0,r)^2 at mesh size h = 2^-k.
///
/// Vertex (i,j) sits at (i*h, j*h) with lexicographic index j*n_side + i.
/// Every fine square is cut along its lower-left to upper-right diagonal, so
/// fine square (i,j) owns triangles 2*(j*n_cells + i) (below the diagonal)
/// and 2*(j*n_cells + i) + 1 (above it), both counterclockwise.
class StructuredMesh {
public:
    StructuredMesh(int r, int k);

    int r() const noexcept { return r_; }
    int k() const noexcept { return k_; }
    double h() const noexcept { return h_; }
    /// Fine squares per side, r * 2^k.
    int cells_per_side() const noexcept { return n_side_ - 1; }
    int n_side() const noexcept { return n_side_; }

    std::size_t num_vertices() const noexcept { return vertices_.size(); }
    std::size_t num_triangles() const noexcept { return triangles_.size(); }

    const std::vector<Point2>& vertices() const noexcept { return vertices_; }
    const std::vector<Triangle>& triangles() const noexcept { return triangles_; }
    const std::vector<bool>& boundary_mask() const noexcept { return boundary_; }

    std::int32_t vertex_index(int i, int j) const noexcept { return j * n_side_ + i; }
    std::array<Point2, 3> triangle_points(std::size_t t) const;
    Point2 centroid(std::size_t t) const;

private:
    int r_;
    int k_;
    double h_;
    int n_side_;
    std::vector<Point2> vertices_;
    std::vector<Triangle> triangles_;
    std::vector<bool> boundary_;
};

StructuredMesh build_mesh(int r, int k);

/// Unit coefficient cell z with the triangle's interior inside z + [0,1)^2.
Cell cell_of_triangle(const StructuredMesh& mesh, std::size_t t);

/// Numbering of the unknowns of a discrete space on the mesh.
///
/// vertex_to_dof[v] is -1 for vertices removed from the system (Dirichlet
/// vertices). Several vertices may share a dof (periodic identification);
/// dof_to_vertex then holds one representative per dof.
struct DofMap {
    std::vector<std::int32_t> vertex_to_dof;
    std::vector<std::int32_t> dof_to_vertex;

    std::size_t num_dofs() const noexcept { return dof_to_vertex.size(); }
};

/// Interior vertices in lexicographic order; boundary vertices eliminated.
DofMap interior_dof_map(const StructuredMesh& mesh);

/// Periodic identification of opposite sides. Vertex (0,0) is pinned (its
/// dof and all its periodic images eliminated) to fix the additive constant.
DofMap periodic_dof_map(const StructuredMesh& mesh, bool pin_origin = true);

/// Plain-text vertex and triangle listing for inspection.
void write_mesh(std::ostream& out, const StructuredMesh& mesh);

}  // namespace homog
