#include "homog/mesh.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

namespace homog {

namespace {

int checked_side(int r, int k) {
    if (r < 1) {
        throw std::invalid_argument("mesh: r must be positive, got " + std::to_string(r));
    }
    if (k < 0) {
        throw std::invalid_argument("mesh: refinement level must be non-negative");
    }
    // Vertex indices are int32; triangle count 2*n_cells^2 must fit as well.
    constexpr std::int64_t limit = std::numeric_limits<std::int32_t>::max();
    if (k > 30) {
        throw std::overflow_error("mesh: refinement level too large");
    }
    const std::int64_t cells = static_cast<std::int64_t>(r) << k;
    const std::int64_t side = cells + 1;
    if (side > limit || side * side > limit || 2 * cells * cells > limit) {
        throw std::overflow_error("mesh: r*2^k = " + std::to_string(cells) +
                                  " exceeds the index range");
    }
    return static_cast<int>(side);
}

}  // namespace

StructuredMesh::StructuredMesh(int r, int k)
    : r_(r), k_(k), h_(0.0), n_side_(checked_side(r, k)) {
    h_ = std::ldexp(1.0, -k);
    const int n = n_side_;
    const int nc = n - 1;

    vertices_.reserve(static_cast<std::size_t>(n) * n);
    boundary_.reserve(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            vertices_.push_back({i * h_, j * h_});
            boundary_.push_back(i == 0 || j == 0 || i == nc || j == nc);
        }
    }

    triangles_.reserve(2 * static_cast<std::size_t>(nc) * nc);
    for (int j = 0; j < nc; ++j) {
        for (int i = 0; i < nc; ++i) {
            const std::int32_t v00 = vertex_index(i, j);
            const std::int32_t v10 = vertex_index(i + 1, j);
            const std::int32_t v01 = vertex_index(i, j + 1);
            const std::int32_t v11 = vertex_index(i + 1, j + 1);
            triangles_.push_back({v00, v10, v11});
            triangles_.push_back({v00, v11, v01});
        }
    }
}

std::array<Point2, 3> StructuredMesh::triangle_points(std::size_t t) const {
    const Triangle& tri = triangles_.at(t);
    return {vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]};
}

Point2 StructuredMesh::centroid(std::size_t t) const {
    const auto p = triangle_points(t);
    return {(p[0].x + p[1].x + p[2].x) / 3.0, (p[0].y + p[1].y + p[2].y) / 3.0};
}

StructuredMesh build_mesh(int r, int k) { return StructuredMesh(r, k); }

Cell cell_of_triangle(const StructuredMesh& mesh, std::size_t t) {
    if (t >= mesh.num_triangles()) {
        throw std::out_of_range("cell_of_triangle: triangle index out of range");
    }
    // Integer arithmetic on the owning fine square; identical to flooring the
    // centroid since no triangle crosses an integer gridline.
    const int nc = mesh.cells_per_side();
    const int square = static_cast<int>(t / 2);
    const int i = square % nc;
    const int j = square / nc;
    return {i >> mesh.k(), j >> mesh.k()};
}

DofMap interior_dof_map(const StructuredMesh& mesh) {
    DofMap map;
    const auto& boundary = mesh.boundary_mask();
    map.vertex_to_dof.assign(mesh.num_vertices(), -1);
    const int inner = mesh.n_side() > 2 ? mesh.n_side() - 2 : 0;
    map.dof_to_vertex.reserve(static_cast<std::size_t>(inner) * inner);
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
        if (!boundary[v]) {
            map.vertex_to_dof[v] = static_cast<std::int32_t>(map.dof_to_vertex.size());
            map.dof_to_vertex.push_back(static_cast<std::int32_t>(v));
        }
    }
    return map;
}

DofMap periodic_dof_map(const StructuredMesh& mesh, bool pin_origin) {
    DofMap map;
    const int n = mesh.n_side();
    const int nc = n - 1;
    map.vertex_to_dof.assign(mesh.num_vertices(), -1);
    for (int j = 0; j < nc; ++j) {
        for (int i = 0; i < nc; ++i) {
            if (pin_origin && i == 0 && j == 0) {
                continue;
            }
            const std::int32_t v = mesh.vertex_index(i, j);
            map.vertex_to_dof[v] = static_cast<std::int32_t>(map.dof_to_vertex.size());
            map.dof_to_vertex.push_back(v);
        }
    }
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            if (i < nc && j < nc) {
                continue;
            }
            map.vertex_to_dof[mesh.vertex_index(i, j)] =
                map.vertex_to_dof[mesh.vertex_index(i % nc, j % nc)];
        }
    }
    return map;
}

void write_mesh(std::ostream& out, const StructuredMesh& mesh) {
    out.precision(17);
    out << "vertices " << mesh.num_vertices() << '\n';
    const auto& boundary = mesh.boundary_mask();
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
        const Point2& p = mesh.vertices()[v];
        out << p.x << ' ' << p.y << ' ' << (boundary[v] ? 1 : 0) << '\n';
    }
    out << "triangles " << mesh.num_triangles() << '\n';
    for (const Triangle& t : mesh.triangles()) {
        out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    }
}

}  // namespace homog
