#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <utility>

#include "doctest.h"
#include "homog/mesh.hpp"

using namespace homog;

namespace {

double signed_area(const StructuredMesh& mesh, std::size_t t) {
    const auto p = mesh.triangle_points(t);
    return 0.5 * ((p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y));
}

}  // namespace

TEST_CASE("single cell mesh") {
    const StructuredMesh mesh = build_mesh(1, 0);
    CHECK(mesh.num_vertices() == 4);
    CHECK(mesh.num_triangles() == 2);
    CHECK(std::count(mesh.boundary_mask().begin(), mesh.boundary_mask().end(), true) == 4);
    CHECK(cell_of_triangle(mesh, 0) == Cell{0, 0});
    CHECK(cell_of_triangle(mesh, 1) == Cell{0, 0});
}

TEST_CASE("vertex and triangle counts") {
    const StructuredMesh small = build_mesh(2, 1);
    CHECK(small.num_vertices() == 25);
    CHECK(small.num_triangles() == 32);
    CHECK(small.h() == 0.5);

    const StructuredMesh large = build_mesh(100, 3);
    CHECK(large.n_side() == 801);
    CHECK(large.num_vertices() == 641601);
    CHECK(large.num_triangles() == 1280000);
}

TEST_CASE("rejects invalid sizes") {
    CHECK_THROWS_AS(build_mesh(0, 2), std::invalid_argument);
    CHECK_THROWS_AS(build_mesh(1, -1), std::invalid_argument);
    CHECK_THROWS_AS(build_mesh(100000, 10), std::overflow_error);
    CHECK_THROWS_AS(build_mesh(1, 40), std::overflow_error);
}

TEST_CASE("triangles are counterclockwise with area h^2/2") {
    for (auto [r, k] : {std::pair{1, 0}, std::pair{3, 2}, std::pair{5, 1}}) {
        const StructuredMesh mesh = build_mesh(r, k);
        const double expected = 0.5 * mesh.h() * mesh.h();
        double total = 0.0;
        for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
            CHECK(signed_area(mesh, t) == expected);
            total += signed_area(mesh, t);
        }
        CHECK(total == doctest::Approx(r * r).epsilon(1e-15));
        CHECK(mesh.num_triangles() == 2u * (r << k) * (r << k));
    }
}

TEST_CASE("boundary mask marks the perimeter") {
    const StructuredMesh mesh = build_mesh(3, 2);
    const int n = mesh.n_side();
    CHECK(std::count(mesh.boundary_mask().begin(), mesh.boundary_mask().end(), true) ==
          4 * (n - 1));
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
        const Point2 p = mesh.vertices()[v];
        const bool on_edge = p.x == 0.0 || p.y == 0.0 || p.x == 3.0 || p.y == 3.0;
        CHECK(mesh.boundary_mask()[v] == on_edge);
    }
}

TEST_CASE("cell_of_triangle floors the centroid") {
    const StructuredMesh mesh = build_mesh(2, 1);
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const Point2 c = mesh.centroid(t);
        const Cell z = cell_of_triangle(mesh, t);
        CHECK(z.x == static_cast<int>(std::floor(c.x)));
        CHECK(z.y == static_cast<int>(std::floor(c.y)));
    }
    // The triangle containing (1.25, 0.4) is in cell (1, 0).
    bool found = false;
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto p = mesh.triangle_points(t);
        const double xmin = std::min({p[0].x, p[1].x, p[2].x});
        const double ymin = std::min({p[0].y, p[1].y, p[2].y});
        if (xmin == 1.0 && ymin == 0.0 && (t % 2) == 1) {
            // Upper triangle of fine square [1,1.5]x[0,0.5] contains (1.25,0.4).
            CHECK(cell_of_triangle(mesh, t) == Cell{1, 0});
            found = true;
        }
    }
    CHECK(found);
    CHECK_THROWS_AS(cell_of_triangle(mesh, mesh.num_triangles()), std::out_of_range);
}

TEST_CASE("every triangle lies inside one unit cell") {
    const StructuredMesh mesh = build_mesh(4, 3);
    int in_cell_32 = 0;
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const Cell z = cell_of_triangle(mesh, t);
        for (const Point2& p : mesh.triangle_points(t)) {
            CHECK(p.x >= z.x);
            CHECK(p.x <= z.x + 1);
            CHECK(p.y >= z.y);
            CHECK(p.y <= z.y + 1);
        }
        in_cell_32 += z == Cell{3, 2};
    }
    CHECK(in_cell_32 == 2 * 64);
}

TEST_CASE("edges are shared by two triangles inside and one on the boundary") {
    const StructuredMesh mesh = build_mesh(3, 1);
    std::map<std::pair<int, int>, int> edges;
    for (const Triangle& t : mesh.triangles()) {
        for (int a = 0; a < 3; ++a) {
            const int u = t[a];
            const int v = t[(a + 1) % 3];
            ++edges[{std::min(u, v), std::max(u, v)}];
        }
    }
    for (const auto& [edge, count] : edges) {
        const Point2 a = mesh.vertices()[edge.first];
        const Point2 b = mesh.vertices()[edge.second];
        const bool on_boundary = (a.x == b.x && (a.x == 0.0 || a.x == 3.0)) ||
                                 (a.y == b.y && (a.y == 0.0 || a.y == 3.0));
        CHECK(count == (on_boundary ? 1 : 2));
    }
}

TEST_CASE("build_mesh is deterministic") {
    const StructuredMesh a = build_mesh(5, 2);
    const StructuredMesh b = build_mesh(5, 2);
    CHECK(a.triangles() == b.triangles());
    CHECK(std::equal(a.vertices().begin(), a.vertices().end(), b.vertices().begin(),
                     [](Point2 p, Point2 q) { return p.x == q.x && p.y == q.y; }));
}

TEST_CASE("interior dof map") {
    CHECK(interior_dof_map(build_mesh(1, 0)).num_dofs() == 0);

    const StructuredMesh m2 = build_mesh(2, 0);
    const DofMap center = interior_dof_map(m2);
    REQUIRE(center.num_dofs() == 1);
    CHECK(center.dof_to_vertex[0] == m2.vertex_index(1, 1));

    const StructuredMesh mesh = build_mesh(2, 1);
    const DofMap map = interior_dof_map(mesh);
    CHECK(map.num_dofs() == 9);
    for (std::size_t d = 0; d < map.num_dofs(); ++d) {
        const auto v = map.dof_to_vertex[d];
        CHECK_FALSE(mesh.boundary_mask()[v]);
        CHECK(map.vertex_to_dof[v] == static_cast<std::int32_t>(d));
    }
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
        CHECK((map.vertex_to_dof[v] < 0) == mesh.boundary_mask()[v]);
    }
}

TEST_CASE("periodic dof map identifies opposite sides") {
    const StructuredMesh mesh = build_mesh(2, 1);
    const DofMap map = periodic_dof_map(mesh);
    const int nc = mesh.cells_per_side();
    CHECK(map.num_dofs() == static_cast<std::size_t>(nc * nc - 1));
    for (int j = 0; j <= nc; ++j) {
        CHECK(map.vertex_to_dof[mesh.vertex_index(nc, j)] ==
              map.vertex_to_dof[mesh.vertex_index(0, j)]);
        CHECK(map.vertex_to_dof[mesh.vertex_index(j, nc)] ==
              map.vertex_to_dof[mesh.vertex_index(j, 0)]);
    }
    CHECK(map.vertex_to_dof[mesh.vertex_index(nc, nc)] == -1);
    CHECK(periodic_dof_map(mesh, false).num_dofs() == static_cast<std::size_t>(nc * nc));
}

TEST_CASE("debug listing") {
    std::ostringstream out;
    write_mesh(out, build_mesh(1, 0));
    CHECK(out.str() ==
          "vertices 4\n0 0 1\n1 0 1\n0 1 1\n1 1 1\ntriangles 2\n0 1 3\n0 3 2\n");
}
