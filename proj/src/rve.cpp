#include <cmath>
#include <stdexcept>
#include <string>

#include "homog/assembly.hpp"
#include "homog/coeff.hpp"

namespace homog {

namespace {

// Residual threshold above which a cell solve is reported as failed.
constexpr double kCellResidualLimit = 1e-8;

}  // namespace

HomogenizedMatrix rve_estimate_abar(const CheckerboardField& field, const RveOptions& options) {
    if (field.r() < 8) {
        throw std::invalid_argument("rve_estimate_abar: block side must be at least 8 cells");
    }
    if (options.refine < 0) {
        throw std::invalid_argument("rve_estimate_abar: negative refinement level");
    }
    const StructuredMesh mesh(field.r(), options.refine);
    const std::vector<double> coeff = triangle_coefficients(mesh, field);
    const DofMap dofs = options.bc == RveBoundary::periodic ? periodic_dof_map(mesh)
                                                            : interior_dof_map(mesh);
    const auto pattern = build_pattern(mesh, dofs);
    const SparseSpd stiffness = assemble_stiffness(mesh, dofs, pattern, coeff);
    const CholeskyFactor factor(stiffness);

    const double volume = static_cast<double>(field.r()) * field.r();
    const std::array<Point2, 2> directions{Point2{1.0, 0.0}, Point2{0.0, 1.0}};
    std::array<Point2, 2> flux{};

    for (int e = 0; e < 2; ++e) {
        const Point2 p = directions[e];
        // Weak form: sum_T a_T (p + grad phi) . grad psi_i = 0 for every dof i.
        std::vector<double> rhs(dofs.num_dofs(), 0.0);
        for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
            const auto pts = mesh.triangle_points(t);
            const auto g = p1_gradients(pts);
            const double w = triangle_area(pts) * coeff[t];
            const Triangle& tri = mesh.triangles()[t];
            for (int a = 0; a < 3; ++a) {
                const std::int32_t d = dofs.vertex_to_dof[tri[a]];
                if (d >= 0) {
                    rhs[d] -= w * (p.x * g[a].x + p.y * g[a].y);
                }
            }
        }
        const std::vector<double> phi = factor.solve(rhs);

        const std::vector<double> check = spmv(stiffness, phi);
        double diff = 0.0;
        for (std::size_t i = 0; i < check.size(); ++i) {
            diff += (check[i] - rhs[i]) * (check[i] - rhs[i]);
        }
        const double rhs_norm = norm2(rhs);
        const double residual = rhs_norm > 0.0 ? std::sqrt(diff) / rhs_norm : std::sqrt(diff);
        if (residual > kCellResidualLimit) {
            throw SolveError("rve cell problem: relative residual " + std::to_string(residual),
                             SolveReport{1, residual, false});
        }

        const std::vector<double> nodal = to_nodal(dofs, phi);
        Point2 total{};
        for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
            const auto pts = mesh.triangle_points(t);
            const auto g = p1_gradients(pts);
            const Triangle& tri = mesh.triangles()[t];
            Point2 grad{p.x, p.y};
            for (int a = 0; a < 3; ++a) {
                grad.x += nodal[tri[a]] * g[a].x;
                grad.y += nodal[tri[a]] * g[a].y;
            }
            const double w = triangle_area(pts) * coeff[t];
            total.x += w * grad.x;
            total.y += w * grad.y;
        }
        flux[e] = {total.x / volume, total.y / volume};
    }

    // Column e holds the averaged flux for direction e.
    const Mat2 raw{flux[0].x, flux[1].x, flux[0].y, flux[1].y};
    const double off = 0.5 * (raw.xy + raw.yx);
    return {raw.xx, off, off, raw.yy};
}

}  // namespace homog
