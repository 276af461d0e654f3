#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "homog/coeff.hpp"
#include "homog/mesh.hpp"
#include "homog/sparse.hpp"

namespace homog {

using ElementMatrix = std::array<std::array<double, 3>, 3>;
using TrianglePoints = std::array<Point2, 3>;

/// Unsigned triangle area; throws std::invalid_argument for a degenerate
/// triangle.
double triangle_area(const TrianglePoints& p);

/// Constant gradients of the three barycentric (P1 nodal) basis functions.
std::array<Point2, 3> p1_gradients(const TrianglePoints& p);

/// K[i][j] = area * grad(psi_i) . C grad(psi_j).
ElementMatrix element_stiffness(const TrianglePoints& p, const Mat2& coefficient);

/// Consistent P1 mass matrix, (area/12) [[2,1,1],[1,2,1],[1,1,2]].
ElementMatrix element_mass(const TrianglePoints& p);

enum class MassKind { consistent, lumped };

struct AssemblyOptions {
    MassKind mass = MassKind::consistent;
    /// Element visiting order; empty means natural order.
    std::vector<std::size_t> element_order;
};

/// P1 system on the interior dofs of the mesh.
///
/// a_het, a_bar, a_id and mass share one sparsity pattern.
struct FemSystem {
    SparseSpd a_het;
    SparseSpd a_bar;
    SparseSpd a_id;
    SparseSpd mass;
    std::vector<double> load;
    DofMap dof_map;
    HomogenizedMatrix abar;

    std::size_t num_dofs() const noexcept { return load.size(); }
};

/// Assembles the heterogeneous, homogenized and identity stiffness matrices,
/// the mass matrix and the load vector for the constant source f.
FemSystem assemble(const StructuredMesh& mesh, const CheckerboardField& field,
                   const HomogenizedMatrix& abar, double f,
                   const AssemblyOptions& options = {});

/// Sparsity pattern of P1 couplings between the dofs of `dofs`.
std::shared_ptr<const CsrPattern> build_pattern(const StructuredMesh& mesh, const DofMap& dofs);

/// Stiffness with a scalar coefficient per triangle (times the identity).
SparseSpd assemble_stiffness(const StructuredMesh& mesh, const DofMap& dofs,
                             const std::shared_ptr<const CsrPattern>& pattern,
                             std::span<const double> triangle_coeff);

/// Stiffness with one constant matrix coefficient.
SparseSpd assemble_stiffness(const StructuredMesh& mesh, const DofMap& dofs,
                             const std::shared_ptr<const CsrPattern>& pattern,
                             const Mat2& coefficient);

SparseSpd assemble_mass(const StructuredMesh& mesh, const DofMap& dofs,
                        const std::shared_ptr<const CsrPattern>& pattern,
                        MassKind kind = MassKind::consistent);

/// Load vector for a smooth source, integrated with a degree-5 rule.
std::vector<double> assemble_load(const StructuredMesh& mesh, const DofMap& dofs,
                                  const std::function<double(Point2)>& f);

/// sqrt(v^T A_id v).
double h1_seminorm(const FemSystem& system, std::span<const double> v);

/// Full nodal vector (zeros on eliminated vertices) from dof values.
std::vector<double> to_nodal(const DofMap& dofs, std::span<const double> v);

/// ||grad(u) - grad(u_h)||_{L2}, with u_h given on the dofs and grad u exact.
double h1_error(const StructuredMesh& mesh, const DofMap& dofs, std::span<const double> u_h,
                const std::function<Point2(Point2)>& grad_exact);

/// MatrixMarket coordinate listing (1-based "row col value" lines).
void write_coordinate(std::ostream& out, const SparseSpd& a);

}  // namespace homog
