#include "homog/assembly.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace homog {

namespace {

struct QuadPoint {
    std::array<double, 3> bary;
    double weight;
};

// Symmetric 7-point rule, exact for polynomials of degree 5.
const std::array<QuadPoint, 7>& degree5_rule() {
    static const std::array<QuadPoint, 7> rule = [] {
        const double a1 = 0.059715871789770, b1 = 0.470142064105115;
        const double w1 = 0.132394152788506;
        const double a2 = 0.797426985353087, b2 = 0.101286507323456;
        const double w2 = 0.125939180544827;
        return std::array<QuadPoint, 7>{{
            {{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, 0.225},
            {{a1, b1, b1}, w1},
            {{b1, a1, b1}, w1},
            {{b1, b1, a1}, w1},
            {{a2, b2, b2}, w2},
            {{b2, a2, b2}, w2},
            {{b2, b2, a2}, w2},
        }};
    }();
    return rule;
}

Point2 at_bary(const TrianglePoints& p, const std::array<double, 3>& b) {
    return {b[0] * p[0].x + b[1] * p[1].x + b[2] * p[2].x,
            b[0] * p[0].y + b[1] * p[1].y + b[2] * p[2].y};
}

double signed_double_area(const TrianglePoints& p) {
    return (p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y);
}

std::array<std::int32_t, 3> local_dofs(const StructuredMesh& mesh, const DofMap& dofs,
                                       std::size_t t) {
    const Triangle& tri = mesh.triangles()[t];
    return {dofs.vertex_to_dof[tri[0]], dofs.vertex_to_dof[tri[1]], dofs.vertex_to_dof[tri[2]]};
}

// Adds a local matrix into CSR values; eliminated dofs (-1) are skipped.
void scatter(const CsrPattern& pattern, const std::array<std::int32_t, 3>& dof,
             const ElementMatrix& local, std::vector<double>& values) {
    for (int a = 0; a < 3; ++a) {
        if (dof[a] < 0) {
            continue;
        }
        for (int b = 0; b < 3; ++b) {
            if (dof[b] < 0) {
                continue;
            }
            values[pattern.find(dof[a], dof[b])] += local[a][b];
        }
    }
}

std::vector<std::size_t> visiting_order(const StructuredMesh& mesh, const AssemblyOptions& options) {
    if (options.element_order.empty()) {
        std::vector<std::size_t> order(mesh.num_triangles());
        std::iota(order.begin(), order.end(), std::size_t{0});
        return order;
    }
    if (options.element_order.size() != mesh.num_triangles()) {
        throw std::invalid_argument("assemble: element order must list every triangle once");
    }
    return options.element_order;
}

ElementMatrix lumped_mass(const TrianglePoints& p) {
    const double third = triangle_area(p) / 3.0;
    return {{{third, 0.0, 0.0}, {0.0, third, 0.0}, {0.0, 0.0, third}}};
}

}  // namespace

double triangle_area(const TrianglePoints& p) {
    const double d = signed_double_area(p);
    double scale = 0.0;
    for (int i = 0; i < 3; ++i) {
        const Point2& a = p[i];
        const Point2& b = p[(i + 1) % 3];
        scale = std::max(scale, (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y));
    }
    if (!(std::abs(d) > 1e-14 * scale)) {
        throw std::invalid_argument("degenerate triangle");
    }
    return 0.5 * std::abs(d);
}

std::array<Point2, 3> p1_gradients(const TrianglePoints& p) {
    triangle_area(p);
    const double d = signed_double_area(p);
    return {Point2{(p[1].y - p[2].y) / d, (p[2].x - p[1].x) / d},
            Point2{(p[2].y - p[0].y) / d, (p[0].x - p[2].x) / d},
            Point2{(p[0].y - p[1].y) / d, (p[1].x - p[0].x) / d}};
}

ElementMatrix element_stiffness(const TrianglePoints& p, const Mat2& c) {
    const double area = triangle_area(p);
    const auto g = p1_gradients(p);
    ElementMatrix k{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            const double cx = c.xx * g[j].x + c.xy * g[j].y;
            const double cy = c.yx * g[j].x + c.yy * g[j].y;
            k[i][j] = area * (g[i].x * cx + g[i].y * cy);
        }
    }
    return k;
}

ElementMatrix element_mass(const TrianglePoints& p) {
    const double s = triangle_area(p) / 12.0;
    return {{{2 * s, s, s}, {s, 2 * s, s}, {s, s, 2 * s}}};
}

std::shared_ptr<const CsrPattern> build_pattern(const StructuredMesh& mesh, const DofMap& dofs) {
    const auto n = static_cast<std::int32_t>(dofs.num_dofs());
    std::vector<std::vector<std::int32_t>> rows(static_cast<std::size_t>(n));
    for (auto& row : rows) {
        row.reserve(8);
    }
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto dof = local_dofs(mesh, dofs, t);
        for (int a = 0; a < 3; ++a) {
            if (dof[a] < 0) {
                continue;
            }
            auto& row = rows[dof[a]];
            for (int b = 0; b < 3; ++b) {
                if (dof[b] >= 0 && std::find(row.begin(), row.end(), dof[b]) == row.end()) {
                    row.push_back(dof[b]);
                }
            }
        }
    }
    auto pattern = std::make_shared<CsrPattern>();
    pattern->n = n;
    pattern->row_ptr.resize(static_cast<std::size_t>(n) + 1, 0);
    for (std::int32_t i = 0; i < n; ++i) {
        pattern->row_ptr[i + 1] = pattern->row_ptr[i] + static_cast<std::int64_t>(rows[i].size());
    }
    pattern->col_idx.reserve(static_cast<std::size_t>(pattern->row_ptr.back()));
    for (auto& row : rows) {
        std::sort(row.begin(), row.end());
        pattern->col_idx.insert(pattern->col_idx.end(), row.begin(), row.end());
        std::vector<std::int32_t>().swap(row);
    }
    return pattern;
}

SparseSpd assemble_stiffness(const StructuredMesh& mesh, const DofMap& dofs,
                             const std::shared_ptr<const CsrPattern>& pattern,
                             std::span<const double> triangle_coeff) {
    if (triangle_coeff.size() != mesh.num_triangles()) {
        throw std::invalid_argument("assemble_stiffness: one coefficient per triangle required");
    }
    std::vector<double> values(static_cast<std::size_t>(pattern->nnz()), 0.0);
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        scatter(*pattern, local_dofs(mesh, dofs, t),
                element_stiffness(mesh.triangle_points(t), Mat2::identity(triangle_coeff[t])),
                values);
    }
    return {pattern, std::move(values)};
}

SparseSpd assemble_stiffness(const StructuredMesh& mesh, const DofMap& dofs,
                             const std::shared_ptr<const CsrPattern>& pattern,
                             const Mat2& coefficient) {
    std::vector<double> values(static_cast<std::size_t>(pattern->nnz()), 0.0);
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        scatter(*pattern, local_dofs(mesh, dofs, t),
                element_stiffness(mesh.triangle_points(t), coefficient), values);
    }
    return {pattern, std::move(values)};
}

SparseSpd assemble_mass(const StructuredMesh& mesh, const DofMap& dofs,
                        const std::shared_ptr<const CsrPattern>& pattern, MassKind kind) {
    std::vector<double> values(static_cast<std::size_t>(pattern->nnz()), 0.0);
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto p = mesh.triangle_points(t);
        scatter(*pattern, local_dofs(mesh, dofs, t),
                kind == MassKind::consistent ? element_mass(p) : lumped_mass(p), values);
    }
    return {pattern, std::move(values)};
}

FemSystem assemble(const StructuredMesh& mesh, const CheckerboardField& field,
                   const HomogenizedMatrix& abar, double f, const AssemblyOptions& options) {
    const std::vector<double> coeff = triangle_coefficients(mesh, field);
    DofMap dofs = interior_dof_map(mesh);
    const auto pattern = build_pattern(mesh, dofs);
    const auto nnz = static_cast<std::size_t>(pattern->nnz());

    std::vector<double> het(nnz, 0.0);
    std::vector<double> bar(nnz, 0.0);
    std::vector<double> id(nnz, 0.0);
    std::vector<double> mass(nnz, 0.0);
    std::vector<double> load(dofs.num_dofs(), 0.0);

    for (std::size_t t : visiting_order(mesh, options)) {
        const auto p = mesh.triangle_points(t);
        const auto dof = local_dofs(mesh, dofs, t);
        const ElementMatrix k_id = element_stiffness(p, Mat2::identity());
        ElementMatrix k_het = k_id;
        for (auto& row : k_het) {
            for (double& v : row) {
                v *= coeff[t];
            }
        }
        scatter(*pattern, dof, k_id, id);
        scatter(*pattern, dof, k_het, het);
        scatter(*pattern, dof, element_stiffness(p, abar), bar);
        scatter(*pattern, dof,
                options.mass == MassKind::consistent ? element_mass(p) : lumped_mass(p), mass);
        const double share = f * triangle_area(p) / 3.0;
        for (std::int32_t d : dof) {
            if (d >= 0) {
                load[d] += share;
            }
        }
    }

    FemSystem system;
    system.a_het = SparseSpd(pattern, std::move(het));
    system.a_bar = SparseSpd(pattern, std::move(bar));
    system.a_id = SparseSpd(pattern, std::move(id));
    system.mass = SparseSpd(pattern, std::move(mass));
    system.load = std::move(load);
    system.dof_map = std::move(dofs);
    system.abar = abar;
    return system;
}

std::vector<double> assemble_load(const StructuredMesh& mesh, const DofMap& dofs,
                                  const std::function<double(Point2)>& f) {
    std::vector<double> load(dofs.num_dofs(), 0.0);
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto p = mesh.triangle_points(t);
        const auto dof = local_dofs(mesh, dofs, t);
        const double area = triangle_area(p);
        for (const QuadPoint& q : degree5_rule()) {
            const double fq = f(at_bary(p, q.bary)) * q.weight * area;
            for (int a = 0; a < 3; ++a) {
                if (dof[a] >= 0) {
                    load[dof[a]] += fq * q.bary[a];
                }
            }
        }
    }
    return load;
}

double h1_seminorm(const FemSystem& system, std::span<const double> v) {
    if (v.size() != system.num_dofs()) {
        throw std::invalid_argument("h1_seminorm: vector does not match the system size");
    }
    const std::vector<double> av = spmv(system.a_id, v);
    return std::sqrt(std::max(0.0, dot(v, av)));
}

std::vector<double> to_nodal(const DofMap& dofs, std::span<const double> v) {
    if (v.size() != dofs.num_dofs()) {
        throw std::invalid_argument("to_nodal: vector does not match the dof count");
    }
    std::vector<double> nodal(dofs.vertex_to_dof.size(), 0.0);
    for (std::size_t i = 0; i < nodal.size(); ++i) {
        const std::int32_t d = dofs.vertex_to_dof[i];
        if (d >= 0) {
            nodal[i] = v[d];
        }
    }
    return nodal;
}

double h1_error(const StructuredMesh& mesh, const DofMap& dofs, std::span<const double> u_h,
                const std::function<Point2(Point2)>& grad_exact) {
    const std::vector<double> nodal = to_nodal(dofs, u_h);
    double sum = 0.0;
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto p = mesh.triangle_points(t);
        const auto g = p1_gradients(p);
        const Triangle& tri = mesh.triangles()[t];
        Point2 grad_h{};
        for (int a = 0; a < 3; ++a) {
            grad_h.x += nodal[tri[a]] * g[a].x;
            grad_h.y += nodal[tri[a]] * g[a].y;
        }
        const double area = triangle_area(p);
        for (const QuadPoint& q : degree5_rule()) {
            const Point2 ge = grad_exact(at_bary(p, q.bary));
            const double dx = ge.x - grad_h.x;
            const double dy = ge.y - grad_h.y;
            sum += q.weight * area * (dx * dx + dy * dy);
        }
    }
    return std::sqrt(sum);
}

void write_coordinate(std::ostream& out, const SparseSpd& a) {
    out.precision(17);
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << a.n() << ' ' << a.n() << ' ' << a.nnz() << '\n';
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    const auto v = a.values();
    for (std::int32_t i = 0; i < a.n(); ++i) {
        for (std::int64_t p = rp[i]; p < rp[i + 1]; ++p) {
            out << i + 1 << ' ' << ci[p] + 1 << ' ' << v[p] << '\n';
        }
    }
}

}  // namespace homog
