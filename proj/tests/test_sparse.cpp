#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "homog/assembly.hpp"
#include "homog/sparse.hpp"

using namespace homog;

namespace {

using Dense = std::vector<std::vector<double>>;

Dense to_dense(const SparseSpd& a) {
    Dense d(a.n(), std::vector<double>(a.n(), 0.0));
    for (std::int32_t i = 0; i < a.n(); ++i) {
        for (std::int64_t p = a.row_ptr()[i]; p < a.row_ptr()[i + 1]; ++p) {
            d[i][a.col_idx()[p]] += a.values()[p];
        }
    }
    return d;
}

// Dense Cholesky solve; oracle for the sparse solvers.
std::vector<double> dense_solve(Dense a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t j = 0; j < n; ++j) {
        double s = a[j][j];
        for (std::size_t k = 0; k < j; ++k) {
            s -= a[j][k] * a[j][k];
        }
        REQUIRE(s > 0.0);
        a[j][j] = std::sqrt(s);
        for (std::size_t i = j + 1; i < n; ++i) {
            double t = a[i][j];
            for (std::size_t k = 0; k < j; ++k) {
                t -= a[i][k] * a[j][k];
            }
            a[i][j] = t / a[j][j];
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < i; ++k) {
            b[i] -= a[i][k] * b[k];
        }
        b[i] /= a[i][i];
    }
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t k = i + 1; k < n; ++k) {
            b[i] -= a[k][i] * b[k];
        }
        b[i] /= a[i][i];
    }
    return b;
}

SparseSpd laplacian_1d(std::int32_t n) {
    std::vector<Triplet> t;
    for (std::int32_t i = 0; i < n; ++i) {
        t.push_back({i, i, 2.0});
        if (i + 1 < n) {
            t.push_back({i, i + 1, -1.0});
            t.push_back({i + 1, i, -1.0});
        }
    }
    return SparseSpd::from_triplets(n, std::move(t));
}

// Random symmetric sparse matrix made SPD by diagonal dominance.
SparseSpd random_spd(std::int32_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<std::int32_t> col(0, n - 1);
    std::vector<double> row_abs(n, 0.0);
    std::vector<Triplet> t;
    for (std::int32_t i = 0; i < n; ++i) {
        for (int e = 0; e < 3; ++e) {
            const std::int32_t j = col(rng);
            if (j == i) {
                continue;
            }
            const double v = u(rng);
            t.push_back({i, j, v});
            t.push_back({j, i, v});
            row_abs[i] += std::abs(v);
            row_abs[j] += std::abs(v);
        }
    }
    for (std::int32_t i = 0; i < n; ++i) {
        t.push_back({i, i, row_abs[i] + 0.5});
    }
    return SparseSpd::from_triplets(n, std::move(t));
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    std::vector<double> v(n);
    for (double& x : v) {
        x = g(rng);
    }
    return v;
}

double max_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

}  // namespace

TEST_CASE("triplets: duplicates summed, pattern sorted") {
    const SparseSpd a = SparseSpd::from_triplets(
        3, {{2, 2, 1.0}, {0, 1, 2.0}, {1, 0, 2.0}, {0, 0, 1.0}, {0, 0, 3.0}, {1, 1, 5.0}});
    CHECK(a.n() == 3);
    CHECK(a.nnz() == 5);
    CHECK(a.at(0, 0) == 4.0);
    CHECK(a.at(0, 1) == 2.0);
    CHECK(a.at(2, 0) == 0.0);
    CHECK(a.pattern()->find(2, 0) == -1);
    for (std::int32_t i = 0; i < a.n(); ++i) {
        CHECK(std::is_sorted(a.col_idx().begin() + a.row_ptr()[i],
                             a.col_idx().begin() + a.row_ptr()[i + 1]));
    }
    CHECK(a.asymmetry() == 0.0);
}

TEST_CASE("triplets: invalid input rejected") {
    CHECK_THROWS_AS(SparseSpd::from_triplets(2, {{0, 1, 1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(SparseSpd::from_triplets(2, {{0, 2, 1.0}, {2, 0, 1.0}}), std::out_of_range);
    CHECK_THROWS_AS(SparseSpd::from_triplets(1, {{0, 0, NAN}}), std::invalid_argument);
}

TEST_CASE("spmv") {
    std::mt19937_64 rng(1);
    const std::vector<double> x = random_vector(50, rng);
    CHECK(spmv(SparseSpd::identity(50), x) == x);

    const std::vector<double> two(50, 2.0);
    const std::vector<double> y = spmv(SparseSpd::diagonal(two), x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(y[i] == 2.0 * x[i]);
    }

    const SparseSpd a = random_spd(50, rng);
    const Dense d = to_dense(a);
    const std::vector<double> z = spmv(a, x);
    for (std::size_t i = 0; i < 50; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 50; ++j) {
            s += d[i][j] * x[j];
        }
        CHECK(z[i] == doctest::Approx(s).epsilon(1e-13));
    }
}

TEST_CASE("linear combination keeps the pattern") {
    std::mt19937_64 rng(2);
    const SparseSpd a = random_spd(30, rng);
    const SparseSpd b(a.pattern(), std::vector<double>(a.nnz(), 1.0));
    const SparseSpd c = linear_combination(2.0, a, -1.0, b);
    CHECK(c.same_pattern(a));
    for (std::int64_t p = 0; p < a.nnz(); ++p) {
        CHECK(c.values()[p] == 2.0 * a.values()[p] - 1.0);
    }
    CHECK_THROWS_AS(linear_combination(1.0, a, 1.0, laplacian_1d(30)), std::invalid_argument);
}

TEST_CASE("cg: trivial systems") {
    const std::vector<double> zero(10, 0.0);
    const CgResult r0 = cg_solve(laplacian_1d(10), zero, 1e-12, 100);
    CHECK(r0.report.iterations == 0);
    CHECK(r0.report.converged);
    CHECK(r0.x == zero);

    std::mt19937_64 rng(3);
    const std::vector<double> b = random_vector(10, rng);
    const CgResult r1 = cg_solve(SparseSpd::identity(10), b, 1e-12, 100);
    CHECK(r1.report.iterations == 1);
    CHECK(max_diff(r1.x, b) < 1e-15);
}

TEST_CASE("cg: 1D Laplacian against dense Cholesky") {
    const SparseSpd a = laplacian_1d(100);
    std::mt19937_64 rng(4);
    const std::vector<double> b = random_vector(100, rng);
    const std::vector<double> oracle = dense_solve(to_dense(a), b);
    const CgResult r = cg_solve(a, b, 1e-12, 1000);
    CHECK(r.report.converged);
    CHECK(r.report.final_residual <= 1e-12);
    CHECK(max_diff(r.x, oracle) < 1e-8);
    CHECK(max_diff(direct_solve(a, b), oracle) < 1e-8);
}

TEST_CASE("cg: energy-norm error decreases monotonically") {
    const SparseSpd a = laplacian_1d(60);
    std::mt19937_64 rng(5);
    const std::vector<double> b = random_vector(60, rng);
    const std::vector<double> exact = dense_solve(to_dense(a), b);
    std::vector<double> energy;
    CgOptions options;
    options.tol = 1e-12;
    options.max_iter = 500;
    options.observer = [&](int, std::span<const double> x) {
        std::vector<double> e(x.size());
        for (std::size_t i = 0; i < e.size(); ++i) {
            e[i] = exact[i] - x[i];
        }
        energy.push_back(dot(e, spmv(a, e)));
    };
    cg_solve(a, b, options);
    REQUIRE(energy.size() > 5);
    for (std::size_t i = 1; i < energy.size(); ++i) {
        CHECK(energy[i] <= energy[i - 1] * (1.0 + 1e-12) + 1e-28);
    }
}

TEST_CASE("cg: non-convergence is reported") {
    const SparseSpd a = laplacian_1d(200);
    const std::vector<double> b(200, 1.0);
    const CgResult r = cg_solve(a, b, 1e-14, 3);
    CHECK_FALSE(r.report.converged);
    CHECK(r.report.iterations == 3);
    CHECK(r.report.final_residual > 1e-14);

    const SpdSolver solver(a, InnerSolverKind::cg, 1e-14, 3);
    CHECK_THROWS_AS(solver.solve(b), SolveError);
}

TEST_CASE("jacobi preconditioning") {
    // Badly scaled diagonal: Jacobi fixes it in one step.
    std::vector<double> d(40);
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = std::pow(10.0, static_cast<double>(i % 8));
    }
    const std::vector<double> b(40, 1.0);
    CgOptions options;
    options.tol = 1e-12;
    options.preconditioner = Preconditioner::jacobi;
    const CgResult r = cg_solve(SparseSpd::diagonal(d), b, options);
    CHECK(r.report.converged);
    CHECK(r.report.iterations == 1);

    std::mt19937_64 rng(6);
    const SparseSpd a = random_spd(80, rng);
    const std::vector<double> rhs = random_vector(80, rng);
    const SpdSolver pcg(a, InnerSolverKind::pcg_jacobi, 1e-12);
    CHECK(max_diff(pcg.solve(rhs), dense_solve(to_dense(a), rhs)) < 1e-9);
}

TEST_CASE("direct solve") {
    const std::vector<double> d{1.0, 2.0, 4.0, 8.0};
    const std::vector<double> b{1.0, 1.0, 1.0, 1.0};
    const std::vector<double> x = direct_solve(SparseSpd::diagonal(d), b);
    CHECK(x[0] == doctest::Approx(1.0));
    CHECK(x[3] == doctest::Approx(0.125));

    std::mt19937_64 rng(7);
    const SparseSpd a = random_spd(120, rng);
    const std::vector<double> rhs = random_vector(120, rng);
    const CholeskyFactor factor(a);
    CHECK(factor.n() == 120);
    CHECK(factor.factor_nnz() >= 120);
    CHECK(max_diff(factor.solve(rhs), dense_solve(to_dense(a), rhs)) < 1e-10);

    CHECK(direct_solve(SparseSpd::identity(0), {}).empty());
}

TEST_CASE("non-SPD input is rejected") {
    const SparseSpd indefinite =
        SparseSpd::from_triplets(2, {{0, 0, 1.0}, {0, 1, 2.0}, {1, 0, 2.0}, {1, 1, 1.0}});
    const std::vector<double> b{1.0, 1.0};
    CHECK_THROWS_AS(direct_solve(indefinite, b), FactorizationError);
    CHECK_THROWS_AS(SpdSolver(indefinite, InnerSolverKind::cholesky, 1e-12), FactorizationError);
}

TEST_CASE("solution is equivariant under symmetric permutation") {
    std::mt19937_64 rng(8);
    const std::int32_t n = 60;
    const SparseSpd a = random_spd(n, rng);
    const std::vector<double> b = random_vector(n, rng);
    std::vector<std::int32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    std::vector<Triplet> t;
    for (std::int32_t i = 0; i < n; ++i) {
        for (std::int64_t p = a.row_ptr()[i]; p < a.row_ptr()[i + 1]; ++p) {
            t.push_back({perm[i], perm[a.col_idx()[p]], a.values()[p]});
        }
    }
    const SparseSpd pa = SparseSpd::from_triplets(n, std::move(t));
    std::vector<double> pb(n);
    for (std::int32_t i = 0; i < n; ++i) {
        pb[perm[i]] = b[i];
    }
    for (InnerSolverKind kind : {InnerSolverKind::cholesky, InnerSolverKind::cg}) {
        const std::vector<double> x = SpdSolver(a, kind, 1e-13).solve(b);
        const std::vector<double> px = SpdSolver(pa, kind, 1e-13).solve(pb);
        for (std::int32_t i = 0; i < n; ++i) {
            CHECK(px[perm[i]] == doctest::Approx(x[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("cg and Cholesky agree on a checkerboard system") {
    const StructuredMesh mesh = build_mesh(20, 1);
    const FemSystem system = assemble(mesh, sample_checkerboard(20, 1), analytic_abar(1.0, 9.0), 1.0);
    const std::vector<double> direct = direct_solve(system.a_het, system.load);
    const SpdSolver cg(system.a_het, InnerSolverKind::cg, 1e-13);
    SolveReport report;
    const std::vector<double> iterative = cg.solve(system.load, &report);
    CHECK(report.converged);
    CHECK(max_diff(direct, iterative) / norm2(direct) * std::sqrt(double(direct.size())) < 1e-9);
    std::vector<double> diff(direct.size());
    for (std::size_t i = 0; i < diff.size(); ++i) {
        diff[i] = direct[i] - iterative[i];
    }
    CHECK(h1_seminorm(system, diff) <= 1e-9 * h1_seminorm(system, direct));
}

TEST_CASE("inner solver names") {
    for (InnerSolverKind kind :
         {InnerSolverKind::cholesky, InnerSolverKind::cg, InnerSolverKind::pcg_jacobi}) {
        CHECK(parse_inner_solver(to_string(kind)) == kind);
    }
    CHECK_THROWS_AS(parse_inner_solver("lu"), std::invalid_argument);
}
