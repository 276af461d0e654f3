#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace homog {

/// Compressed sparse row structure shared by matrices with one pattern.
/// Column indices are sorted within each row.
struct CsrPattern {
    std::int32_t n = 0;
    std::vector<std::int64_t> row_ptr;
    std::vector<std::int32_t> col_idx;

    std::int64_t nnz() const noexcept { return row_ptr.empty() ? 0 : row_ptr.back(); }
    /// Position of (i, j) in col_idx, or -1 if structurally zero.
    std::int64_t find(std::int32_t i, std::int32_t j) const noexcept;
};

struct Triplet {
    std::int32_t row;
    std::int32_t col;
    double value;
};

/// Symmetric matrix in CSR layout with a structurally symmetric pattern.
class SparseSpd {
public:
    SparseSpd() = default;
    SparseSpd(std::shared_ptr<const CsrPattern> pattern, std::vector<double> values);

    /// Duplicates are summed. Rejects patterns that are not structurally
    /// symmetric and values that are not finite.
    static SparseSpd from_triplets(std::int32_t n, std::vector<Triplet> entries);
    static SparseSpd diagonal(std::span<const double> d);
    static SparseSpd identity(std::int32_t n);

    std::int32_t n() const noexcept { return pattern_ ? pattern_->n : 0; }
    std::int64_t nnz() const noexcept { return pattern_ ? pattern_->nnz() : 0; }
    const std::shared_ptr<const CsrPattern>& pattern() const noexcept { return pattern_; }
    std::span<const std::int64_t> row_ptr() const noexcept { return pattern_->row_ptr; }
    std::span<const std::int32_t> col_idx() const noexcept { return pattern_->col_idx; }
    std::span<const double> values() const noexcept { return values_; }

    double at(std::int32_t i, std::int32_t j) const;
    bool same_pattern(const SparseSpd& other) const noexcept;
    /// Largest |a_ij - a_ji|.
    double asymmetry() const;

private:
    std::shared_ptr<const CsrPattern> pattern_;
    std::vector<double> values_;
};

/// alpha*a + beta*b for matrices sharing a pattern.
SparseSpd linear_combination(double alpha, const SparseSpd& a, double beta, const SparseSpd& b);

std::vector<double> spmv(const SparseSpd& a, std::span<const double> x);
void spmv(const SparseSpd& a, std::span<const double> x, std::span<double> y);

double dot(std::span<const double> x, std::span<const double> y);
double norm2(std::span<const double> x);

struct SolveReport {
    int iterations = 0;
    /// ||b - Ax|| / ||b||; zero when b = 0.
    double final_residual = 0.0;
    bool converged = false;
};

enum class Preconditioner { none, jacobi };

struct CgOptions {
    double tol = 1e-12;
    int max_iter = 100000;
    Preconditioner preconditioner = Preconditioner::none;
    /// Called with (iteration, current iterate) after every update.
    std::function<void(int, std::span<const double>)> observer;
};

struct CgResult {
    std::vector<double> x;
    SolveReport report;
};

/// Conjugate gradients from a zero initial guess. On non-convergence the
/// last iterate is returned with report.converged == false.
CgResult cg_solve(const SparseSpd& a, std::span<const double> b, const CgOptions& options);
CgResult cg_solve(const SparseSpd& a, std::span<const double> b, double tol, int max_iter);

class FactorizationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Sparse Cholesky factorization A = L L^T (CHOLMOD, fill-reducing
/// ordering). Factor once, solve many times. solve() may be called from
/// several threads.
class CholeskyFactor {
public:
    explicit CholeskyFactor(const SparseSpd& a);
    ~CholeskyFactor();
    CholeskyFactor(CholeskyFactor&&) noexcept;
    CholeskyFactor& operator=(CholeskyFactor&&) noexcept;
    CholeskyFactor(const CholeskyFactor&) = delete;
    CholeskyFactor& operator=(const CholeskyFactor&) = delete;

    std::int32_t n() const noexcept;
    /// Nonzeros in the factor L.
    std::int64_t factor_nnz() const noexcept;
    std::vector<double> solve(std::span<const double> b) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// One-shot Cholesky solve. Throws FactorizationError for non-SPD input.
std::vector<double> direct_solve(const SparseSpd& a, std::span<const double> b);

enum class InnerSolverKind { cholesky, cg, pcg_jacobi };

std::string to_string(InnerSolverKind kind);
InnerSolverKind parse_inner_solver(const std::string& name);

class SolveError : public std::runtime_error {
public:
    SolveError(const std::string& what, SolveReport report)
        : std::runtime_error(what), report_(report) {}
    const SolveReport& report() const noexcept { return report_; }

private:
    SolveReport report_;
};

/// An SPD operator bundled with the solver used to invert it: either a
/// cached Cholesky factor or (preconditioned) CG at a fixed tolerance.
class SpdSolver {
public:
    SpdSolver(SparseSpd a, InnerSolverKind kind, double tol, int max_iter = 100000);

    const SparseSpd& matrix() const noexcept { return a_; }
    InnerSolverKind kind() const noexcept { return kind_; }

    /// Throws SolveError if the iterative solver fails to reach tol.
    std::vector<double> solve(std::span<const double> b, SolveReport* report = nullptr) const;

private:
    SparseSpd a_;
    InnerSolverKind kind_;
    double tol_;
    int max_iter_;
    std::shared_ptr<const CholeskyFactor> factor_;
};

}  // namespace homog
