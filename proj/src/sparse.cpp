#include "homog/sparse.hpp"

#include <cholmod.h>

#include <algorithm>
#include <cmath>
#include <mutex>

namespace homog {

std::int64_t CsrPattern::find(std::int32_t i, std::int32_t j) const noexcept {
    const auto begin = col_idx.begin() + row_ptr[i];
    const auto end = col_idx.begin() + row_ptr[i + 1];
    const auto it = std::lower_bound(begin, end, j);
    if (it == end || *it != j) {
        return -1;
    }
    return it - col_idx.begin();
}

SparseSpd::SparseSpd(std::shared_ptr<const CsrPattern> pattern, std::vector<double> values)
    : pattern_(std::move(pattern)), values_(std::move(values)) {
    if (!pattern_) {
        throw std::invalid_argument("SparseSpd: null pattern");
    }
    if (static_cast<std::int64_t>(values_.size()) != pattern_->nnz()) {
        throw std::invalid_argument("SparseSpd: value count does not match the pattern");
    }
}

SparseSpd SparseSpd::from_triplets(std::int32_t n, std::vector<Triplet> entries) {
    if (n < 0) {
        throw std::invalid_argument("SparseSpd: negative dimension");
    }
    for (const Triplet& e : entries) {
        if (e.row < 0 || e.col < 0 || e.row >= n || e.col >= n) {
            throw std::out_of_range("SparseSpd: triplet index out of range");
        }
        if (!std::isfinite(e.value)) {
            throw std::invalid_argument("SparseSpd: non-finite value");
        }
    }
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });

    auto pattern = std::make_shared<CsrPattern>();
    pattern->n = n;
    pattern->row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
    std::vector<double> values;
    for (std::size_t k = 0; k < entries.size(); ++k) {
        const Triplet& e = entries[k];
        if (k > 0 && entries[k - 1].row == e.row && entries[k - 1].col == e.col) {
            values.back() += e.value;
            continue;
        }
        pattern->col_idx.push_back(e.col);
        values.push_back(e.value);
        ++pattern->row_ptr[static_cast<std::size_t>(e.row) + 1];
    }
    for (std::int32_t i = 0; i < n; ++i) {
        pattern->row_ptr[i + 1] += pattern->row_ptr[i];
    }
    for (std::int32_t i = 0; i < n; ++i) {
        for (std::int64_t p = pattern->row_ptr[i]; p < pattern->row_ptr[i + 1]; ++p) {
            if (pattern->find(pattern->col_idx[p], i) < 0) {
                throw std::invalid_argument("SparseSpd: pattern is not structurally symmetric");
            }
        }
    }
    return {std::move(pattern), std::move(values)};
}

SparseSpd SparseSpd::diagonal(std::span<const double> d) {
    const auto n = static_cast<std::int32_t>(d.size());
    auto pattern = std::make_shared<CsrPattern>();
    pattern->n = n;
    pattern->row_ptr.resize(static_cast<std::size_t>(n) + 1);
    pattern->col_idx.resize(d.size());
    for (std::int32_t i = 0; i < n; ++i) {
        pattern->row_ptr[i + 1] = i + 1;
        pattern->col_idx[i] = i;
    }
    return {std::move(pattern), std::vector<double>(d.begin(), d.end())};
}

SparseSpd SparseSpd::identity(std::int32_t n) {
    return diagonal(std::vector<double>(static_cast<std::size_t>(n), 1.0));
}

double SparseSpd::at(std::int32_t i, std::int32_t j) const {
    if (i < 0 || j < 0 || i >= n() || j >= n()) {
        throw std::out_of_range("SparseSpd::at: index out of range");
    }
    const std::int64_t p = pattern_->find(i, j);
    return p < 0 ? 0.0 : values_[p];
}

bool SparseSpd::same_pattern(const SparseSpd& other) const noexcept {
    if (pattern_ == other.pattern_) {
        return true;
    }
    return pattern_ && other.pattern_ && pattern_->n == other.pattern_->n &&
           pattern_->row_ptr == other.pattern_->row_ptr &&
           pattern_->col_idx == other.pattern_->col_idx;
}

double SparseSpd::asymmetry() const {
    double worst = 0.0;
    for (std::int32_t i = 0; i < n(); ++i) {
        for (std::int64_t p = pattern_->row_ptr[i]; p < pattern_->row_ptr[i + 1]; ++p) {
            const std::int64_t q = pattern_->find(pattern_->col_idx[p], i);
            const double mirror = q < 0 ? 0.0 : values_[q];
            worst = std::max(worst, std::abs(values_[p] - mirror));
        }
    }
    return worst;
}

SparseSpd linear_combination(double alpha, const SparseSpd& a, double beta, const SparseSpd& b) {
    if (!a.same_pattern(b)) {
        throw std::invalid_argument("linear_combination: matrices have different patterns");
    }
    std::vector<double> values(a.values().size());
    for (std::size_t p = 0; p < values.size(); ++p) {
        values[p] = alpha * a.values()[p] + beta * b.values()[p];
    }
    return {a.pattern(), std::move(values)};
}

void spmv(const SparseSpd& a, std::span<const double> x, std::span<double> y) {
    if (x.size() != static_cast<std::size_t>(a.n()) || y.size() != x.size()) {
        throw std::invalid_argument("spmv: dimension mismatch");
    }
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    const auto v = a.values();
    for (std::int32_t i = 0; i < a.n(); ++i) {
        double sum = 0.0;
        for (std::int64_t p = rp[i]; p < rp[i + 1]; ++p) {
            sum += v[p] * x[ci[p]];
        }
        y[i] = sum;
    }
}

std::vector<double> spmv(const SparseSpd& a, std::span<const double> x) {
    std::vector<double> y(x.size());
    spmv(a, x, y);
    return y;
}

double dot(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw std::invalid_argument("dot: size mismatch");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sum += x[i] * y[i];
    }
    return sum;
}

double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

CgResult cg_solve(const SparseSpd& a, std::span<const double> b, const CgOptions& options) {
    const std::size_t n = static_cast<std::size_t>(a.n());
    if (b.size() != n) {
        throw std::invalid_argument("cg_solve: right-hand side has the wrong size");
    }
    if (!(options.tol > 0.0 && options.tol < 1.0) || options.max_iter < 1) {
        throw std::invalid_argument("cg_solve: require tol in (0,1) and max_iter >= 1");
    }

    CgResult result;
    result.x.assign(n, 0.0);
    const double b_norm = norm2(b);
    if (b_norm == 0.0) {
        result.report.converged = true;
        return result;
    }

    std::vector<double> inv_diag;
    if (options.preconditioner == Preconditioner::jacobi) {
        inv_diag.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = a.at(static_cast<std::int32_t>(i), static_cast<std::int32_t>(i));
            if (!(d > 0.0)) {
                throw std::invalid_argument("cg_solve: Jacobi needs a positive diagonal");
            }
            inv_diag[i] = 1.0 / d;
        }
    }
    auto precondition = [&](const std::vector<double>& r, std::vector<double>& z) {
        if (inv_diag.empty()) {
            z = r;
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                z[i] = inv_diag[i] * r[i];
            }
        }
    };

    std::vector<double>& x = result.x;
    std::vector<double> r(b.begin(), b.end());
    std::vector<double> z(n);
    std::vector<double> p(n);
    std::vector<double> ap(n);
    precondition(r, z);
    p = z;
    double rz = dot(r, z);
    double residual = 1.0;

    for (int it = 1; it <= options.max_iter; ++it) {
        spmv(a, p, ap);
        const double pap = dot(p, ap);
        if (!(pap > 0.0)) {
            // Breakdown: A is not positive definite along p.
            result.report.iterations = it - 1;
            break;
        }
        const double alpha = rz / pap;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        residual = norm2(r) / b_norm;
        result.report.iterations = it;
        if (options.observer) {
            options.observer(it, x);
        }
        if (residual <= options.tol) {
            // Confirm against the true residual; the recurrence drifts.
            spmv(a, x, ap);
            for (std::size_t i = 0; i < n; ++i) {
                r[i] = b[i] - ap[i];
            }
            residual = norm2(r) / b_norm;
            if (residual <= options.tol) {
                result.report.converged = true;
                break;
            }
            precondition(r, z);
            p = z;
            rz = dot(r, z);
            continue;
        }
        precondition(r, z);
        const double rz_next = dot(r, z);
        const double beta = rz_next / rz;
        rz = rz_next;
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = z[i] + beta * p[i];
        }
    }
    result.report.final_residual = residual;
    return result;
}

CgResult cg_solve(const SparseSpd& a, std::span<const double> b, double tol, int max_iter) {
    CgOptions options;
    options.tol = tol;
    options.max_iter = max_iter;
    return cg_solve(a, b, options);
}

struct CholeskyFactor::Impl {
    cholmod_common common{};
    cholmod_factor* factor = nullptr;
    std::int32_t n = 0;
    mutable std::mutex mutex;

    Impl() {
        cholmod_l_start(&common);
        common.print = 0;
        // Supernodal is always LL^T; simplicial LDL^T would accept indefinite input.
        common.supernodal = CHOLMOD_SUPERNODAL;
    }
    ~Impl() {
        if (factor != nullptr) {
            cholmod_l_free_factor(&factor, &common);
        }
        cholmod_l_finish(&common);
    }
};

CholeskyFactor::CholeskyFactor(const SparseSpd& a) : impl_(std::make_unique<Impl>()) {
    const std::int32_t n = a.n();
    impl_->n = n;
    if (n == 0) {
        return;
    }
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    const auto v = a.values();

    // Row i of the lower triangle in CSR is column i of the upper triangle
    // in CSC (stype = 1).
    std::int64_t upper_nnz = 0;
    for (std::int32_t i = 0; i < n; ++i) {
        for (std::int64_t p = rp[i]; p < rp[i + 1]; ++p) {
            upper_nnz += ci[p] <= i;
        }
    }
    cholmod_common* c = &impl_->common;
    cholmod_sparse* m = cholmod_l_allocate_sparse(n, n, upper_nnz, 1, 1, 1, CHOLMOD_REAL, c);
    if (m == nullptr) {
        throw FactorizationError("cholesky: allocation failed");
    }
    auto* mp = static_cast<SuiteSparse_long*>(m->p);
    auto* mi = static_cast<SuiteSparse_long*>(m->i);
    auto* mx = static_cast<double*>(m->x);
    SuiteSparse_long pos = 0;
    for (std::int32_t i = 0; i < n; ++i) {
        mp[i] = pos;
        for (std::int64_t p = rp[i]; p < rp[i + 1] && ci[p] <= i; ++p) {
            mi[pos] = ci[p];
            mx[pos] = v[p];
            ++pos;
        }
    }
    mp[n] = pos;

    impl_->factor = cholmod_l_analyze(m, c);
    if (impl_->factor == nullptr) {
        cholmod_l_free_sparse(&m, c);
        throw FactorizationError("cholesky: symbolic analysis failed");
    }
    cholmod_l_factorize(m, impl_->factor, c);
    cholmod_l_free_sparse(&m, c);
    if (c->status != CHOLMOD_OK || impl_->factor->minor < static_cast<std::size_t>(n)) {
        const auto minor = impl_->factor->minor;
        throw FactorizationError("cholesky: matrix is not positive definite (breakdown at column " +
                                 std::to_string(minor) + " of " + std::to_string(n) + ")");
    }
}

CholeskyFactor::~CholeskyFactor() = default;
CholeskyFactor::CholeskyFactor(CholeskyFactor&&) noexcept = default;
CholeskyFactor& CholeskyFactor::operator=(CholeskyFactor&&) noexcept = default;

std::int32_t CholeskyFactor::n() const noexcept { return impl_->n; }

std::int64_t CholeskyFactor::factor_nnz() const noexcept {
    const cholmod_factor* f = impl_->factor;
    if (f == nullptr) {
        return 0;
    }
    if (f->is_super) {
        return static_cast<std::int64_t>(f->xsize);
    }
    return static_cast<std::int64_t>(f->nzmax);
}

std::vector<double> CholeskyFactor::solve(std::span<const double> b) const {
    const std::int32_t n = impl_->n;
    if (b.size() != static_cast<std::size_t>(n)) {
        throw std::invalid_argument("cholesky solve: right-hand side has the wrong size");
    }
    if (n == 0) {
        return {};
    }
    std::lock_guard lock(impl_->mutex);
    cholmod_common* c = &impl_->common;
    cholmod_dense* rhs = cholmod_l_allocate_dense(n, 1, n, CHOLMOD_REAL, c);
    if (rhs == nullptr) {
        throw FactorizationError("cholesky solve: allocation failed");
    }
    std::copy(b.begin(), b.end(), static_cast<double*>(rhs->x));
    cholmod_dense* sol = cholmod_l_solve(CHOLMOD_A, impl_->factor, rhs, c);
    cholmod_l_free_dense(&rhs, c);
    if (sol == nullptr) {
        throw FactorizationError("cholesky solve failed");
    }
    const auto* sx = static_cast<const double*>(sol->x);
    std::vector<double> x(sx, sx + n);
    cholmod_l_free_dense(&sol, c);
    return x;
}

std::vector<double> direct_solve(const SparseSpd& a, std::span<const double> b) {
    return CholeskyFactor(a).solve(b);
}

std::string to_string(InnerSolverKind kind) {
    switch (kind) {
        case InnerSolverKind::cholesky: return "cholesky";
        case InnerSolverKind::cg: return "cg";
        case InnerSolverKind::pcg_jacobi: return "pcg-jacobi";
    }
    return "unknown";
}

InnerSolverKind parse_inner_solver(const std::string& name) {
    if (name == "cholesky") return InnerSolverKind::cholesky;
    if (name == "cg") return InnerSolverKind::cg;
    if (name == "pcg-jacobi") return InnerSolverKind::pcg_jacobi;
    throw std::invalid_argument("unknown inner solver '" + name + "'");
}

SpdSolver::SpdSolver(SparseSpd a, InnerSolverKind kind, double tol, int max_iter)
    : a_(std::move(a)), kind_(kind), tol_(tol), max_iter_(max_iter) {
    if (kind_ == InnerSolverKind::cholesky) {
        factor_ = std::make_shared<const CholeskyFactor>(a_);
    }
}

std::vector<double> SpdSolver::solve(std::span<const double> b, SolveReport* report) const {
    if (factor_) {
        auto x = factor_->solve(b);
        if (report != nullptr) {
            const double b_norm = norm2(b);
            std::vector<double> r = spmv(a_, x);
            for (std::size_t i = 0; i < r.size(); ++i) {
                r[i] = b[i] - r[i];
            }
            report->iterations = 1;
            report->final_residual = b_norm > 0.0 ? norm2(r) / b_norm : 0.0;
            report->converged = true;
        }
        return x;
    }
    CgOptions options;
    options.tol = tol_;
    options.max_iter = max_iter_;
    options.preconditioner =
        kind_ == InnerSolverKind::pcg_jacobi ? Preconditioner::jacobi : Preconditioner::none;
    CgResult result = cg_solve(a_, b, options);
    if (report != nullptr) {
        *report = result.report;
    }
    if (!result.report.converged) {
        throw SolveError("cg did not converge: relative residual " +
                             std::to_string(result.report.final_residual) + " after " +
                             std::to_string(result.report.iterations) + " iterations",
                         result.report);
    }
    return std::move(result.x);
}

}  // namespace homog
