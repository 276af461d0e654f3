#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "homog/assembly.hpp"
#include "homog/sparse.hpp"

namespace homog {

struct IterationConfig {
    /// Scale-separation parameter; 1/lambda is the length scale handed to the
    /// heterogeneous sub-solves.
    double lambda = 0.1;
    /// Stop once ||grad(u_h - v)|| / ||grad u_h|| <= tol.
    double tol = 1e-9;
    int max_iter = 50;
    double inner_tol = 1e-12;
    InnerSolverKind inner_solver = InnerSolverKind::cholesky;
};

/// Throws std::invalid_argument for lambda outside (0,1], non-positive
/// tolerances or max_iter < 1.
void validate(const IterationConfig& config);

/// Warning text when lambda < 1/r, outside the range covered by the
/// contraction estimate; nullopt otherwise.
std::optional<std::string> lambda_range_warning(const IterationConfig& config, int r);

/// Wall time of the three sub-solves of one step, in milliseconds.
struct StepTiming {
    double u0_ms = 0.0;
    double ubar_ms = 0.0;
    double utilde_ms = 0.0;

    double total_ms() const noexcept { return u0_ms + ubar_ms + utilde_ms; }
};

/// Raised when a sub-solve of a step fails; names the sub-problem.
class StepError : public std::runtime_error {
public:
    StepError(std::string sub_solve, const std::string& what)
        : std::runtime_error(sub_solve + " solve failed: " + what), sub_solve_(std::move(sub_solve)) {}
    const std::string& sub_solve() const noexcept { return sub_solve_; }

private:
    std::string sub_solve_;
};

/// Intermediate fields of one step.
struct StepParts {
    std::vector<double> u0;
    std::vector<double> ubar;
    std::vector<double> utilde;
    std::vector<double> next;
    StepTiming timing;
};

/// The homogenization-based two-scale update v -> v + u0 + u~, where
///
///   (lambda^2 M + A_het) u0 = F - A_het v
///   A_bar ubar              = lambda^2 M u0
///   (lambda^2 M + A_het) u~ = lambda^2 M ubar + A_bar ubar
///
/// The operators are factored (or set up for CG) once at construction and
/// reused by every step. The system must outlive this object.
class TwoScaleIteration {
public:
    TwoScaleIteration(const FemSystem& system, double lambda, InnerSolverKind kind,
                      double inner_tol);
    /// Reuses an existing solver for A_bar (it depends on neither lambda nor
    /// the coefficient realization).
    TwoScaleIteration(const FemSystem& system, double lambda, InnerSolverKind kind,
                      double inner_tol, std::shared_ptr<const SpdSolver> homogenized);

    double lambda() const noexcept { return lambda_; }
    const FemSystem& system() const noexcept { return system_; }
    const std::shared_ptr<const SpdSolver>& homogenized_solver() const noexcept {
        return homogenized_;
    }

    std::vector<double> step(std::span<const double> v, StepTiming* timing = nullptr) const;
    StepParts step_parts(std::span<const double> v) const;

    /// ubar from the flux form A_bar ubar = F - A_het (v + u0).
    std::vector<double> ubar_flux_form(std::span<const double> v,
                                       std::span<const double> u0) const;

private:
    const FemSystem& system_;
    double lambda_;
    std::unique_ptr<SpdSolver> shifted_;
    std::shared_ptr<const SpdSolver> homogenized_;
};

/// One step from scratch (sets up the sub-solvers, then applies them once).
std::vector<double> step(const FemSystem& system, double lambda, std::span<const double> v,
                         InnerSolverKind kind = InnerSolverKind::cholesky,
                         double inner_tol = 1e-12);

/// Solver for A_bar, shareable across realizations on the same mesh.
std::shared_ptr<const SpdSolver> make_homogenized_solver(const FemSystem& system,
                                                         InnerSolverKind kind, double inner_tol);

struct IterationRecord {
    /// errors[i] = ||grad(u_h - v_(i+1))||; errors[0] belongs to the
    /// initial guess.
    std::vector<double> errors;
    std::vector<double> rel_errors;
    /// timings[i] is the step producing v_(i+2).
    std::vector<StepTiming> timings;
    /// Number of steps applied until the relative error dropped below tol.
    std::optional<int> iterations_to_converge;
    /// Error grew over 5 consecutive steps (or became non-finite).
    bool diverged = false;
    double reference_norm = 0.0;
    IterationConfig config;
    std::uint64_t seed = 0;
    int r = 0;
    int k = 0;
    std::vector<std::string> warnings;

    bool converged() const noexcept { return iterations_to_converge.has_value(); }
};

/// Iterates `iteration` from v_init until convergence, divergence or
/// max_iter steps, measuring errors against `reference`. At least one step
/// is always applied.
IterationRecord run(const TwoScaleIteration& iteration, const IterationConfig& config,
                    std::span<const double> v_init, std::span<const double> reference);

/// Convenience overload: computes the reference by direct solve and sets up
/// the iteration itself.
IterationRecord run(const FemSystem& system, const IterationConfig& config,
                    std::span<const double> v_init);

struct ContractionEstimate {
    /// Slope of the natural log of the error per iteration.
    double rho = 0.0;
    int n_points = 0;
    /// Fewer than two points were above the threshold; rho comes from the
    /// first two errors.
    bool from_first_two = false;
    std::vector<double> samples;
    double mean = 0.0;
    double stddev = 0.0;
};

/// Least-squares slope of log(errors[i]) over the first `window` errors,
/// truncated before the first error <= threshold.
ContractionEstimate estimate_rho(std::span<const double> errors, double threshold,
                                 int window = 10);
ContractionEstimate estimate_rho(const IterationRecord& record, int window = 10);

/// Mean and sample standard deviation over per-realization rho values.
ContractionEstimate aggregate_rho(std::span<const double> rhos);

/// sqrt(log(1 + 1/lambda)), the two-dimensional logarithmic factor.
double ell(double lambda);

/// ell(lambda)^(1/2) lambda^(1/2), the predicted shape of the contraction
/// factor up to a constant.
double predicted_contraction_shape(double lambda);

}  // namespace homog
