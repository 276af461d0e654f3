#include "homog/iteration.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace homog {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::vector<double> solve_named(const SpdSolver& solver, std::span<const double> rhs,
                                const char* name) {
    try {
        return solver.solve(rhs);
    } catch (const SolveError& e) {
        throw StepError(name, e.what());
    } catch (const FactorizationError& e) {
        throw StepError(name, e.what());
    }
}

std::vector<double> difference(std::span<const double> a, std::span<const double> b) {
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = a[i] - b[i];
    }
    return d;
}

// Consecutive error increases after which a run is flagged as diverging.
constexpr int kDivergenceRun = 5;

}  // namespace

void validate(const IterationConfig& config) {
    if (!(config.lambda > 0.0 && config.lambda <= 1.0)) {
        throw std::invalid_argument("lambda must lie in (0, 1]");
    }
    if (!(config.tol > 0.0)) {
        throw std::invalid_argument("tol must be positive");
    }
    if (!(config.inner_tol > 0.0 && config.inner_tol < 1.0)) {
        throw std::invalid_argument("inner_tol must lie in (0, 1)");
    }
    if (config.max_iter < 1) {
        throw std::invalid_argument("max_iter must be at least 1");
    }
}

std::optional<std::string> lambda_range_warning(const IterationConfig& config, int r) {
    if (r > 0 && config.lambda < 1.0 / r) {
        std::ostringstream out;
        out << "lambda=" << config.lambda << " is below 1/r=" << 1.0 / r
            << "; contraction is not expected in this range";
        return out.str();
    }
    return std::nullopt;
}

std::shared_ptr<const SpdSolver> make_homogenized_solver(const FemSystem& system,
                                                         InnerSolverKind kind, double inner_tol) {
    return std::make_shared<const SpdSolver>(system.a_bar, kind, inner_tol);
}

TwoScaleIteration::TwoScaleIteration(const FemSystem& system, double lambda, InnerSolverKind kind,
                                     double inner_tol)
    : TwoScaleIteration(system, lambda, kind, inner_tol,
                        make_homogenized_solver(system, kind, inner_tol)) {}

TwoScaleIteration::TwoScaleIteration(const FemSystem& system, double lambda, InnerSolverKind kind,
                                     double inner_tol,
                                     std::shared_ptr<const SpdSolver> homogenized)
    : system_(system), lambda_(lambda), homogenized_(std::move(homogenized)) {
    if (!(lambda > 0.0 && lambda <= 1.0)) {
        throw std::invalid_argument("lambda must lie in (0, 1]");
    }
    if (!homogenized_ || homogenized_->matrix().n() != system.a_bar.n()) {
        throw std::invalid_argument("homogenized solver does not match the system");
    }
    shifted_ = std::make_unique<SpdSolver>(
        linear_combination(lambda * lambda, system.mass, 1.0, system.a_het), kind, inner_tol);
}

StepParts TwoScaleIteration::step_parts(std::span<const double> v) const {
    const std::size_t n = system_.num_dofs();
    if (v.size() != n) {
        throw std::invalid_argument("step: iterate does not match the system size");
    }
    const double l2 = lambda_ * lambda_;
    StepParts parts;

    auto start = Clock::now();
    std::vector<double> rhs = spmv(system_.a_het, v);
    for (std::size_t i = 0; i < n; ++i) {
        rhs[i] = system_.load[i] - rhs[i];
    }
    parts.u0 = solve_named(*shifted_, rhs, "u0");
    parts.timing.u0_ms = elapsed_ms(start);

    start = Clock::now();
    rhs = spmv(system_.mass, parts.u0);
    for (double& x : rhs) {
        x *= l2;
    }
    parts.ubar = solve_named(*homogenized_, rhs, "ubar");
    parts.timing.ubar_ms = elapsed_ms(start);

    start = Clock::now();
    rhs = spmv(system_.mass, parts.ubar);
    const std::vector<double> bar_term = spmv(system_.a_bar, parts.ubar);
    for (std::size_t i = 0; i < n; ++i) {
        rhs[i] = l2 * rhs[i] + bar_term[i];
    }
    parts.utilde = solve_named(*shifted_, rhs, "utilde");
    parts.timing.utilde_ms = elapsed_ms(start);

    parts.next.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        parts.next[i] = v[i] + parts.u0[i] + parts.utilde[i];
    }
    return parts;
}

std::vector<double> TwoScaleIteration::step(std::span<const double> v, StepTiming* timing) const {
    StepParts parts = step_parts(v);
    if (timing != nullptr) {
        *timing = parts.timing;
    }
    return std::move(parts.next);
}

std::vector<double> TwoScaleIteration::ubar_flux_form(std::span<const double> v,
                                                      std::span<const double> u0) const {
    const std::size_t n = system_.num_dofs();
    if (v.size() != n || u0.size() != n) {
        throw std::invalid_argument("ubar_flux_form: size mismatch");
    }
    std::vector<double> sum(n);
    for (std::size_t i = 0; i < n; ++i) {
        sum[i] = v[i] + u0[i];
    }
    std::vector<double> rhs = spmv(system_.a_het, sum);
    for (std::size_t i = 0; i < n; ++i) {
        rhs[i] = system_.load[i] - rhs[i];
    }
    return solve_named(*homogenized_, rhs, "ubar");
}

std::vector<double> step(const FemSystem& system, double lambda, std::span<const double> v,
                         InnerSolverKind kind, double inner_tol) {
    return TwoScaleIteration(system, lambda, kind, inner_tol).step(v);
}

IterationRecord run(const TwoScaleIteration& iteration, const IterationConfig& config,
                    std::span<const double> v_init, std::span<const double> reference) {
    validate(config);
    const FemSystem& system = iteration.system();
    if (v_init.size() != system.num_dofs() || reference.size() != system.num_dofs()) {
        throw std::invalid_argument("run: initial guess or reference has the wrong size");
    }

    IterationRecord record;
    record.config = config;
    record.reference_norm = h1_seminorm(system, reference);
    const double scale = record.reference_norm > 0.0 ? record.reference_norm : 1.0;

    auto push_error = [&](std::span<const double> v) {
        const double e = h1_seminorm(system, difference(reference, v));
        record.errors.push_back(e);
        record.rel_errors.push_back(e / scale);
    };

    std::vector<double> v(v_init.begin(), v_init.end());
    push_error(v);
    int increases = 0;
    for (int it = 1; it <= config.max_iter; ++it) {
        StepTiming timing;
        v = iteration.step(v, &timing);
        record.timings.push_back(timing);
        push_error(v);

        const double e = record.errors.back();
        if (!std::isfinite(e)) {
            record.diverged = true;
            break;
        }
        if (record.rel_errors.back() <= config.tol) {
            record.iterations_to_converge = it;
            break;
        }
        increases = e > record.errors[record.errors.size() - 2] ? increases + 1 : 0;
        if (increases >= kDivergenceRun) {
            record.diverged = true;
            break;
        }
    }
    return record;
}

IterationRecord run(const FemSystem& system, const IterationConfig& config,
                    std::span<const double> v_init) {
    validate(config);
    const std::vector<double> reference = direct_solve(system.a_het, system.load);
    const TwoScaleIteration iteration(system, config.lambda, config.inner_solver,
                                      config.inner_tol);
    return run(iteration, config, v_init, reference);
}

ContractionEstimate estimate_rho(std::span<const double> errors, double threshold, int window) {
    if (window < 2) {
        throw std::invalid_argument("estimate_rho: window must cover at least 2 iterations");
    }
    std::vector<double> xs;
    std::vector<double> ys;
    const std::size_t limit = std::min(errors.size(), static_cast<std::size_t>(window));
    for (std::size_t i = 0; i < limit; ++i) {
        if (!(errors[i] > threshold)) {
            break;
        }
        xs.push_back(static_cast<double>(i + 1));
        ys.push_back(std::log(errors[i]));
    }

    ContractionEstimate estimate;
    if (xs.size() >= 2) {
        const double n = static_cast<double>(xs.size());
        double mx = 0.0;
        double my = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            mx += xs[i];
            my += ys[i];
        }
        mx /= n;
        my /= n;
        double sxy = 0.0;
        double sxx = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sxy += (xs[i] - mx) * (ys[i] - my);
            sxx += (xs[i] - mx) * (xs[i] - mx);
        }
        estimate.rho = sxy / sxx;
        estimate.n_points = static_cast<int>(xs.size());
    } else if (errors.size() >= 2 && errors[0] > 0.0 && errors[1] > 0.0) {
        estimate.rho = std::log(errors[1] / errors[0]);
        estimate.n_points = 2;
        estimate.from_first_two = true;
    } else {
        throw std::invalid_argument("estimate_rho: fewer than 2 usable error values");
    }
    if (!std::isfinite(estimate.rho)) {
        throw std::invalid_argument("estimate_rho: non-finite slope");
    }
    estimate.samples = {estimate.rho};
    estimate.mean = estimate.rho;
    return estimate;
}

ContractionEstimate estimate_rho(const IterationRecord& record, int window) {
    return estimate_rho(record.errors, record.config.tol * record.reference_norm, window);
}

ContractionEstimate aggregate_rho(std::span<const double> rhos) {
    if (rhos.empty()) {
        throw std::invalid_argument("aggregate_rho: no samples");
    }
    ContractionEstimate estimate;
    estimate.samples.assign(rhos.begin(), rhos.end());
    double sum = 0.0;
    for (double r : rhos) {
        sum += r;
    }
    estimate.mean = sum / static_cast<double>(rhos.size());
    if (rhos.size() > 1) {
        double ss = 0.0;
        for (double r : rhos) {
            ss += (r - estimate.mean) * (r - estimate.mean);
        }
        estimate.stddev = std::sqrt(ss / static_cast<double>(rhos.size() - 1));
    }
    estimate.rho = estimate.mean;
    estimate.n_points = static_cast<int>(rhos.size());
    return estimate;
}

double ell(double lambda) {
    if (!(lambda > 0.0)) {
        throw std::invalid_argument("ell: lambda must be positive");
    }
    return std::sqrt(std::log1p(1.0 / lambda));
}

double predicted_contraction_shape(double lambda) {
    return std::sqrt(ell(lambda)) * std::sqrt(lambda);
}

}  // namespace homog
