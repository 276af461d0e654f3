#pragma once

#include <cstdint>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "homog/assembly.hpp"
#include "homog/coeff.hpp"
#include "homog/iteration.hpp"

namespace homog {

enum class Mode { single, sweep_r, sweep_lambda, histogram, rve, fem_verify };

std::string to_string(Mode mode);

struct ExperimentConfig {
    Mode mode = Mode::single;
    std::vector<int> r_values{100};
    std::vector<double> lambda_values{0.1};
    int seeds = 1;
    std::uint64_t base_seed = 0;
    int refine = 3;
    double tol = 1e-9;
    double inner_tol = 1e-12;
    int max_iter = 50;
    InnerSolverKind inner_solver = InnerSolverKind::cholesky;
    MassKind mass = MassKind::consistent;
    double lo = 1.0;
    double hi = 9.0;
    RveBoundary rve_bc = RveBoundary::dirichlet_affine;
    int workers = 1;
    std::string output_path;
};

/// Checks the mode-specific preconditions and returns a normalized copy
/// (duplicate lambda and r values removed, first occurrence kept).
ExperimentConfig normalized(const ExperimentConfig& config);

/// Seed of realization `index`: base_seed + index.
std::uint64_t seed_of(const ExperimentConfig& config, int index);

/// One CSV line. Empty optionals are written as empty fields.
///
/// Row kinds are told apart by which fields are set: iteration rows carry
/// `iter`; per-realization summaries carry `seed` but no `iter`; aggregates
/// over realizations carry neither (their rho is the mean over seeds).
struct ResultRow {
    std::string mode;
    int r = 0;
    int k = 0;
    std::optional<double> lambda;
    std::optional<std::uint64_t> seed;
    std::optional<int> iter;
    std::optional<double> h1_error;
    std::optional<double> rel_error;
    std::optional<double> rho;
    std::optional<bool> converged;
    double wall_ms = 0.0;
};

inline constexpr int kCsvSchemaVersion = 1;
inline constexpr const char* kCsvHeader =
    "mode,r,k,lambda,seed,iter,h1_error,rel_error,rho,converged,wall_ms";

std::string format_row(const ResultRow& row);

/// Serializes rows from concurrent workers into one stream; the header is
/// written on construction.
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out);
    void write(const ResultRow& row);

private:
    std::ostream& out_;
    std::mutex mutex_;
};

/// One iteration run for a (r, lambda, seed) realization.
struct RunOutcome {
    int r = 0;
    int k = 0;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    IterationRecord record;
    std::optional<ContractionEstimate> estimate;
    /// Non-empty when a solver failed; the run is then incomplete.
    std::string failure;
    double wall_ms = 0.0;

    bool failed() const noexcept { return !failure.empty(); }
};

/// Statistics over the realizations of one (r, lambda) point.
struct AggregateRow {
    int r = 0;
    double lambda = 0.0;
    ContractionEstimate estimate;
    double exp_mean_rho = 0.0;
    double predicted_shape = 0.0;
    /// r < 10/lambda: heterogeneous sub-solves alone nearly solve the problem.
    bool pre_asymptotic = false;
    int n_runs = 0;
    int n_converged = 0;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<RunOutcome> runs;
    std::vector<AggregateRow> aggregates;
    std::vector<ResultRow> rows;
    std::vector<std::string> warnings;
    int failures = 0;
};

/// Grid of independent runs over r x seeds x lambda. Each (r, seed) system is
/// assembled and solved directly once, then iterated for every lambda; the
/// A_bar solver is shared by all seeds of one r. Rows are emitted to `csv`
/// (if given) in deterministic order as runs complete.
ExperimentResult run_grid(const ExperimentConfig& config, CsvWriter* csv = nullptr,
                          bool iteration_rows = false);

ExperimentResult run_single(const ExperimentConfig& config, CsvWriter* csv = nullptr);
ExperimentResult run_sweep_r(const ExperimentConfig& config, CsvWriter* csv = nullptr);
ExperimentResult run_sweep_lambda(const ExperimentConfig& config, CsvWriter* csv = nullptr);
ExperimentResult run_histogram(const ExperimentConfig& config, CsvWriter* csv = nullptr);

bool is_pre_asymptotic(int r, double lambda);

struct RveSample {
    std::uint64_t seed = 0;
    HomogenizedMatrix abar;
};

struct RveResult {
    int block = 0;
    int refine = 0;
    RveBoundary bc = RveBoundary::dirichlet_affine;
    std::vector<RveSample> samples;
    HomogenizedMatrix mean;
    HomogenizedMatrix analytic;
};

/// Estimates the homogenized matrix on an r_values[0] block for each seed.
RveResult run_rve(const ExperimentConfig& config);

struct FemVerifyLevel {
    int r = 0;
    int k = 0;
    double h1_error = 0.0;
    double rel_error = 0.0;
    double wall_ms = 0.0;
};

/// Manufactured solution sin(pi x/r) sin(pi y/r) with unit coefficient;
/// returns the H1-seminorm discretization error on one mesh.
FemVerifyLevel fem_verify_level(int r, int k);

/// Levels k = 0..refine for every r, as CSV rows.
std::vector<FemVerifyLevel> run_fem_verify(const ExperimentConfig& config,
                                           CsvWriter* csv = nullptr);

/// Metadata document written next to a CSV: schema version, full config,
/// aggregates, per-run sub-solve timing split and warnings.
void write_metadata(std::ostream& out, const ExperimentResult& result);
void write_rve_json(std::ostream& out, const ExperimentConfig& config, const RveResult& result);

/// Runs the configured mode, writing CSV (and FILE.meta.json) when
/// output_path is set. Returns the number of failed runs.
int run_experiment(const ExperimentConfig& config, std::ostream& log);

}  // namespace homog
