#include "homog/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace homog {

namespace {

using Clock = std::chrono::steady_clock;
using json = nlohmann::ordered_json;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Shortest representation that round-trips.
std::string format_double(double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

template <class T>
std::vector<T> dedupe(const std::vector<T>& values) {
    std::vector<T> out;
    for (const T& v : values) {
        if (std::find(out.begin(), out.end(), v) == out.end()) {
            out.push_back(v);
        }
    }
    return out;
}

const char* to_string(RveBoundary bc) {
    return bc == RveBoundary::periodic ? "periodic" : "dirichlet-affine";
}

const char* to_string(MassKind kind) {
    return kind == MassKind::lumped ? "lumped" : "consistent";
}

IterationConfig iteration_config(const ExperimentConfig& config, double lambda) {
    IterationConfig it;
    it.lambda = lambda;
    it.tol = config.tol;
    it.max_iter = config.max_iter;
    it.inner_tol = config.inner_tol;
    it.inner_solver = config.inner_solver;
    return it;
}

std::vector<ResultRow> rows_of(const ExperimentConfig& config, const RunOutcome& run,
                               bool iteration_rows) {
    const std::string mode = to_string(config.mode);
    std::vector<ResultRow> rows;
    const IterationRecord& rec = run.record;
    if (iteration_rows) {
        for (std::size_t i = 0; i < rec.errors.size(); ++i) {
            ResultRow row;
            row.mode = mode;
            row.r = run.r;
            row.k = run.k;
            row.lambda = run.lambda;
            row.seed = run.seed;
            row.iter = static_cast<int>(i) + 1;
            row.h1_error = rec.errors[i];
            row.rel_error = rec.rel_errors[i];
            row.converged = rec.rel_errors[i] <= config.tol;
            row.wall_ms = i == 0 ? 0.0 : rec.timings[i - 1].total_ms();
            rows.push_back(row);
        }
    }
    ResultRow summary;
    summary.mode = mode;
    summary.r = run.r;
    summary.k = run.k;
    summary.lambda = run.lambda;
    summary.seed = run.seed;
    if (!rec.errors.empty()) {
        summary.h1_error = rec.errors.back();
        summary.rel_error = rec.rel_errors.back();
    }
    if (run.estimate) {
        summary.rho = run.estimate->rho;
    }
    summary.converged = !run.failed() && rec.converged();
    summary.wall_ms = run.wall_ms;
    rows.push_back(summary);
    return rows;
}

ResultRow aggregate_row(const ExperimentConfig& config, const AggregateRow& agg) {
    ResultRow row;
    row.mode = to_string(config.mode);
    row.r = agg.r;
    row.k = config.refine;
    row.lambda = agg.lambda;
    row.rho = agg.estimate.mean;
    row.converged = agg.n_converged == agg.n_runs;
    return row;
}

// Everything one worker needs for an (r, seed) realization.
struct Task {
    int r;
    int seed_index;
};

// Solvers for A_bar, one per r, released once all tasks of that r are done.
class HomogenizedCache {
public:
    HomogenizedCache(const ExperimentConfig& config, const std::vector<Task>& tasks)
        : config_(config) {
        for (const Task& t : tasks) {
            ++remaining_[t.r];
        }
    }

    std::shared_ptr<const SpdSolver> get(int r, const FemSystem& system) {
        std::lock_guard lock(mutex_);
        auto& slot = solvers_[r];
        if (!slot) {
            slot = make_homogenized_solver(system, config_.inner_solver, config_.inner_tol);
        }
        return slot;
    }

    void done(int r) {
        std::lock_guard lock(mutex_);
        if (--remaining_[r] == 0) {
            solvers_.erase(r);
        }
    }

private:
    const ExperimentConfig& config_;
    std::mutex mutex_;
    std::map<int, int> remaining_;
    std::map<int, std::shared_ptr<const SpdSolver>> solvers_;
};

std::vector<RunOutcome> run_task(const ExperimentConfig& config, const Task& task,
                                 HomogenizedCache& cache) {
    const std::uint64_t seed = seed_of(config, task.seed_index);
    std::vector<RunOutcome> outcomes;
    for (double lambda : config.lambda_values) {
        RunOutcome outcome;
        outcome.r = task.r;
        outcome.k = config.refine;
        outcome.lambda = lambda;
        outcome.seed = seed;
        outcome.record.config = iteration_config(config, lambda);
        outcome.record.seed = seed;
        outcome.record.r = task.r;
        outcome.record.k = config.refine;
        outcomes.push_back(std::move(outcome));
    }

    std::optional<FemSystem> system;
    std::vector<double> reference;
    std::shared_ptr<const SpdSolver> homogenized;
    try {
        const StructuredMesh mesh(task.r, config.refine);
        const CheckerboardField field = sample_checkerboard(task.r, seed, config.lo, config.hi);
        AssemblyOptions options;
        options.mass = config.mass;
        system = assemble(mesh, field, analytic_abar(config.lo, config.hi), 1.0, options);
        reference = direct_solve(system->a_het, system->load);
        homogenized = cache.get(task.r, *system);
    } catch (const std::exception& e) {
        for (RunOutcome& outcome : outcomes) {
            outcome.failure = std::string("setup: ") + e.what();
        }
        return outcomes;
    }

    const std::vector<double> v0(system->num_dofs(), 0.0);
    for (RunOutcome& outcome : outcomes) {
        const auto start = Clock::now();
        try {
            const IterationConfig it_config = iteration_config(config, outcome.lambda);
            const TwoScaleIteration iteration(*system, outcome.lambda, config.inner_solver,
                                              config.inner_tol, homogenized);
            outcome.record = run(iteration, it_config, v0, reference);
            outcome.record.seed = outcome.seed;
            outcome.record.r = outcome.r;
            outcome.record.k = outcome.k;
            if (auto w = lambda_range_warning(it_config, outcome.r)) {
                outcome.record.warnings.push_back(*w);
            }
            outcome.estimate = estimate_rho(outcome.record);
        } catch (const std::exception& e) {
            outcome.failure = e.what();
        }
        outcome.wall_ms = elapsed_ms(start);
    }
    return outcomes;
}

json matrix_json(const Mat2& m) { return json::array({json::array({m.xx, m.xy}), json::array({m.yx, m.yy})}); }

json config_json(const ExperimentConfig& c) {
    return json{{"mode", to_string(c.mode)},
                {"r", c.r_values},
                {"lambda", c.lambda_values},
                {"seeds", c.seeds},
                {"base_seed", c.base_seed},
                {"refine", c.refine},
                {"tol", c.tol},
                {"inner_solver", to_string(c.inner_solver)},
                {"inner_tol", c.inner_tol},
                {"max_iter", c.max_iter},
                {"mass", to_string(c.mass)},
                {"lo", c.lo},
                {"hi", c.hi},
                {"rve_bc", to_string(c.rve_bc)},
                {"workers", c.workers}};
}

}  // namespace

std::string to_string(Mode mode) {
    switch (mode) {
        case Mode::single: return "run";
        case Mode::sweep_r: return "sweep-r";
        case Mode::sweep_lambda: return "sweep-lambda";
        case Mode::histogram: return "histogram";
        case Mode::rve: return "rve";
        case Mode::fem_verify: return "fem-verify";
    }
    return "unknown";
}

ExperimentConfig normalized(const ExperimentConfig& config) {
    ExperimentConfig c = config;
    c.r_values = dedupe(c.r_values);
    c.lambda_values = dedupe(c.lambda_values);
    if (c.r_values.empty()) {
        throw std::invalid_argument("at least one r value is required");
    }
    for (int r : c.r_values) {
        if (r < 1) {
            throw std::invalid_argument("r values must be positive");
        }
    }
    if (c.seeds < 1) {
        throw std::invalid_argument("at least one seed is required");
    }
    if (c.refine < 0) {
        throw std::invalid_argument("refinement level must be non-negative");
    }
    if (c.workers < 1) {
        throw std::invalid_argument("workers must be at least 1");
    }
    if (c.mode == Mode::rve || c.mode == Mode::fem_verify) {
        if (c.mode == Mode::rve && c.r_values.front() < 8) {
            throw std::invalid_argument("rve block side must be at least 8");
        }
        return c;
    }
    if (c.lambda_values.empty()) {
        throw std::invalid_argument("at least one lambda value is required");
    }
    const double lambda_max = c.mode == Mode::sweep_lambda ? 0.5 : 1.0;
    for (double l : c.lambda_values) {
        if (!(l > 0.0 && l <= lambda_max)) {
            throw std::invalid_argument("lambda " + format_double(l) + " outside (0, " +
                                        format_double(lambda_max) + "]");
        }
    }
    validate(iteration_config(c, c.lambda_values.front()));
    if (c.mode == Mode::single &&
        (c.r_values.size() != 1 || c.lambda_values.size() != 1 || c.seeds != 1)) {
        throw std::invalid_argument("run takes a single r, a single lambda and one seed");
    }
    if (c.mode == Mode::histogram && c.seeds < 2) {
        throw std::invalid_argument("histogram needs at least 2 seeds");
    }
    return c;
}

std::uint64_t seed_of(const ExperimentConfig& config, int index) {
    return config.base_seed + static_cast<std::uint64_t>(index);
}

std::string format_row(const ResultRow& row) {
    std::string s = row.mode;
    auto field = [&s](const std::string& v) {
        s += ',';
        s += v;
    };
    field(std::to_string(row.r));
    field(std::to_string(row.k));
    field(row.lambda ? format_double(*row.lambda) : "");
    field(row.seed ? std::to_string(*row.seed) : "");
    field(row.iter ? std::to_string(*row.iter) : "");
    field(row.h1_error ? format_double(*row.h1_error) : "");
    field(row.rel_error ? format_double(*row.rel_error) : "");
    field(row.rho ? format_double(*row.rho) : "");
    field(row.converged ? (*row.converged ? "1" : "0") : "");
    char wall[32];
    std::snprintf(wall, sizeof wall, "%.3f", row.wall_ms);
    field(wall);
    return s;
}

CsvWriter::CsvWriter(std::ostream& out) : out_(out) { out_ << kCsvHeader << '\n'; }

void CsvWriter::write(const ResultRow& row) {
    std::lock_guard lock(mutex_);
    out_ << format_row(row) << '\n';
    out_.flush();
}

bool is_pre_asymptotic(int r, double lambda) { return r < 10.0 / lambda; }

ExperimentResult run_grid(const ExperimentConfig& config_in, CsvWriter* csv, bool iteration_rows) {
    ExperimentResult result;
    result.config = normalized(config_in);
    const ExperimentConfig& config = result.config;

    std::vector<Task> tasks;
    for (int r : config.r_values) {
        for (int s = 0; s < config.seeds; ++s) {
            tasks.push_back({r, s});
        }
    }
    HomogenizedCache cache(config, tasks);

    std::vector<std::optional<std::vector<RunOutcome>>> done(tasks.size());
    std::size_t next_flush = 0;
    std::mutex flush_mutex;
    std::atomic<std::size_t> next_task{0};

    auto flush_ready = [&] {
        // Caller holds flush_mutex.
        while (next_flush < done.size() && done[next_flush]) {
            for (const RunOutcome& run : *done[next_flush]) {
                for (ResultRow& row : rows_of(config, run, iteration_rows)) {
                    if (csv != nullptr) {
                        csv->write(row);
                    }
                    result.rows.push_back(std::move(row));
                }
            }
            ++next_flush;
        }
    };

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next_task.fetch_add(1);
            if (i >= tasks.size()) {
                return;
            }
            auto outcomes = run_task(config, tasks[i], cache);
            cache.done(tasks[i].r);
            std::lock_guard lock(flush_mutex);
            done[i] = std::move(outcomes);
            flush_ready();
        }
    };

    const int n_workers = std::min<int>(config.workers, static_cast<int>(tasks.size()));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int w = 0; w < n_workers; ++w) {
            pool.emplace_back(worker);
        }
    }

    for (auto& task_runs : done) {
        for (RunOutcome& run : *task_runs) {
            result.runs.push_back(std::move(run));
        }
    }

    for (int r : config.r_values) {
        for (double lambda : config.lambda_values) {
            AggregateRow agg;
            agg.r = r;
            agg.lambda = lambda;
            std::vector<double> rhos;
            for (const RunOutcome& run : result.runs) {
                if (run.r != r || run.lambda != lambda) {
                    continue;
                }
                ++agg.n_runs;
                agg.n_converged += !run.failed() && run.record.converged();
                if (run.estimate) {
                    rhos.push_back(run.estimate->rho);
                }
            }
            if (rhos.empty()) {
                continue;
            }
            agg.estimate = aggregate_rho(rhos);
            agg.exp_mean_rho = std::exp(agg.estimate.mean);
            agg.predicted_shape = predicted_contraction_shape(lambda);
            agg.pre_asymptotic = is_pre_asymptotic(r, lambda);
            result.aggregates.push_back(agg);
        }
    }
    if (config.mode != Mode::single) {
        for (const AggregateRow& agg : result.aggregates) {
            ResultRow row = aggregate_row(config, agg);
            if (csv != nullptr) {
                csv->write(row);
            }
            result.rows.push_back(row);
        }
    }

    for (const RunOutcome& run : result.runs) {
        const std::string where = "r=" + std::to_string(run.r) + " lambda=" +
                                  format_double(run.lambda) + " seed=" + std::to_string(run.seed);
        if (run.failed()) {
            ++result.failures;
            result.warnings.push_back(where + ": " + run.failure);
        } else if (run.record.diverged) {
            result.warnings.push_back(where + ": error grew over 5 consecutive iterations");
        } else if (!run.record.converged()) {
            result.warnings.push_back(where + ": not converged within max_iter");
        }
        if (run.estimate && run.estimate->from_first_two) {
            result.warnings.push_back(where + ": rho taken from the first two iterations");
        }
    }
    for (int r : config.r_values) {
        for (double lambda : config.lambda_values) {
            if (auto w = lambda_range_warning(iteration_config(config, lambda), r)) {
                result.warnings.push_back("r=" + std::to_string(r) + ": " + *w);
            }
            if (config.mode != Mode::single && is_pre_asymptotic(r, lambda)) {
                result.warnings.push_back("r=" + std::to_string(r) + " lambda=" +
                                          format_double(lambda) + ": pre-asymptotic (r < 10/lambda)");
            }
        }
    }
    return result;
}

ExperimentResult run_single(const ExperimentConfig& config, CsvWriter* csv) {
    ExperimentConfig c = config;
    c.mode = Mode::single;
    return run_grid(c, csv, true);
}

ExperimentResult run_sweep_r(const ExperimentConfig& config, CsvWriter* csv) {
    ExperimentConfig c = config;
    c.mode = Mode::sweep_r;
    return run_grid(c, csv, false);
}

ExperimentResult run_sweep_lambda(const ExperimentConfig& config, CsvWriter* csv) {
    ExperimentConfig c = config;
    c.mode = Mode::sweep_lambda;
    return run_grid(c, csv, false);
}

ExperimentResult run_histogram(const ExperimentConfig& config, CsvWriter* csv) {
    ExperimentConfig c = config;
    c.mode = Mode::histogram;
    return run_grid(c, csv, false);
}

RveResult run_rve(const ExperimentConfig& config_in) {
    ExperimentConfig config = config_in;
    config.mode = Mode::rve;
    config = normalized(config);

    RveResult result;
    result.block = config.r_values.front();
    result.refine = config.refine;
    result.bc = config.rve_bc;
    result.analytic = analytic_abar(config.lo, config.hi);
    RveOptions options;
    options.bc = config.rve_bc;
    options.refine = config.refine;
    for (int s = 0; s < config.seeds; ++s) {
        const std::uint64_t seed = seed_of(config, s);
        const CheckerboardField field =
            sample_checkerboard(result.block, seed, config.lo, config.hi);
        result.samples.push_back({seed, rve_estimate_abar(field, options)});
    }
    const double n = static_cast<double>(result.samples.size());
    for (const RveSample& s : result.samples) {
        result.mean.xx += s.abar.xx / n;
        result.mean.xy += s.abar.xy / n;
        result.mean.yx += s.abar.yx / n;
        result.mean.yy += s.abar.yy / n;
    }
    return result;
}

FemVerifyLevel fem_verify_level(int r, int k) {
    const auto start = Clock::now();
    const double w = std::numbers::pi / r;
    const StructuredMesh mesh(r, k);
    const DofMap dofs = interior_dof_map(mesh);
    const auto pattern = build_pattern(mesh, dofs);
    const SparseSpd stiffness = assemble_stiffness(mesh, dofs, pattern, Mat2::identity());
    const std::vector<double> load = assemble_load(mesh, dofs, [w](Point2 p) {
        return 2.0 * w * w * std::sin(w * p.x) * std::sin(w * p.y);
    });
    const std::vector<double> u_h = direct_solve(stiffness, load);
    FemVerifyLevel level;
    level.r = r;
    level.k = k;
    level.h1_error = h1_error(mesh, dofs, u_h, [w](Point2 p) {
        return Point2{w * std::cos(w * p.x) * std::sin(w * p.y),
                      w * std::sin(w * p.x) * std::cos(w * p.y)};
    });
    // ||grad u||_{L2} = pi / sqrt(2) for every r.
    level.rel_error = level.h1_error / (std::numbers::pi / std::numbers::sqrt2);
    level.wall_ms = elapsed_ms(start);
    return level;
}

std::vector<FemVerifyLevel> run_fem_verify(const ExperimentConfig& config_in, CsvWriter* csv) {
    ExperimentConfig config = config_in;
    config.mode = Mode::fem_verify;
    config = normalized(config);
    std::vector<FemVerifyLevel> levels;
    for (int r : config.r_values) {
        for (int k = 0; k <= config.refine; ++k) {
            const FemVerifyLevel level = fem_verify_level(r, k);
            levels.push_back(level);
            if (csv != nullptr) {
                ResultRow row;
                row.mode = to_string(Mode::fem_verify);
                row.r = r;
                row.k = k;
                row.h1_error = level.h1_error;
                row.rel_error = level.rel_error;
                row.wall_ms = level.wall_ms;
                csv->write(row);
            }
        }
    }
    return levels;
}

void write_metadata(std::ostream& out, const ExperimentResult& result) {
    json doc;
    doc["schema_version"] = kCsvSchemaVersion;
    doc["columns"] = kCsvHeader;
    doc["config"] = config_json(result.config);
    json aggregates = json::array();
    for (const AggregateRow& agg : result.aggregates) {
        aggregates.push_back({{"r", agg.r},
                              {"lambda", agg.lambda},
                              {"mean_rho", agg.estimate.mean},
                              {"std_rho", agg.estimate.stddev},
                              {"exp_mean_rho", agg.exp_mean_rho},
                              {"predicted_shape", agg.predicted_shape},
                              {"pre_asymptotic", agg.pre_asymptotic},
                              {"n_runs", agg.n_runs},
                              {"n_converged", agg.n_converged}});
    }
    doc["aggregates"] = aggregates;
    json runs = json::array();
    for (const RunOutcome& run : result.runs) {
        StepTiming total;
        for (const StepTiming& t : run.record.timings) {
            total.u0_ms += t.u0_ms;
            total.ubar_ms += t.ubar_ms;
            total.utilde_ms += t.utilde_ms;
        }
        json entry{{"r", run.r},
                   {"k", run.k},
                   {"lambda", run.lambda},
                   {"seed", run.seed},
                   {"steps", run.record.timings.size()},
                   {"converged", run.record.converged()},
                   {"diverged", run.record.diverged},
                   {"u0_ms", total.u0_ms},
                   {"ubar_ms", total.ubar_ms},
                   {"utilde_ms", total.utilde_ms}};
        if (run.estimate) {
            entry["rho"] = run.estimate->rho;
            entry["rho_points"] = run.estimate->n_points;
            entry["rho_from_first_two"] = run.estimate->from_first_two;
        }
        if (run.failed()) {
            entry["failure"] = run.failure;
        }
        runs.push_back(entry);
    }
    doc["runs"] = runs;
    doc["warnings"] = result.warnings;
    out << doc.dump(2) << '\n';
}

void write_rve_json(std::ostream& out, const ExperimentConfig& config, const RveResult& result) {
    json doc;
    doc["schema_version"] = kCsvSchemaVersion;
    doc["config"] = config_json(config);
    doc["block"] = result.block;
    doc["refine"] = result.refine;
    doc["bc"] = to_string(result.bc);
    json samples = json::array();
    for (const RveSample& s : result.samples) {
        samples.push_back({{"seed", s.seed}, {"abar", matrix_json(s.abar)}});
    }
    doc["samples"] = samples;
    doc["mean"] = matrix_json(result.mean);
    doc["analytic"] = matrix_json(result.analytic);
    out << doc.dump(2) << '\n';
}

int run_experiment(const ExperimentConfig& config_in, std::ostream& log) {
    const ExperimentConfig config = normalized(config_in);
    std::ofstream file;
    if (!config.output_path.empty()) {
        file.open(config.output_path);
        if (!file) {
            throw std::runtime_error("cannot open " + config.output_path + " for writing");
        }
    }

    if (config.mode == Mode::rve) {
        const RveResult result = run_rve(config);
        for (const RveSample& s : result.samples) {
            log << "seed " << s.seed << ": [" << s.abar.xx << ' ' << s.abar.xy << "; "
                << s.abar.yx << ' ' << s.abar.yy << "]\n";
        }
        log << "mean: [" << result.mean.xx << ' ' << result.mean.xy << "; " << result.mean.yx
            << ' ' << result.mean.yy << "]  analytic: " << result.analytic.xx << " I\n";
        if (file) {
            write_rve_json(file, config, result);
        }
        return 0;
    }

    std::optional<CsvWriter> csv;
    if (file) {
        csv.emplace(file);
    }
    CsvWriter* writer = csv ? &*csv : nullptr;

    if (config.mode == Mode::fem_verify) {
        const auto levels = run_fem_verify(config, writer);
        for (std::size_t i = 0; i < levels.size(); ++i) {
            log << "r=" << levels[i].r << " k=" << levels[i].k << " h1_error=" << levels[i].h1_error;
            if (i > 0 && levels[i - 1].r == levels[i].r) {
                log << " ratio=" << levels[i - 1].h1_error / levels[i].h1_error;
            }
            log << '\n';
        }
        return 0;
    }

    ExperimentResult result;
    switch (config.mode) {
        case Mode::single: result = run_single(config, writer); break;
        case Mode::sweep_r: result = run_sweep_r(config, writer); break;
        case Mode::sweep_lambda: result = run_sweep_lambda(config, writer); break;
        case Mode::histogram: result = run_histogram(config, writer); break;
        default: break;
    }

    if (config.mode == Mode::single) {
        for (const ResultRow& row : result.rows) {
            if (row.iter) {
                log << "iter " << *row.iter << "  h1_error " << *row.h1_error << "  rel "
                    << *row.rel_error << '\n';
            }
        }
    }
    for (const RunOutcome& run : result.runs) {
        if (run.estimate) {
            log << "r=" << run.r << " lambda=" << run.lambda << " seed=" << run.seed
                << " rho=" << run.estimate->rho << " exp(rho)=" << std::exp(run.estimate->rho)
                << " steps=" << run.record.timings.size() << '\n';
        }
    }
    for (const AggregateRow& agg : result.aggregates) {
        log << "r=" << agg.r << " lambda=" << agg.lambda << ": mean rho " << agg.estimate.mean
            << " (sd " << agg.estimate.stddev << "), exp " << agg.exp_mean_rho << ", predicted shape "
            << agg.predicted_shape << (agg.pre_asymptotic ? " [pre-asymptotic]" : "") << '\n';
    }
    for (const std::string& w : result.warnings) {
        log << "warning: " << w << '\n';
    }

    if (!config.output_path.empty()) {
        std::ofstream meta(config.output_path + ".meta.json");
        if (!meta) {
            throw std::runtime_error("cannot write metadata next to " + config.output_path);
        }
        write_metadata(meta, result);
    }
    return result.failures;
}

}  // namespace homog
