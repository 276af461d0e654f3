// Command-line harness for the two-scale iteration experiments.

#include <exception>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "homog/experiments.hpp"

namespace {

struct Options {
    homog::ExperimentConfig config;
    std::string inner_solver = "cholesky";
    std::string rve_bc = "dirichlet-affine";
    bool lumped_mass = false;
    bool keep_going = false;
};

CLI::App* add_mode(CLI::App& app, Options& o, const std::string& name, const std::string& help,
                   homog::ExperimentConfig defaults) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->callback([&o, defaults, sub] {
        // Fill in mode defaults for options the user did not give.
        if (sub->count("--r") == 0) o.config.r_values = defaults.r_values;
        if (sub->count("--lambda") == 0) o.config.lambda_values = defaults.lambda_values;
        if (sub->count("--seeds") == 0) o.config.seeds = defaults.seeds;
        if (sub->count("--refine") == 0) o.config.refine = defaults.refine;
        o.config.mode = defaults.mode;
    });
    sub->add_option("--r", o.config.r_values, "Domain side length(s) in cells")->take_all();
    sub->add_option("--lambda", o.config.lambda_values, "Scale-separation parameter(s)")->take_all();
    sub->add_option("--seeds", o.config.seeds, "Number of coefficient realizations");
    sub->add_option("--base-seed", o.config.base_seed, "Seed of the first realization");
    sub->add_option("--refine", o.config.refine, "Uniform refinement level k (h = 2^-k)");
    sub->add_option("--tol", o.config.tol, "Relative H1 convergence threshold");
    sub->add_option("--inner-tol", o.config.inner_tol, "Sub-solve relative residual tolerance");
    sub->add_option("--max-iter", o.config.max_iter, "Maximum number of outer iterations");
    sub->add_option("--inner-solver", o.inner_solver, "Sub-solver: cholesky, cg or pcg-jacobi")
        ->check(CLI::IsMember({"cholesky", "cg", "pcg-jacobi"}));
    sub->add_flag("--lumped-mass", o.lumped_mass, "Use the lumped mass matrix for the lambda^2 term");
    sub->add_option("--lo", o.config.lo, "Low coefficient value");
    sub->add_option("--hi", o.config.hi, "High coefficient value");
    sub->add_option("--rve-bc", o.rve_bc, "Cell-problem boundary condition (rve)")
        ->check(CLI::IsMember({"dirichlet-affine", "periodic"}));
    sub->add_option("--out", o.config.output_path, "Output file (CSV; JSON for rve)");
    sub->add_option("--workers", o.config.workers, "Concurrent runs");
    sub->add_flag("--keep-going", o.keep_going, "Exit 0 even if some runs failed");
    return sub;
}

homog::ExperimentConfig defaults(homog::Mode mode, std::vector<int> r, std::vector<double> lambda,
                                 int seeds, int refine = 3) {
    homog::ExperimentConfig c;
    c.mode = mode;
    c.r_values = std::move(r);
    c.lambda_values = std::move(lambda);
    c.seeds = seeds;
    c.refine = refine;
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Homogenization-based iterative solver experiments on the random checkerboard"};
    app.require_subcommand(1);
    Options o;

    using homog::Mode;
    add_mode(app, o, "run", "Single run: per-iteration H1 errors and rho",
             defaults(Mode::single, {100}, {0.1}, 1));
    add_mode(app, o, "sweep-r", "Mean rho over seeds as a function of r",
             defaults(Mode::sweep_r, {20, 40, 80, 160}, {0.1, 0.2, 0.4}, 10));
    add_mode(app, o, "sweep-lambda", "Mean rho over seeds as a function of lambda",
             defaults(Mode::sweep_lambda, {100}, {0.05, 0.1, 0.2, 0.3, 0.4, 0.5}, 10));
    add_mode(app, o, "histogram", "Per-seed rho distribution",
             defaults(Mode::histogram, {100}, {0.1}, 100));
    add_mode(app, o, "rve", "Estimate the homogenized matrix from cell problems",
             defaults(Mode::rve, {64}, {0.1}, 8, 2));
    add_mode(app, o, "fem-verify", "Manufactured-solution H1 convergence check",
             defaults(Mode::fem_verify, {8}, {0.1}, 1));

    CLI11_PARSE(app, argc, argv);

    try {
        o.config.inner_solver = homog::parse_inner_solver(o.inner_solver);
        o.config.mass = o.lumped_mass ? homog::MassKind::lumped : homog::MassKind::consistent;
        o.config.rve_bc = o.rve_bc == "periodic" ? homog::RveBoundary::periodic
                                                 : homog::RveBoundary::dirichlet_affine;
        const int failures = homog::run_experiment(o.config, std::cout);
        if (failures > 0) {
            std::cerr << failures << " run(s) failed\n";
            return o.keep_going ? 0 : 2;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
