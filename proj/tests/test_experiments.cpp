#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "homog/experiments.hpp"
#include "json.hpp"

using namespace homog;

namespace {

ExperimentConfig small_grid(Mode mode) {
    ExperimentConfig c;
    c.mode = mode;
    c.r_values = {10};
    c.lambda_values = {0.4};
    c.seeds = 3;
    c.refine = 1;
    return c;
}

// Row text without the trailing wall_ms field.
std::string without_timing(const std::string& line) { return line.substr(0, line.rfind(',')); }

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        lines.push_back(line);
    }
    return lines;
}

int field_count(const std::string& line) {
    return 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
}

}  // namespace

TEST_CASE("csv header and row layout") {
    CHECK(std::string(kCsvHeader) == "mode,r,k,lambda,seed,iter,h1_error,rel_error,rho,converged,wall_ms");
    ResultRow row;
    row.mode = "sweep-r";
    row.r = 40;
    row.k = 3;
    row.lambda = 0.2;
    row.seed = 7;
    row.h1_error = 1.5e-3;
    row.rel_error = 0.25;
    row.rho = -2.5;
    row.converged = true;
    row.wall_ms = 12.34567;
    CHECK(format_row(row) == "sweep-r,40,3,0.2,7,,0.0015,0.25,-2.5,1,12.346");

    ResultRow aggregate;
    aggregate.mode = "histogram";
    aggregate.r = 100;
    aggregate.lambda = 0.1;
    aggregate.rho = -3.0;
    CHECK(format_row(aggregate) == "histogram,100,0,0.1,,,,,-3,,0.000");
    CHECK(field_count(format_row(aggregate)) == 11);

    std::ostringstream out;
    CsvWriter writer(out);
    writer.write(row);
    CHECK(lines_of(out.str()).size() == 2);
    CHECK(lines_of(out.str())[0] == kCsvHeader);
}

TEST_CASE("mode names") {
    CHECK(to_string(Mode::single) == "run");
    CHECK(to_string(Mode::sweep_r) == "sweep-r");
    CHECK(to_string(Mode::sweep_lambda) == "sweep-lambda");
    CHECK(to_string(Mode::histogram) == "histogram");
    CHECK(to_string(Mode::rve) == "rve");
    CHECK(to_string(Mode::fem_verify) == "fem-verify");
}

TEST_CASE("configuration normalization") {
    ExperimentConfig c = small_grid(Mode::sweep_lambda);
    c.lambda_values = {0.2, 0.4, 0.2, 0.3, 0.4};
    c.r_values = {10, 10};
    const ExperimentConfig n = normalized(c);
    CHECK(n.lambda_values == std::vector<double>{0.2, 0.4, 0.3});
    CHECK(n.r_values == std::vector<int>{10});

    ExperimentConfig bad = small_grid(Mode::sweep_r);
    bad.seeds = 0;
    CHECK_THROWS_AS(normalized(bad), std::invalid_argument);
    bad = small_grid(Mode::sweep_lambda);
    bad.lambda_values = {0.7};
    CHECK_THROWS_AS(normalized(bad), std::invalid_argument);
    bad = small_grid(Mode::sweep_r);
    bad.lambda_values = {};
    CHECK_THROWS_AS(normalized(bad), std::invalid_argument);
    bad = small_grid(Mode::single);
    CHECK_THROWS_AS(normalized(bad), std::invalid_argument);
    bad = small_grid(Mode::histogram);
    bad.seeds = 1;
    CHECK_THROWS_AS(normalized(bad), std::invalid_argument);
    bad = small_grid(Mode::rve);
    bad.r_values = {4};
    CHECK_THROWS_AS(normalized(bad), std::invalid_argument);
    bad = small_grid(Mode::sweep_r);
    bad.r_values = {0};
    CHECK_THROWS_AS(normalized(bad), std::invalid_argument);

    c.base_seed = 100;
    CHECK(seed_of(c, 0) == 100);
    CHECK(seed_of(c, 4) == 104);
}

TEST_CASE("pre-asymptotic regime") {
    CHECK(is_pre_asymptotic(50, 0.1));
    CHECK_FALSE(is_pre_asymptotic(100, 0.1));
    CHECK_FALSE(is_pre_asymptotic(30, 0.4));
}

TEST_CASE("single run emits iteration rows and a summary") {
    ExperimentConfig c = small_grid(Mode::single);
    c.seeds = 1;
    std::ostringstream out;
    CsvWriter csv(out);
    const ExperimentResult result = run_single(c, &csv);
    REQUIRE(result.runs.size() == 1);
    const RunOutcome& run = result.runs[0];
    CHECK_FALSE(run.failed());
    CHECK(run.record.converged());
    CHECK(result.aggregates.size() == 1);

    const std::vector<std::string> lines = lines_of(out.str());
    // Header, one row per recorded error, then the summary.
    CHECK(lines.size() == 1 + run.record.errors.size() + 1);
    CHECK(lines[1].rfind("run,10,1,0.4,0,1,", 0) == 0);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        CHECK(field_count(lines[i]) == 11);
    }
    CHECK(lines.back().find(",,") != std::string::npos);
}

TEST_CASE("grid runs are deterministic and independent of worker count") {
    ExperimentConfig c = small_grid(Mode::sweep_r);
    c.r_values = {10, 12};
    c.lambda_values = {0.3, 0.5};
    std::ostringstream a;
    std::ostringstream b;
    std::ostringstream d;
    {
        CsvWriter csv(a);
        run_sweep_r(c, &csv);
    }
    {
        CsvWriter csv(b);
        run_sweep_r(c, &csv);
    }
    c.workers = 2;
    {
        CsvWriter csv(d);
        run_sweep_r(c, &csv);
    }
    const auto la = lines_of(a.str());
    const auto lb = lines_of(b.str());
    const auto ld = lines_of(d.str());
    REQUIRE(la.size() == lb.size());
    REQUIRE(la.size() == ld.size());
    // 2 r values x 3 seeds x 2 lambdas summaries, plus 4 aggregates and the header.
    CHECK(la.size() == 1 + 12 + 4);
    for (std::size_t i = 0; i < la.size(); ++i) {
        CHECK(without_timing(la[i]) == without_timing(lb[i]));
        CHECK(without_timing(la[i]) == without_timing(ld[i]));
    }
}

TEST_CASE("histogram aggregates the spread over seeds") {
    ExperimentConfig c = small_grid(Mode::histogram);
    c.seeds = 6;
    const ExperimentResult result = run_histogram(c);
    REQUIRE(result.aggregates.size() == 1);
    const AggregateRow& agg = result.aggregates[0];
    CHECK(agg.n_runs == 6);
    CHECK(agg.n_converged == 6);
    CHECK(agg.estimate.samples.size() == 6);
    CHECK(agg.estimate.stddev > 0.0);
    CHECK(agg.exp_mean_rho == doctest::Approx(std::exp(agg.estimate.mean)));
    CHECK(agg.predicted_shape == doctest::Approx(predicted_contraction_shape(0.4)));
    CHECK(agg.pre_asymptotic);
    bool flagged = false;
    for (const std::string& w : result.warnings) {
        flagged = flagged || w.find("pre-asymptotic") != std::string::npos;
    }
    CHECK(flagged);
}

TEST_CASE("small lambda is run but warned about") {
    ExperimentConfig c = small_grid(Mode::sweep_lambda);
    c.lambda_values = {0.05};
    c.seeds = 1;
    const ExperimentResult result = run_sweep_lambda(c);
    CHECK(result.failures == 0);
    bool warned = false;
    for (const std::string& w : result.warnings) {
        warned = warned || w.find("below 1/r") != std::string::npos;
    }
    CHECK(warned);
}

TEST_CASE("output files and metadata") {
    const auto dir = std::filesystem::temp_directory_path() / "homog_test_experiments";
    std::filesystem::create_directories(dir);
    ExperimentConfig c = small_grid(Mode::sweep_lambda);
    c.lambda_values = {0.3, 0.5};
    c.seeds = 2;
    c.output_path = (dir / "sweep.csv").string();
    std::ostringstream log;
    CHECK(run_experiment(c, log) == 0);

    std::ifstream csv(c.output_path);
    std::string header;
    std::getline(csv, header);
    CHECK(header == kCsvHeader);

    std::ifstream meta_file(c.output_path + ".meta.json");
    REQUIRE(meta_file);
    const auto meta = nlohmann::json::parse(meta_file);
    CHECK(meta["schema_version"] == kCsvSchemaVersion);
    CHECK(meta["config"]["mode"] == "sweep-lambda");
    CHECK(meta["aggregates"].size() == 2);
    CHECK(meta["runs"].size() == 4);
    for (const auto& run : meta["runs"]) {
        CHECK(run["u0_ms"].get<double>() >= 0.0);
        CHECK(run.contains("rho"));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("rve mode") {
    ExperimentConfig c;
    c.mode = Mode::rve;
    c.r_values = {8};
    c.seeds = 2;
    c.refine = 1;
    c.rve_bc = RveBoundary::periodic;
    const RveResult result = run_rve(c);
    CHECK(result.block == 8);
    REQUIRE(result.samples.size() == 2);
    CHECK(result.samples[1].seed == 1);
    CHECK(result.mean.xx == doctest::Approx(0.5 * (result.samples[0].abar.xx + result.samples[1].abar.xx)));
    CHECK(result.analytic.xx == 3.0);

    std::ostringstream out;
    write_rve_json(out, c, result);
    const auto doc = nlohmann::json::parse(out.str());
    CHECK(doc["samples"].size() == 2);
    CHECK(doc["bc"] == "periodic");
}

TEST_CASE("finite element verification levels") {
    const FemVerifyLevel coarse = fem_verify_level(4, 1);
    const FemVerifyLevel fine = fem_verify_level(4, 2);
    CHECK(coarse.h1_error / fine.h1_error == doctest::Approx(2.0).epsilon(0.1));
    CHECK(fine.rel_error == doctest::Approx(fine.h1_error / (M_PI / std::sqrt(2.0))));

    ExperimentConfig c;
    c.mode = Mode::fem_verify;
    c.r_values = {4};
    c.refine = 2;
    std::ostringstream out;
    CsvWriter csv(out);
    CHECK(run_fem_verify(c, &csv).size() == 3);
    CHECK(lines_of(out.str()).size() == 4);
}
