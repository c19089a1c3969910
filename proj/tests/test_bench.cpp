#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>

#include <gtest/gtest.h>

#include "calibrex/bench.hpp"
#include "calibrex/stats.hpp"
#include "support/property.hpp"

using namespace calibrex;
using namespace calibrex::bench;
using nlohmann::json;

namespace fs = std::filesystem;

namespace {

json small_config_json() {
    return json::parse(R"({
        "classes": [2],
        "dims": [2],
        "specs_per_combination": 1,
        "models": [{"kind": "distorted_posterior", "temperature": 2.0}],
        "train_size": 50,
        "train_splits": 1,
        "holdout_size": 4000,
        "truth_bins": 40,
        "eval_sizes": [30],
        "n_boot_eval": 20,
        "error_percentile": 95,
        "estimators": [{"estimator": "ECE_l", "bins": 5}],
        "settings": ["confidence"],
        "seed": 5
    })");
}

// Eight cells: two dims, two models, two splits; both settings.
json grid_config_json() {
    auto j = small_config_json();
    j["dims"] = {1, 2};
    j["train_splits"] = 2;
    j["models"] = json::parse(R"([{"kind": "logistic_regression", "epochs": 200},
                                  {"kind": "gaussian_naive_bayes"}])");
    j["eval_sizes"] = {30, 60};
    j["estimators"] = json::parse(R"([{"estimator": "ECE_c", "bins": "sqrt"},
                                      {"estimator": "ECE_d", "bandwidth": "silverman"}])");
    j["settings"] = {"confidence", "classwise"};
    return j;
}

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("calibrex_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

CellResult fake_cell(std::size_t index, bool ok, std::vector<double> truth, double p95) {
    CellResult r;
    r.key = {2, 2, index, 0, 0};
    r.ok = ok;
    if (!ok) {
        r.error = "boom";
        return r;
    }
    r.truth = truth;
    for (double t : truth) r.absolute.push_back(t == 0.0);
    r.p95.assign(truth.size(), {{p95}});
    return r;
}

}  // namespace

TEST(DeriveSeed, DeterministicAndCoordinateSensitive) {
    EXPECT_EQ(derive_seed(7, {1, 2, 3}), derive_seed(7, {1, 2, 3}));
    std::set<std::uint64_t> seen;
    for (std::uint64_t m : {0ull, 1ull, 7ull})
        for (std::uint64_t a = 0; a < 5; ++a)
            for (std::uint64_t b = 0; b < 5; ++b) seen.insert(derive_seed(m, {a, b}));
    EXPECT_EQ(seen.size(), 75u);
    EXPECT_NE(derive_seed(7, {1, 2}), derive_seed(7, {2, 1}));
    EXPECT_NE(derive_seed(7, {1}), derive_seed(7, {1, 0}));
    EXPECT_NE(derive_seed(1ull << 32, {}), derive_seed(1, {}));
}

TEST(Fnv1a, KnownVectors) {
    EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
    EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(ErrorPercentile, Examples) {
    std::vector<double> est(199, 1.1);
    est.push_back(2.0);  // relative errors: 0.1 x 199, 1.0 x 1
    const auto e = error_percentile(est, 1.0, 95.0);
    EXPECT_NEAR(e.value, 0.1, 1e-12);
    EXPECT_FALSE(e.absolute);

    EXPECT_EQ(error_percentile(std::vector<double>(200, 0.37), 0.37, 95.0).value, 0.0);

    const auto z = error_percentile({0.0, 0.02, 0.04}, 0.0, 50.0);
    EXPECT_TRUE(z.absolute);
    EXPECT_NEAR(z.value, 0.02, 1e-15);
}

TEST(EvaluateEstimator, ExactEstimateGivesZeroError) {
    // identical rows: every bootstrap set is the pool itself, ECE = 1 - 0.7
    const auto pool = validate(std::vector<std::vector<double>>(50, {0.7, 0.3}), std::vector<std::size_t>(50, 0));
    const auto policy = EstimatorPolicy::binned_policy(BinningKind::uniform, MappingKind::one_bin, 10);
    const auto e = evaluate_estimator(policy, pool, CalibrationSetting::confidence(), 0.3, {20, 30, 95, 1}, Grid{});
    EXPECT_LT(e.value, 1e-12);
    EXPECT_FALSE(e.absolute);
}

TEST(EvaluateEstimator, Errors) {
    const auto pool = validate({{0.6, 0.4}, {0.2, 0.8}}, {0, 1});
    const auto policy = EstimatorPolicy::density_policy(std::nullopt);
    const auto conf = CalibrationSetting::confidence();
    EXPECT_THROW(evaluate_estimator(policy, pool, conf, 0.1, {3, 10, 95, 0}, Grid{}), std::invalid_argument);
    EXPECT_THROW(evaluate_estimator(policy, pool, conf, 0.1, {0, 10, 95, 0}, Grid{}), std::invalid_argument);
    EXPECT_THROW(evaluate_estimator(policy, pool, conf, 0.1, {2, 0, 95, 0}, Grid{}), std::invalid_argument);
    EXPECT_THROW(evaluate_estimator(policy, pool, conf, -0.1, {2, 10, 95, 0}, Grid{}), std::invalid_argument);
}

TEST(EvaluateEstimator, SharedDrawsMatchSingleRuns) {
    const auto spec = std::make_shared<const synth::MixtureSpec>(synth::sample_mixture_spec(3, 2, 4));
    const auto pool = synth::make_posterior_scorer(spec, 2.0).score_dataset(synth::sample_dataset(*spec, 3000, 5));
    const std::vector<EstimatorPolicy> policies{EstimatorPolicy::from_name("ECE_a"), EstimatorPolicy::from_name("ECE_d")};
    const EvalPlan plan{40, 15, 90, 77};
    const auto setting = CalibrationSetting::class_wise();
    const auto both = evaluate_estimators(policies, pool, setting, 0.1, plan, Grid{});
    for (std::size_t k = 0; k < policies.size(); ++k)
        EXPECT_EQ(both[k].value, evaluate_estimator(policies[k], pool, setting, 0.1, plan, Grid{}).value);
}

TEST(GroundTruth, FreshHoldoutOverloadAgrees) {
    const auto spec = std::make_shared<const synth::MixtureSpec>(synth::sample_mixture_spec(2, 3, 8));
    const auto scorer = synth::make_posterior_scorer(spec, 0.5);
    const auto setting = CalibrationSetting::confidence();
    const double a = ground_truth_ece(scorer, *spec, 20000, 100, setting, 9);
    const double b = ground_truth_ece(scorer.score_dataset(synth::sample_dataset(*spec, 20000, 9)), 100, setting);
    EXPECT_EQ(a, b);
    EXPECT_GT(a, 0.0);
}

TEST(BenchConfig, ShippedConfigsParse) {
    for (const char* name : {"desk.json", "paper.json"}) {
        std::ifstream in(fs::path(CALIBREX_SOURCE_DIR) / "configs" / name);
        ASSERT_TRUE(in) << name;
        const auto c = BenchConfig::from_json(json::parse(in));
        EXPECT_EQ(c.estimators.size(), 9u);
        EXPECT_EQ(c.settings.size(), 2u);
    }
    std::ifstream in(fs::path(CALIBREX_SOURCE_DIR) / "configs" / "paper.json");
    const auto paper = BenchConfig::from_json(json::parse(in));
    // 45 distributions x 4 models x 3 train sets
    EXPECT_EQ(paper.n_cells(), 540u);
    EXPECT_EQ(paper.truth_bins, 2000u);
    EXPECT_EQ(paper.holdout_size, 2000000u);
    EXPECT_EQ(paper.n_boot_eval, 200u);
    EXPECT_EQ(paper.eval_sizes.front(), 30u);
    EXPECT_EQ(paper.eval_sizes.back(), 500u);
}

TEST(BenchConfig, JsonRoundTrip) {
    const auto c = BenchConfig::from_json(grid_config_json());
    const auto again = BenchConfig::from_json(c.to_json());
    EXPECT_EQ(again.to_json(), c.to_json());
    EXPECT_EQ(again.hash(), c.hash());
    EXPECT_EQ(c.n_cells(), 8u);
    EXPECT_EQ(c.estimators[0].descriptor(), "bins=sqrt");
    EXPECT_EQ(c.estimators[1].descriptor(), "bandwidth=silverman");
    auto other = grid_config_json();
    other["seed"] = 6;
    EXPECT_NE(BenchConfig::from_json(other).hash(), c.hash());
}

TEST(BenchConfig, RejectsInvalid) {
    auto with = [](const char* key, json value) {
        auto j = small_config_json();
        j[key] = std::move(value);
        return j;
    };
    EXPECT_THROW(BenchConfig::from_json(with("bogus", 1)), std::invalid_argument);
    EXPECT_THROW(BenchConfig::from_json(with("eval_sizes", {30, 30})), std::invalid_argument);
    EXPECT_THROW(BenchConfig::from_json(with("eval_sizes", {60, 30})), std::invalid_argument);
    EXPECT_THROW(BenchConfig::from_json(with("eval_sizes", {30, 5000})), std::invalid_argument);
    EXPECT_THROW(BenchConfig::from_json(with("error_percentile", 100)), std::invalid_argument);
    EXPECT_THROW(BenchConfig::from_json(with("error_percentile", 0)), std::invalid_argument);
    EXPECT_THROW(BenchConfig::from_json(with("truth_bins", 4)), std::invalid_argument);
    EXPECT_THROW(BenchConfig::from_json(with("classes", {1})), std::invalid_argument);
    EXPECT_THROW(BenchConfig::from_json(with("settings", {"class:2"})), std::invalid_argument);
    EXPECT_THROW(BenchConfig::from_json(with("settings", {"nope"})), std::invalid_argument);
    EXPECT_THROW(BenchConfig::from_json(with("estimators", json::parse(R"([{"estimator": "ECE_d", "bins": 5}])"))),
                 std::invalid_argument);
    EXPECT_THROW(BenchConfig::from_json(with("estimators", json::parse(R"([{"estimator": "ECE_l", "bins": 0}])"))),
                 std::invalid_argument);
    EXPECT_THROW(BenchConfig::from_json(with("models", json::parse(R"([{"kind": "svm"}])"))), std::invalid_argument);
    EXPECT_THROW(BenchConfig::from_json(with("models", json::parse(R"([{"kind": "distorted_posterior", "temperature": 0}])"))),
                 std::invalid_argument);
    EXPECT_THROW(BenchConfig::from_json(with("grid_points", 100)), std::invalid_argument);
    EXPECT_THROW(BenchConfig::from_json(with("seed", "x")), std::invalid_argument);
    auto missing = small_config_json();
    missing.erase("models");
    EXPECT_THROW(BenchConfig::from_json(missing), std::invalid_argument);
    EXPECT_NO_THROW(BenchConfig::from_json(with("settings", {"class:1"})));
}

TEST(Benchmark, MinimalRunGivesOneRow) {
    const auto config = BenchConfig::from_json(small_config_json());
    const auto report = run_benchmark(config);
    ASSERT_EQ(report.rows.size(), 1u);
    const auto& row = report.rows[0];
    EXPECT_EQ(row.setting, "confidence");
    EXPECT_EQ(row.estimator, "ECE_l");
    EXPECT_EQ(row.hyperparams, "bins=5");
    EXPECT_EQ(row.eval_size, 30u);
    EXPECT_EQ(row.n_distributions, 1u);
    EXPECT_GE(row.median_p95_error, 0.0);
    const auto csv = report.to_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "setting,estimator,hyperparams,eval_size,median_p95_error,n_distributions");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
    EXPECT_EQ(report.provenance.at("config_hash"), config.hash());
    EXPECT_EQ(report.provenance.at("seed"), 5u);
    EXPECT_EQ(report.provenance.at("version"), kVersion);
}

TEST(Benchmark, FullRowCoverage) {
    const auto config = BenchConfig::from_json(grid_config_json());
    const auto report = run_benchmark(config);
    ASSERT_EQ(report.rows.size(), 2u * 2u * 2u);
    std::set<std::tuple<std::string, std::string, std::size_t>> keys;
    for (const auto& r : report.rows) {
        keys.insert({r.setting, r.estimator, r.eval_size});
        EXPECT_EQ(r.n_distributions, 8u);
        EXPECT_GE(r.median_p95_error, 0.0);
    }
    EXPECT_EQ(keys.size(), report.rows.size());
}

TEST(Benchmark, ReportIndependentOfWorkerCount) {
    const auto config = BenchConfig::from_json(grid_config_json());
    const auto one = run_benchmark(config, {{}, false, 1, {}});
    const auto three = run_benchmark(config, {{}, false, 3, {}});
    EXPECT_EQ(one.to_csv(), three.to_csv());
    EXPECT_EQ(one.provenance.dump(), three.provenance.dump());
}

TEST(Benchmark, ResumeReusesCheckpoints) {
    const auto config = BenchConfig::from_json(small_config_json());
    const auto dir = fresh_dir("resume");
    std::size_t calls = 0;
    RunOptions opt{dir, false, 1, [&](std::size_t done, std::size_t total) {
                       ++calls;
                       EXPECT_EQ(total, 1u);
                       EXPECT_LE(done, total);
                   }};
    const auto first = run_benchmark(config, opt);
    EXPECT_EQ(calls, 1u);
    std::vector<fs::path> files(fs::directory_iterator(dir), {});
    ASSERT_EQ(files.size(), 1u);

    // Plant a sentinel in the checkpoint: a resumed run must report it.
    json cell;
    {
        std::ifstream in(files[0]);
        cell = json::parse(in);
    }
    cell["p95"][0][0][0] = 123.5;
    {
        std::ofstream out(files[0]);
        out << cell.dump();
    }
    opt.resume = true;
    EXPECT_EQ(run_benchmark(config, opt).rows[0].median_p95_error, 123.5);
    // without --resume the cell is recomputed
    opt.resume = false;
    EXPECT_EQ(run_benchmark(config, opt).to_csv(), first.to_csv());

    // a checkpoint from another config is ignored
    cell["config_hash"] = "0000000000000000";
    {
        std::ofstream out(files[0]);
        out << cell.dump();
    }
    opt.resume = true;
    EXPECT_EQ(run_benchmark(config, opt).to_csv(), first.to_csv());
    // so is a truncated one
    {
        std::ofstream out(files[0]);
        out << "{\"config_hash\":";
    }
    EXPECT_EQ(run_benchmark(config, opt).to_csv(), first.to_csv());
    fs::remove_all(dir);
}

TEST(Benchmark, CellRoundTripsThroughJson) {
    const auto config = BenchConfig::from_json(grid_config_json());
    const auto cell = run_cell(config, enumerate_cells(config)[3]);
    ASSERT_TRUE(cell.ok) << cell.error;
    const auto back = CellResult::from_json(cell.to_json("h"));
    EXPECT_EQ(back.key.label(), cell.key.label());
    EXPECT_EQ(back.truth, cell.truth);
    EXPECT_EQ(back.absolute, cell.absolute);
    EXPECT_EQ(back.p95, cell.p95);
}

TEST(Benchmark, FailedCellIsCapturedNotThrown) {
    auto j = small_config_json();
    j["models"] = json::parse(R"([{"kind": "logistic_regression"}])");
    j["train_size"] = 2;
    const auto config = BenchConfig::from_json(j);
    // find a split whose two training points share a class
    for (std::size_t split = 0; split < 64; ++split) {
        const auto cell = run_cell(config, {2, 2, 0, 0, split});
        if (!cell.ok) {
            EXPECT_NE(cell.error.find("single class"), std::string::npos) << cell.error;
            return;
        }
    }
    FAIL() << "no degenerate training split found";
}

TEST(AssembleReport, ExcludesFailedAndZeroTruthCells) {
    auto j = small_config_json();
    j["settings"] = {"confidence", "classwise"};
    const auto config = BenchConfig::from_json(j);
    const std::vector<CellResult> cells{fake_cell(0, true, {0.1, 0.2}, 1.0), fake_cell(1, false, {}, 0.0),
                                        fake_cell(2, true, {0.0, 0.2}, 3.0), fake_cell(3, true, {0.1, 0.2}, 2.0)};
    const auto report = assemble_report(config, cells);
    ASSERT_EQ(report.rows.size(), 2u);
    EXPECT_EQ(report.rows[0].n_distributions, 2u);
    EXPECT_EQ(report.rows[0].median_p95_error, 1.5);
    EXPECT_EQ(report.rows[1].n_distributions, 3u);
    EXPECT_EQ(report.rows[1].median_p95_error, 2.0);
    EXPECT_EQ(report.provenance.at("cells_total"), 4u);
    ASSERT_EQ(report.provenance.at("cells_failed").size(), 1u);
    EXPECT_EQ(report.provenance.at("cells_failed")[0].at("error"), "boom");
    ASSERT_EQ(report.provenance.at("cells_flagged_zero_truth").size(), 1u);
    EXPECT_EQ(report.provenance.at("cells_flagged_zero_truth")[0].at("setting"), "confidence");
}

TEST(AssembleReportProperties, MedianRobustToDroppingOneDistribution) {
    const auto config = BenchConfig::from_json(small_config_json());
    prop::for_all(51, prop::kCases, [&](std::mt19937_64& rng) {
        std::uniform_int_distribution<std::size_t> nd(2, 25);
        std::lognormal_distribution<double> err(0.0, 1.0);
        const auto n = nd(rng);
        std::vector<CellResult> cells;
        std::vector<double> values;
        for (std::size_t i = 0; i < n; ++i) {
            values.push_back(std::round(err(rng) * 8.0) / 8.0);  // ties on purpose
            cells.push_back(fake_cell(i, true, {0.1}, values.back()));
        }
        const double full = assemble_report(config, cells).rows[0].median_p95_error;
        ASSERT_EQ(full, stats::median(values));

        std::sort(values.begin(), values.end());
        const std::size_t lo = (n - 1) / 2, hi = n / 2;
        double bound = 0.0;
        for (std::size_t i = lo == 0 ? 0 : lo - 1; i <= std::min(hi, n - 2); ++i)
            bound = std::max(bound, values[i + 1] - values[i]);
        for (std::size_t drop = 0; drop < n; ++drop) {
            auto fewer = cells;
            fewer.erase(fewer.begin() + static_cast<std::ptrdiff_t>(drop));
            const double m = assemble_report(config, fewer).rows[0].median_p95_error;
            ASSERT_LE(std::abs(m - full), bound + 1e-15) << "dropping " << drop;
        }
    });
}
