#pragma once

// Estimator assessment against a ground truth: synthetic distributions,
// trained scorers, a fine-grained reference ECE on a large holdout, and the
// percentile of relative errors over bootstrapped evaluation sets.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "calibrex/core.hpp"
#include "calibrex/density.hpp"
#include "calibrex/estimators.hpp"
#include "calibrex/synth.hpp"

namespace calibrex::bench {

/// Deterministic seed for a coordinate tuple, via std::seed_seq.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> coords);

/// FNV-1a 64-bit as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

struct ModelConfig {
    enum class Kind { logistic_regression, gaussian_naive_bayes, analytic_posterior, distorted_posterior };

    Kind kind = Kind::logistic_regression;
    synth::LogisticHyper logistic;
    double temperature = 1.0;

    std::string name() const;
};

struct BenchConfig {
    std::vector<std::size_t> classes;
    std::vector<std::size_t> dims;
    std::size_t specs_per_combination = 1;
    std::size_t modes_per_class = synth::kDefaultModesPerClass;
    std::vector<ModelConfig> models;
    std::size_t train_size = 300;
    std::size_t train_splits = 1;
    std::size_t holdout_size = 200000;
    std::size_t truth_bins = 2000;
    std::vector<std::size_t> eval_sizes;
    std::size_t n_boot_eval = 200;
    double error_percentile = 95.0;
    std::vector<EstimatorPolicy> estimators;
    std::vector<CalibrationSetting> settings;
    std::uint64_t seed = 0;
    std::size_t grid_points = kDefaultGridPoints;
    std::string note;

    /// Throws std::invalid_argument on a malformed or inconsistent config.
    static BenchConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    void validate() const;
    std::string hash() const;
    std::size_t n_cells() const;
};

/// ECE_l with truth_bins uniform bins on the scored holdout.
double ground_truth_ece(const LabeledScores& holdout, std::size_t truth_bins,
                        const CalibrationSetting& setting);

/// Samples a fresh holdout from the mixture, scores it and returns the
/// reference ECE.
double ground_truth_ece(const synth::Scorer& scorer, const synth::MixtureSpec& spec,
                        std::size_t holdout_size, std::size_t truth_bins,
                        const CalibrationSetting& setting, std::uint64_t seed);

struct ErrorPercentile {
    double value = 0.0;
    /// Truth was zero: value is a percentile of absolute errors.
    bool absolute = false;
};

struct EvalPlan {
    std::size_t eval_size = 0;
    std::size_t n_boot = 200;
    double error_percentile = 95.0;
    std::uint64_t seed = 0;
};

/// Error percentile of every policy over the same n_boot evaluation sets
/// drawn with replacement from the pool.
std::vector<ErrorPercentile> evaluate_estimators(const std::vector<EstimatorPolicy>& policies,
                                                 const LabeledScores& pool,
                                                 const CalibrationSetting& setting, double truth,
                                                 const EvalPlan& plan, const Grid& grid);

ErrorPercentile evaluate_estimator(const EstimatorPolicy& policy, const LabeledScores& pool,
                                   const CalibrationSetting& setting, double truth,
                                   const EvalPlan& plan, const Grid& grid);

/// Approximation errors |estimate - truth| / truth for pre-computed
/// estimates, then their percentile.
ErrorPercentile error_percentile(const std::vector<double>& estimates, double truth, double pct);

struct CellKey {
    std::size_t n_classes = 0;
    std::size_t dim = 0;
    std::size_t spec_index = 0;
    std::size_t model_index = 0;
    std::size_t split = 0;

    std::string label() const;
};

struct CellResult {
    CellKey key;
    bool ok = false;
    std::string error;
    std::vector<double> truth;                         // per setting
    std::vector<bool> absolute;                        // per setting
    std::vector<std::vector<std::vector<double>>> p95; // [setting][estimator][size]

    nlohmann::json to_json(const std::string& config_hash) const;
    static CellResult from_json(const nlohmann::json& j);
};

/// Computes one (spec, model, split) cell. Failures are captured in the
/// result, never thrown.
CellResult run_cell(const BenchConfig& config, const CellKey& key);

struct ReportRow {
    std::string setting;
    std::string estimator;
    std::string hyperparams;
    std::size_t eval_size = 0;
    double median_p95_error = 0.0;
    std::size_t n_distributions = 0;
};

struct BenchmarkReport {
    std::vector<ReportRow> rows;
    nlohmann::json provenance;

    std::string to_csv() const;
};

struct RunOptions {
    /// Checkpoint directory; empty disables checkpointing.
    std::filesystem::path checkpoint_dir;
    bool resume = false;
    std::size_t workers = 1;
    /// Called after each cell with (cells done, cells total); may be called
    /// from any worker thread, but never concurrently.
    std::function<void(std::size_t, std::size_t)> progress;
};

std::vector<CellKey> enumerate_cells(const BenchConfig& config);

/// Median over cells per (setting, estimator, size), skipping failed cells
/// and cells whose truth was zero.
BenchmarkReport assemble_report(const BenchConfig& config, const std::vector<CellResult>& cells);

BenchmarkReport run_benchmark(const BenchConfig& config, const RunOptions& options = {});

extern const char* const kVersion;

}  // namespace calibrex::bench
