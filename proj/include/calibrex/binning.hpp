#pragma once

// Binning-based ECE estimators. Every estimator here is the same weighted sum
//
//     ECE = (1/N) * sum_j | sum_i W_ij (hit_i - score_i) |
//
// and differs only in how the bins are laid out (uniform or equal-frequency)
// and how samples are spread over them (one bin, or linearly between the two
// nearest bin centres).

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "calibrex/core.hpp"

namespace calibrex {

enum class BinningKind { uniform, adaptive };
enum class MappingKind { one_bin, convex };

/// Right thresholds t(1..B) of the bins; the left edge of bin 1 is 0.
/// Bin j covers (t(j-1), t(j)], except bin 1 which also holds 0.
class BinningScheme {
public:
    BinningScheme(std::vector<double> thresholds, BinningKind kind, std::size_t requested_bins);

    std::size_t size() const noexcept { return thresholds_.size(); }
    const std::vector<double>& thresholds() const noexcept { return thresholds_; }
    BinningKind kind() const noexcept { return kind_; }

    double lower(std::size_t j) const noexcept { return j == 0 ? 0.0 : thresholds_[j - 1]; }
    double upper(std::size_t j) const noexcept { return thresholds_[j]; }
    double center(std::size_t j) const noexcept { return 0.5 * (lower(j) + upper(j)); }

    /// Bins lost to merging tied adaptive thresholds.
    std::size_t merged_bins() const noexcept { return requested_ - thresholds_.size(); }

    /// Index of the bin containing s.
    std::size_t locate(double s) const noexcept;

private:
    std::vector<double> thresholds_;
    BinningKind kind_;
    std::size_t requested_;
};

BinningScheme build_uniform_binning(std::size_t n_bins);

/// Equal-frequency binning. The threshold after bin i sits midway between
/// the order statistics of rank floor(iN/B) and floor(iN/B) + 1; when those
/// two are tied the threshold cannot separate them and the two bins merge.
BinningScheme build_adaptive_binning(std::span<const double> scores, std::size_t n_bins);

/// Sample-to-bin weights, at most two nonzeros per row, rows summing to 1.
class AffectationMapping {
public:
    struct Row {
        std::array<std::size_t, 2> bin{};
        std::array<double, 2> weight{};
        std::size_t count = 0;
    };

    AffectationMapping(std::vector<Row> rows, std::size_t n_bins, MappingKind kind,
                       BinningKind binning);

    std::size_t size() const noexcept { return rows_.size(); }
    std::size_t n_bins() const noexcept { return n_bins_; }
    MappingKind kind() const noexcept { return kind_; }
    BinningKind binning_kind() const noexcept { return binning_; }
    const Row& row(std::size_t i) const noexcept { return rows_[i]; }

    /// Dense N x B copy, row-major. For tests and small inputs.
    std::vector<double> dense() const;

private:
    std::vector<Row> rows_;
    std::size_t n_bins_;
    MappingKind kind_;
    BinningKind binning_;
};

AffectationMapping build_one_bin_mapping(std::span<const double> scores, const BinningScheme& binning);

/// Linear binning between bin centres c_j = (t(j-1) + t(j)) / 2. Scores below
/// the first centre or above the last go entirely to the end bins.
AffectationMapping build_convex_mapping(std::span<const double> scores, const BinningScheme& binning);

AffectationMapping build_mapping(std::span<const double> scores, const BinningScheme& binning,
                                 MappingKind kind);

/// "ECE_l", "ECE_a", "ECE_c" or "ECE_ac".
const char* binned_estimator_id(BinningKind binning, MappingKind mapping) noexcept;

EceEstimate binned_ece(const ScoredEvents& events, const AffectationMapping& mapping);

/// Largest per-bin gap, each bin's deviation divided by its weight mass.
/// Bins without mass are skipped.
EceEstimate binned_mce(const ScoredEvents& events, const AffectationMapping& mapping);

struct DiagramPoint {
    double mean_score = 0.0;
    double event_rate = 0.0;
    double weight_mass = 0.0;
    bool empty = true;
};

std::vector<DiagramPoint> diagram_points(const ScoredEvents& events, const AffectationMapping& mapping);

/// round(sqrt(N)), at least 1.
std::size_t sqrt_bin_heuristic(std::size_t n_samples);

}  // namespace calibrex
