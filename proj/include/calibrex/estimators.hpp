#pragma once

// An estimator together with the rule that picks its hyperparameter, so the
// same policy can be applied to evaluation sets of any size.

#include <optional>
#include <string>

#include "calibrex/binning.hpp"
#include "calibrex/core.hpp"
#include "calibrex/density.hpp"

namespace calibrex {

struct EstimatorPolicy {
    enum class Family { binned, density };

    Family family = Family::binned;
    BinningKind binning = BinningKind::uniform;
    MappingKind mapping = MappingKind::one_bin;
    /// Unset: round(sqrt(N)) bins.
    std::optional<std::size_t> bins;
    /// Unset: Silverman's rule on the evaluated scores.
    std::optional<double> bandwidth;

    static EstimatorPolicy binned_policy(BinningKind binning, MappingKind mapping,
                                         std::optional<std::size_t> bins);
    static EstimatorPolicy density_policy(std::optional<double> bandwidth);

    /// Accepts "legacy", "adaptive", "convex", "adaptive-convex", "kde" and
    /// the ids ECE_l, ECE_a, ECE_c, ECE_ac, ECE_d.
    static EstimatorPolicy from_name(const std::string& name);

    std::string id() const;
    /// "bins=15", "bins=sqrt", "bandwidth=silverman", "bandwidth=0.03".
    std::string descriptor() const;

    /// Number of bins used on n samples. Adaptive binning never uses more
    /// bins than samples.
    std::size_t resolve_bins(std::size_t n_samples) const;
};

EceEstimate estimate(const EstimatorPolicy& policy, const ScoredEvents& events, const Grid& grid);

/// Estimate in any setting; class-wise averages the per-class estimates.
EceEstimate estimate(const EstimatorPolicy& policy, const LabeledScores& data,
                     const CalibrationSetting& setting, const Grid& grid);

}  // namespace calibrex
