#pragma once

// Kernel density estimates of score distributions on [0, 1], the local
// calibration error built from them, and the density-based ECE estimator.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "calibrex/core.hpp"

namespace calibrex {

inline constexpr std::size_t kDefaultGridPoints = 4096;

inline constexpr double kMaxGridStep = 0.0003;

/// Uniform subdivision of [0, 1] including both end points, with a step no
/// coarser than kMaxGridStep.
class Grid {
public:
    explicit Grid(std::size_t n_points = kDefaultGridPoints);

    std::size_t size() const noexcept { return n_; }
    double step() const noexcept { return step_; }
    double point(std::size_t i) const noexcept {
        return static_cast<double>(i) / static_cast<double>(n_ - 1);
    }
    std::vector<double> points() const;

private:
    std::size_t n_;
    double step_;
};

struct DensityEstimate {
    Grid grid;
    std::vector<double> values;
    double bandwidth = 0.0;

    /// Trapezoidal integral over [0, 1].
    double integral() const;
};

/// Trapezoidal rule on a grid.
double trapezoid(const Grid& grid, std::span<const double> values);

/// 0.9 * min(sd, IQR / 1.34) * N^(-1/5); falls back to 0.01 * N^(-1/5) when
/// the spread is zero. Requires N >= 2.
double silverman_bandwidth(std::span<const double> scores);

/// Gaussian KDE restricted to [0, 1]. Every sample is reflected about 0 and
/// about 1, the 3N points are binned onto the grid extended past the domain,
/// convolved with the kernel through an FFT, and the result is truncated back
/// to [0, 1].
DensityEstimate kde_mirrored(std::span<const double> scores, double bandwidth, const Grid& grid);

enum class Degeneracy : std::uint8_t { none, all_hits, all_misses };

struct ReliabilityBands {
    std::vector<double> lower;
    std::vector<double> median;
    std::vector<double> upper;
    double low_pct = 0.0;
    double high_pct = 0.0;
};

struct ReliabilityCurve {
    Grid grid;
    std::vector<double> lce;
    std::vector<double> rel;
    std::optional<ReliabilityBands> bands;
    Degeneracy degeneracy = Degeneracy::none;
    double bandwidth = 0.0;
};

/// Density floor below which the posterior ratio is not evaluated.
double density_floor(const Grid& grid) noexcept;

/// P(hit | s) - s from the Bayes rule prior * f(s | hit) / f(s), with both
/// densities sharing one bandwidth. The posterior is clamped to [0, 1] and
/// held at the nearest well-defined value where f(s) falls under the floor.
ReliabilityCurve estimate_lce(const ScoredEvents& events, double bandwidth, const Grid& grid);

struct BootstrapOptions {
    std::size_t n_boot = 200;
    double low_pct = 5.0;
    double high_pct = 95.0;
    std::uint64_t seed = 0;
};

/// Pointwise median and percentile bands of the reliability curve over
/// bootstrap resamples of the events. Deterministic for a given seed.
ReliabilityCurve bootstrap_reliability(const ScoredEvents& events, double bandwidth, const Grid& grid,
                                       const BootstrapOptions& options);

/// Integral over [0, 1] of f(s) * |LCE(s)|, evaluated as
/// |prior * f(s | hit) - s * f(s)| so that no density ratio is formed.
EceEstimate ece_d(const ScoredEvents& events, double bandwidth, const Grid& grid);

}  // namespace calibrex
