#include "calibrex/binning.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace calibrex {

BinningScheme::BinningScheme(std::vector<double> thresholds, BinningKind kind,
                             std::size_t requested_bins)
    : thresholds_(std::move(thresholds)), kind_(kind), requested_(requested_bins) {
    if (thresholds_.empty())
        throw std::invalid_argument("a binning needs at least one bin");
    if (thresholds_.back() != 1.0)
        throw std::invalid_argument("last bin threshold must be exactly 1");
    if (!std::is_sorted(thresholds_.begin(), thresholds_.end()))
        throw std::invalid_argument("bin thresholds must be non-decreasing");
    requested_ = std::max(requested_, thresholds_.size());
}

std::size_t BinningScheme::locate(double s) const noexcept {
    const auto it = std::lower_bound(thresholds_.begin(), thresholds_.end(), s);
    if (it == thresholds_.end())
        return thresholds_.size() - 1;
    return static_cast<std::size_t>(it - thresholds_.begin());
}

BinningScheme build_uniform_binning(std::size_t n_bins) {
    if (n_bins == 0)
        throw std::invalid_argument("number of bins must be positive");
    std::vector<double> t(n_bins);
    for (std::size_t i = 0; i + 1 < n_bins; ++i)
        t[i] = static_cast<double>(i + 1) / static_cast<double>(n_bins);
    t.back() = 1.0;
    return {std::move(t), BinningKind::uniform, n_bins};
}

BinningScheme build_adaptive_binning(std::span<const double> scores, std::size_t n_bins) {
    if (scores.empty())
        throw std::invalid_argument("adaptive binning needs at least one score");
    if (n_bins == 0)
        throw std::invalid_argument("number of bins must be positive");
    const std::size_t n = scores.size();
    if (n_bins > n)
        throw std::invalid_argument("cannot split " + std::to_string(n) + " scores into " +
                                    std::to_string(n_bins) + " equal-frequency bins");

    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());

    std::vector<double> t;
    t.reserve(n_bins);
    for (std::size_t i = 1; i < n_bins; ++i) {
        // 1-based ranks k and k+1 are sorted[k-1] and sorted[k]
        const std::size_t k = i * n / n_bins;
        const double left = sorted[k - 1];
        const double right = sorted[k];
        if (left == right)
            continue;
        const double mid = left + 0.5 * (right - left);
        if (mid >= 1.0 || (!t.empty() && mid <= t.back()))
            continue;
        t.push_back(mid);
    }
    t.push_back(1.0);
    return {std::move(t), BinningKind::adaptive, n_bins};
}

AffectationMapping::AffectationMapping(std::vector<Row> rows, std::size_t n_bins, MappingKind kind,
                                       BinningKind binning)
    : rows_(std::move(rows)), n_bins_(n_bins), kind_(kind), binning_(binning) {}

std::vector<double> AffectationMapping::dense() const {
    std::vector<double> w(rows_.size() * n_bins_, 0.0);
    for (std::size_t i = 0; i < rows_.size(); ++i)
        for (std::size_t k = 0; k < rows_[i].count; ++k)
            w[i * n_bins_ + rows_[i].bin[k]] += rows_[i].weight[k];
    return w;
}

AffectationMapping build_one_bin_mapping(std::span<const double> scores, const BinningScheme& binning) {
    std::vector<AffectationMapping::Row> rows(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        rows[i].bin[0] = binning.locate(scores[i]);
        rows[i].weight[0] = 1.0;
        rows[i].count = 1;
    }
    return {std::move(rows), binning.size(), MappingKind::one_bin, binning.kind()};
}

AffectationMapping build_convex_mapping(std::span<const double> scores, const BinningScheme& binning) {
    const std::size_t b = binning.size();
    std::vector<double> centers(b);
    for (std::size_t j = 0; j < b; ++j) centers[j] = binning.center(j);

    std::vector<AffectationMapping::Row> rows(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double s = scores[i];
        auto& row = rows[i];
        if (s <= centers.front()) {
            row.bin[0] = 0;
            row.weight[0] = 1.0;
            row.count = 1;
        } else if (s >= centers.back()) {
            row.bin[0] = b - 1;
            row.weight[0] = 1.0;
            row.count = 1;
        } else {
            // centers[j] <= s < centers[j + 1]
            const auto it = std::upper_bound(centers.begin(), centers.end(), s);
            const auto j = static_cast<std::size_t>(it - centers.begin()) - 1;
            const double upper_share = (s - centers[j]) / (centers[j + 1] - centers[j]);
            row.bin = {j, j + 1};
            row.weight = {1.0 - upper_share, upper_share};
            row.count = 2;
        }
    }
    return {std::move(rows), b, MappingKind::convex, binning.kind()};
}

AffectationMapping build_mapping(std::span<const double> scores, const BinningScheme& binning,
                                 MappingKind kind) {
    return kind == MappingKind::one_bin ? build_one_bin_mapping(scores, binning)
                                        : build_convex_mapping(scores, binning);
}

const char* binned_estimator_id(BinningKind binning, MappingKind mapping) noexcept {
    if (binning == BinningKind::uniform)
        return mapping == MappingKind::one_bin ? "ECE_l" : "ECE_c";
    return mapping == MappingKind::one_bin ? "ECE_a" : "ECE_ac";
}

namespace {

void check_sizes(const ScoredEvents& events, const AffectationMapping& mapping) {
    if (events.size() != mapping.size())
        throw std::invalid_argument("mapping has " + std::to_string(mapping.size()) +
                                    " rows but there are " + std::to_string(events.size()) +
                                    " events");
    if (events.size() == 0)
        throw std::invalid_argument("no events");
}

struct BinSums {
    std::vector<double> mass;
    std::vector<double> score;
    std::vector<double> hit;
    // long double keeps short decimal inputs exact enough that the final
    // division rounds to the nearest double
    std::vector<long double> deviation;
};

BinSums accumulate(const ScoredEvents& events, const AffectationMapping& mapping) {
    const std::size_t b = mapping.n_bins();
    BinSums sums{std::vector<double>(b), std::vector<double>(b), std::vector<double>(b),
                 std::vector<long double>(b)};
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& row = mapping.row(i);
        const double s = events.score[i];
        const double y = events.hit[i];
        for (std::size_t k = 0; k < row.count; ++k) {
            const auto j = row.bin[k];
            const double w = row.weight[k];
            sums.mass[j] += w;
            sums.score[j] += w * s;
            sums.hit[j] += w * y;
            sums.deviation[j] += static_cast<long double>(w) * (static_cast<long double>(y) - s);
        }
    }
    return sums;
}

EceEstimate labelled(double value, const AffectationMapping& mapping) {
    EceEstimate est;
    est.value = value;
    est.estimator_id = binned_estimator_id(mapping.binning_kind(), mapping.kind());
    est.hyperparams["bins"] = static_cast<double>(mapping.n_bins());
    return est;
}

}  // namespace

EceEstimate binned_ece(const ScoredEvents& events, const AffectationMapping& mapping) {
    check_sizes(events, mapping);
    const auto sums = accumulate(events, mapping);
    long double total = 0.0L;
    for (long double d : sums.deviation) total += std::abs(d);
    return labelled(static_cast<double>(total / static_cast<long double>(events.size())), mapping);
}

EceEstimate binned_mce(const ScoredEvents& events, const AffectationMapping& mapping) {
    check_sizes(events, mapping);
    const auto sums = accumulate(events, mapping);
    double worst = 0.0;
    bool any = false;
    for (std::size_t j = 0; j < sums.mass.size(); ++j) {
        if (sums.mass[j] <= 0.0)
            continue;
        any = true;
        worst = std::max(worst, static_cast<double>(std::abs(sums.deviation[j]) / sums.mass[j]));
    }
    if (!any)
        throw std::invalid_argument("every bin is empty");
    auto est = labelled(worst, mapping);
    est.estimator_id = "MCE" + est.estimator_id.substr(3);
    return est;
}

std::vector<DiagramPoint> diagram_points(const ScoredEvents& events, const AffectationMapping& mapping) {
    check_sizes(events, mapping);
    const auto sums = accumulate(events, mapping);
    std::vector<DiagramPoint> points(mapping.n_bins());
    for (std::size_t j = 0; j < points.size(); ++j) {
        auto& p = points[j];
        p.weight_mass = sums.mass[j];
        p.empty = sums.mass[j] <= 0.0;
        if (!p.empty) {
            p.mean_score = sums.score[j] / sums.mass[j];
            p.event_rate = sums.hit[j] / sums.mass[j];
        }
    }
    return points;
}

std::size_t sqrt_bin_heuristic(std::size_t n_samples) {
    const auto b = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n_samples))));
    return std::max<std::size_t>(b, 1);
}

}  // namespace calibrex
