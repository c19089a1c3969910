#include "calibrex/estimators.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace calibrex {

EstimatorPolicy EstimatorPolicy::binned_policy(BinningKind binning, MappingKind mapping,
                                               std::optional<std::size_t> bins) {
    if (bins && *bins == 0)
        throw std::invalid_argument("number of bins must be positive");
    EstimatorPolicy p;
    p.family = Family::binned;
    p.binning = binning;
    p.mapping = mapping;
    p.bins = bins;
    return p;
}

EstimatorPolicy EstimatorPolicy::density_policy(std::optional<double> bandwidth) {
    if (bandwidth && !(*bandwidth > 0.0))
        throw std::invalid_argument("bandwidth must be positive");
    EstimatorPolicy p;
    p.family = Family::density;
    p.bandwidth = bandwidth;
    return p;
}

EstimatorPolicy EstimatorPolicy::from_name(const std::string& name) {
    if (name == "legacy" || name == "ECE_l")
        return binned_policy(BinningKind::uniform, MappingKind::one_bin, 15);
    if (name == "adaptive" || name == "ECE_a")
        return binned_policy(BinningKind::adaptive, MappingKind::one_bin, 15);
    if (name == "convex" || name == "ECE_c")
        return binned_policy(BinningKind::uniform, MappingKind::convex, 15);
    if (name == "adaptive-convex" || name == "ECE_ac")
        return binned_policy(BinningKind::adaptive, MappingKind::convex, 15);
    if (name == "kde" || name == "density" || name == "ECE_d")
        return density_policy(std::nullopt);
    throw std::invalid_argument("unknown estimator '" + name + "'");
}

std::string EstimatorPolicy::id() const {
    return family == Family::density ? "ECE_d" : binned_estimator_id(binning, mapping);
}

std::string EstimatorPolicy::descriptor() const {
    if (family == Family::binned)
        return bins ? "bins=" + std::to_string(*bins) : "bins=sqrt";
    if (!bandwidth)
        return "bandwidth=silverman";
    char buf[64];
    std::snprintf(buf, sizeof buf, "bandwidth=%g", *bandwidth);
    return buf;
}

std::size_t EstimatorPolicy::resolve_bins(std::size_t n_samples) const {
    const std::size_t b = bins ? *bins : sqrt_bin_heuristic(n_samples);
    return binning == BinningKind::adaptive ? std::min(b, std::max<std::size_t>(n_samples, 1)) : b;
}

EceEstimate estimate(const EstimatorPolicy& policy, const ScoredEvents& events, const Grid& grid) {
    if (events.size() == 0)
        throw std::invalid_argument("no events");
    if (policy.family == EstimatorPolicy::Family::density) {
        const double h = policy.bandwidth ? *policy.bandwidth : silverman_bandwidth(events.score);
        return ece_d(events, h, grid);
    }
    const std::size_t b = policy.resolve_bins(events.size());
    const auto binning = policy.binning == BinningKind::uniform
                             ? build_uniform_binning(b)
                             : build_adaptive_binning(events.score, b);
    return binned_ece(events, build_mapping(events.score, binning, policy.mapping));
}

EceEstimate estimate(const EstimatorPolicy& policy, const LabeledScores& data,
                     const CalibrationSetting& setting, const Grid& grid) {
    if (setting.kind() != CalibrationSetting::Kind::class_wise) {
        auto est = estimate(policy, extract_events(data, setting), grid);
        est.setting = setting;
        return est;
    }
    std::vector<EceEstimate> per_class;
    per_class.reserve(data.n_classes());
    for (std::size_t c = 0; c < data.n_classes(); ++c)
        per_class.push_back(estimate(policy, extract_events(data, CalibrationSetting::class_specific(c)), grid));
    return aggregate_classwise(per_class);
}

}  // namespace calibrex
