#include "calibrex/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace calibrex::stats {

double mean(std::span<const double> xs) {
    if (xs.empty())
        throw std::invalid_argument("mean of empty sample");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_stddev(std::span<const double> xs) {
    if (xs.size() < 2)
        return 0.0;
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double percentile_sorted(std::span<const double> sorted, double pct) {
    if (sorted.empty())
        throw std::invalid_argument("percentile of empty sample");
    if (!(pct >= 0.0 && pct <= 100.0))
        throw std::invalid_argument("percentile must lie in [0, 100]");
    const double pos = pct / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double percentile(std::vector<double> xs, double pct) {
    std::sort(xs.begin(), xs.end());
    return percentile_sorted(xs, pct);
}

double median(std::vector<double> xs) {
    if (xs.empty())
        throw std::invalid_argument("median of empty sample");
    std::sort(xs.begin(), xs.end());
    const auto n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double interquartile_range(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    return percentile_sorted(xs, 75.0) - percentile_sorted(xs, 25.0);
}

}  // namespace calibrex::stats
