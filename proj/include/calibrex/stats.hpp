#pragma once

#include <span>
#include <vector>

namespace calibrex::stats {

double mean(std::span<const double> xs);

/// Sample standard deviation (n - 1 denominator). Zero for fewer than two values.
double sample_stddev(std::span<const double> xs);

/// Percentile in [0, 100] with linear interpolation between closest ranks
/// (position p/100 * (n - 1) in the sorted sample).
double percentile(std::vector<double> xs, double pct);
double percentile_sorted(std::span<const double> sorted, double pct);

/// Middle order statistic, or the mean of the two middle ones.
double median(std::vector<double> xs);

double interquartile_range(std::vector<double> xs);

}  // namespace calibrex::stats
