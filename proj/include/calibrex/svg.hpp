#pragma once

// Static SVG charts. Each renderer only reads the data it is given, so the
// CSV written next to a chart is unaffected by whether the chart is drawn.

#include <string>
#include <vector>

#include "calibrex/bench.hpp"
#include "calibrex/binning.hpp"
#include "calibrex/density.hpp"

namespace calibrex::svg {

/// rel(s) against s with the y = x reference and, when present, the
/// bootstrap band shaded.
std::string reliability_chart(const ReliabilityCurve& curve, const std::string& title);

/// Event rate against mean score per non-empty bin, with bin edges.
std::string diagram_chart(const BinningScheme& binning, const std::vector<DiagramPoint>& points,
                          const std::string& title);

/// Log-log median error against evaluation size, one line per estimator,
/// for the rows of a single setting.
std::string benchmark_chart(const std::vector<bench::ReportRow>& rows, const std::string& setting);

}  // namespace calibrex::svg
