#pragma once

// File formats: score CSV, dataset CSV, mixture JSON, curve and diagram CSV.

#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "calibrex/binning.hpp"
#include "calibrex/core.hpp"
#include "calibrex/density.hpp"
#include "calibrex/synth.hpp"

namespace calibrex::io {

/// Header `s_0,...,s_{C-1},label`, one sample per row. Throws DataError with
/// the offending line number.
LabeledScores read_scores_csv(std::istream& in);
LabeledScores read_scores_csv(const std::filesystem::path& path);
void write_scores_csv(std::ostream& out, const LabeledScores& data);

/// Header `x_0,...,x_{d-1},label`.
void write_dataset_csv(std::ostream& out, const synth::Dataset& data);

nlohmann::json mixture_to_json(const synth::MixtureSpec& spec);
synth::MixtureSpec mixture_from_json(const nlohmann::json& j);

/// Columns `s,lce,rel` plus `band_low,band_high` when the curve has bands.
/// Every `stride`-th grid point is written, and always the last one.
void write_curve_csv(std::ostream& out, const ReliabilityCurve& curve, std::size_t stride = 1);

/// Columns `bin,lower,upper,mean_score,event_rate,weight_mass,empty`; the
/// mean columns are blank for empty bins.
void write_diagram_csv(std::ostream& out, const BinningScheme& binning,
                       const std::vector<DiagramPoint>& points);

/// Shortest representation that reads back to the same double.
std::string format_double(double v);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace calibrex::io
