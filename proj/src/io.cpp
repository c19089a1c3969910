#include "calibrex/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace calibrex::io {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos)
            break;
        start = comma + 1;
    }
    return fields;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

[[noreturn]] void fail_at(std::size_t line_no, const std::string& what) {
    throw DataError("line " + std::to_string(line_no) + ": " + what);
}

double parse_double(std::string_view text, std::size_t line_no) {
    text = trim(text);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        fail_at(line_no, "'" + std::string(text) + "' is not a number");
    return v;
}

std::size_t parse_label(std::string_view text, std::size_t line_no) {
    text = trim(text);
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        fail_at(line_no, "'" + std::string(text) + "' is not a non-negative integer label");
    return v;
}

}  // namespace

std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

LabeledScores read_scores_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line))
        throw DataError("score file is empty");
    ++line_no;
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
        line.erase(0, 3);
    const auto header = split_commas(line);
    if (header.size() < 3)
        fail_at(line_no, "header needs at least two score columns and a label column");
    const std::size_t n_classes = header.size() - 1;
    for (std::size_t c = 0; c < n_classes; ++c)
        if (trim(header[c]) != "s_" + std::to_string(c))
            fail_at(line_no, "expected column 's_" + std::to_string(c) + "', found '" +
                                 std::string(trim(header[c])) + "'");
    if (trim(header.back()) != "label")
        fail_at(line_no, "last column must be 'label'");

    std::vector<double> flat;
    std::vector<std::size_t> labels;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        const auto fields = split_commas(line);
        if (fields.size() != n_classes + 1)
            fail_at(line_no, "expected " + std::to_string(n_classes + 1) + " fields, found " +
                                 std::to_string(fields.size()));
        double sum = 0.0;
        for (std::size_t c = 0; c < n_classes; ++c) {
            const double v = parse_double(fields[c], line_no);
            if (!std::isfinite(v) || v < 0.0 || v > 1.0)
                fail_at(line_no, "score " + std::string(trim(fields[c])) + " is outside [0,1]");
            sum += v;
            flat.push_back(v);
        }
        if (std::abs(sum - 1.0) > kRowSumTolerance)
            fail_at(line_no, "scores sum to " + std::to_string(sum) + ", not 1");
        const std::size_t label = parse_label(fields.back(), line_no);
        if (label >= n_classes)
            fail_at(line_no, "label " + std::to_string(label) + " is out of range for " +
                                 std::to_string(n_classes) + " classes");
        labels.push_back(label);
    }
    if (labels.empty())
        throw DataError("score file has no samples");
    return validate(std::move(flat), n_classes, std::move(labels));
}

LabeledScores read_scores_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open " + path.string());
    return read_scores_csv(in);
}

void write_scores_csv(std::ostream& out, const LabeledScores& data) {
    for (std::size_t c = 0; c < data.n_classes(); ++c) out << "s_" << c << ',';
    out << "label\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (double s : data.row(i)) out << format_double(s) << ',';
        out << data.label(i) << '\n';
    }
}

void write_dataset_csv(std::ostream& out, const synth::Dataset& data) {
    const auto d = data.features.cols();
    for (Eigen::Index j = 0; j < d; ++j) out << "x_" << j << ',';
    out << "label\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (Eigen::Index j = 0; j < d; ++j)
            out << format_double(data.features(static_cast<Eigen::Index>(i), j)) << ',';
        out << data.labels[i] << '\n';
    }
}

nlohmann::json mixture_to_json(const synth::MixtureSpec& spec) {
    nlohmann::json modes = nlohmann::json::array();
    for (const auto& m : spec.modes()) {
        std::vector<double> mean(m.mean.data(), m.mean.data() + m.mean.size());
        std::vector<double> cov;
        for (Eigen::Index r = 0; r < m.covariance.rows(); ++r)
            for (Eigen::Index c = 0; c < m.covariance.cols(); ++c) cov.push_back(m.covariance(r, c));
        modes.push_back({{"label", m.label}, {"mean", mean}, {"covariance", cov}});
    }
    return {{"n_classes", spec.n_classes()},
            {"dim", spec.dim()},
            {"modes_per_class", spec.modes_per_class()},
            {"seed", spec.seed()},
            {"modes", modes}};
}

synth::MixtureSpec mixture_from_json(const nlohmann::json& j) {
    try {
        const auto dim = j.at("dim").get<std::size_t>();
        const auto d = static_cast<Eigen::Index>(dim);
        std::vector<synth::Mode> modes;
        for (const auto& mj : j.at("modes")) {
            synth::Mode m;
            m.label = mj.at("label").get<std::size_t>();
            const auto mean = mj.at("mean").get<std::vector<double>>();
            const auto cov = mj.at("covariance").get<std::vector<double>>();
            if (mean.size() != dim || cov.size() != dim * dim)
                throw DataError("mode dimensions do not match 'dim'");
            m.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), d);
            m.covariance = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                cov.data(), d, d);
            modes.push_back(std::move(m));
        }
        return {j.at("n_classes").get<std::size_t>(), dim, j.at("modes_per_class").get<std::size_t>(),
                std::move(modes), j.at("seed").get<std::uint64_t>()};
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed mixture JSON: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("invalid mixture: ") + e.what());
    }
}

void write_curve_csv(std::ostream& out, const ReliabilityCurve& curve, std::size_t stride) {
    if (stride == 0)
        stride = 1;
    if (curve.degeneracy != Degeneracy::none)
        out << "# degenerate: " << (curve.degeneracy == Degeneracy::all_hits ? "all_hits" : "all_misses") << '\n';
    out << "# bandwidth=" << format_double(curve.bandwidth) << '\n';
    const bool bands = curve.bands.has_value();
    if (bands)
        out << "# band=" << format_double(curve.bands->low_pct) << ',' << format_double(curve.bands->high_pct) << '\n';
    out << (bands ? "s,lce,rel,band_low,band_high\n" : "s,lce,rel\n");
    const std::size_t n = curve.grid.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (i % stride != 0 && i + 1 != n)
            continue;
        out << format_double(curve.grid.point(i)) << ',' << format_double(curve.lce[i]) << ','
            << format_double(curve.rel[i]);
        if (bands)
            out << ',' << format_double(curve.bands->lower[i]) << ',' << format_double(curve.bands->upper[i]);
        out << '\n';
    }
}

void write_diagram_csv(std::ostream& out, const BinningScheme& binning,
                       const std::vector<DiagramPoint>& points) {
    out << "# merged_bins=" << binning.merged_bins() << '\n';
    out << "bin,lower,upper,mean_score,event_rate,weight_mass,empty\n";
    for (std::size_t j = 0; j < points.size(); ++j) {
        const auto& p = points[j];
        out << j << ',' << format_double(binning.lower(j)) << ',' << format_double(binning.upper(j)) << ',';
        if (p.empty)
            out << ",,";
        else
            out << format_double(p.mean_score) << ',' << format_double(p.event_rate) << ',';
        out << format_double(p.weight_mass) << ',' << (p.empty ? 1 : 0) << '\n';
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << text;
    if (!out)
        throw DataError("failed writing " + path.string());
}

}  // namespace calibrex::io
