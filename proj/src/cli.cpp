#include "calibrex/cli.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "calibrex/bench.hpp"
#include "calibrex/binning.hpp"
#include "calibrex/density.hpp"
#include "calibrex/estimators.hpp"
#include "calibrex/io.hpp"
#include "calibrex/svg.hpp"
#include "calibrex/synth.hpp"

namespace calibrex::cli {

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <class T>
bool parse_number(const std::string& text, T& value) {
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    return ec == std::errc{} && ptr == text.data() + text.size();
}

/// "sqrt" or a positive integer.
std::optional<std::size_t> parse_bins(const std::string& text) {
    if (text == "sqrt")
        return std::nullopt;
    std::size_t b = 0;
    if (!parse_number(text, b) || b == 0)
        throw UsageError("--bins expects a positive integer or 'sqrt', got '" + text + "'");
    return b;
}

/// "auto"/"silverman" or a positive number.
std::optional<double> parse_bandwidth(const std::string& text) {
    if (text == "auto" || text == "silverman")
        return std::nullopt;
    double h = 0.0;
    if (!parse_number(text, h) || !(h > 0.0) || !std::isfinite(h))
        throw UsageError("--bandwidth expects a positive number or 'auto', got '" + text + "'");
    return h;
}

std::pair<double, double> parse_band(const std::string& text) {
    const auto comma = text.find(',');
    double lo = 0.0, hi = 0.0;
    if (comma == std::string::npos || !parse_number(text.substr(0, comma), lo) ||
        !parse_number(text.substr(comma + 1), hi))
        throw UsageError("--band expects 'low,high', got '" + text + "'");
    if (!(0.0 <= lo && lo <= 50.0 && 50.0 <= hi && hi <= 100.0))
        throw UsageError("--band percentiles must satisfy 0 <= low <= 50 <= high <= 100");
    return {lo, hi};
}

CalibrationSetting resolve_setting(const std::string& text, const LabeledScores& data) {
    CalibrationSetting setting = CalibrationSetting::confidence();
    try {
        setting = CalibrationSetting::parse(text);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (setting.kind() == CalibrationSetting::Kind::class_specific && setting.target_class() >= data.n_classes())
        throw UsageError("setting " + setting.name() + " is out of range for " +
                         std::to_string(data.n_classes()) + " classes");
    return setting;
}

ScoredEvents single_events(const LabeledScores& data, const CalibrationSetting& setting, const char* what) {
    if (setting.kind() == CalibrationSetting::Kind::class_wise)
        throw UsageError(std::string(what) + " needs a single event stream; use 'confidence' or 'class:<c>'");
    return extract_events(data, setting);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void write_file(const std::string& path, const std::string& text) {
    io::write_text_file(path, text);
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string scores;
    std::string setting = "confidence";
    std::string estimator = "legacy";
    std::string bins = "15";
    std::string bandwidth = "auto";
    std::string metric = "ece";
    std::size_t grid = kDefaultGridPoints;
    bool json = false;
    CLI::Option* bins_opt = nullptr;
    CLI::Option* bandwidth_opt = nullptr;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    EstimatorPolicy policy;
    try {
        policy = EstimatorPolicy::from_name(a.estimator);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const bool density = policy.family == EstimatorPolicy::Family::density;
    if (density && a.bins_opt->count() > 0)
        throw UsageError("--bins does not apply to " + policy.id());
    if (!density && a.bandwidth_opt->count() > 0)
        throw UsageError("--bandwidth does not apply to " + policy.id());
    if (density && a.metric == "mce")
        throw UsageError("MCE is only defined for the binned estimators");
    if (density)
        policy.bandwidth = parse_bandwidth(a.bandwidth);
    else
        policy.bins = parse_bins(a.bins);

    const auto data = io::read_scores_csv(std::filesystem::path(a.scores));
    const auto setting = resolve_setting(a.setting, data);
    const Grid grid(a.grid);

    EceEstimate est;
    if (a.metric == "mce") {
        auto mce_one = [&](const ScoredEvents& events) {
            const std::size_t b = policy.resolve_bins(events.size());
            const auto binning = policy.binning == BinningKind::uniform ? build_uniform_binning(b)
                                                                          : build_adaptive_binning(events.score, b);
            return binned_mce(events, build_mapping(events.score, binning, policy.mapping));
        };
        if (setting.kind() == CalibrationSetting::Kind::class_wise) {
            std::vector<EceEstimate> per_class;
            for (std::size_t c = 0; c < data.n_classes(); ++c)
                per_class.push_back(mce_one(extract_events(data, CalibrationSetting::class_specific(c))));
            est = aggregate_classwise(per_class);
        } else {
            est = mce_one(extract_events(data, setting));
        }
        est.setting = setting;
    } else {
        if (density && !policy.bandwidth && data.size() < 2)
            throw DataError("Silverman's rule needs at least two samples");
        est = estimate(policy, data, setting, grid);
    }

    if (a.json) {
        nlohmann::json j{{"estimator_id", est.estimator_id},
                         {"setting", est.setting.name()},
                         {"hyperparams", est.hyperparams},
                         {"value", est.value},
                         {"n_samples", data.size()}};
        out << j.dump() << '\n';
        return kExitOk;
    }
    out << "estimator_id  " << est.estimator_id << '\n' << "setting       " << est.setting.name() << '\n';
    for (const auto& [key, value] : est.hyperparams)
        out << key << std::string(key.size() < 14 ? 14 - key.size() : 1, ' ') << fmt(value) << '\n';
    out << "n_samples     " << data.size() << '\n' << "value         " << fmt(est.value) << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- reliability

struct ReliabilityArgs {
    std::string scores;
    std::string setting = "confidence";
    std::string bandwidth = "auto";
    std::size_t bootstrap = 200;
    std::string band = "5,95";
    std::uint64_t seed = 0;
    std::string out;
    std::string svg;
    std::size_t downsample = 1;
    std::size_t grid = kDefaultGridPoints;
};

int cmd_reliability(const ReliabilityArgs& a, std::ostream& out, std::ostream& err) {
    const auto h_flag = parse_bandwidth(a.bandwidth);
    const auto [lo, hi] = parse_band(a.band);
    if (a.downsample == 0)
        throw UsageError("--downsample must be at least 1");
    const auto data = io::read_scores_csv(std::filesystem::path(a.scores));
    const auto setting = resolve_setting(a.setting, data);
    const auto events = single_events(data, setting, "reliability");
    if (!h_flag && events.size() < 2)
        throw DataError("Silverman's rule needs at least two samples");
    const double h = h_flag ? *h_flag : silverman_bandwidth(events.score);
    const Grid grid(a.grid);

    const auto curve = a.bootstrap > 0
                           ? bootstrap_reliability(events, h, grid, {a.bootstrap, lo, hi, a.seed})
                           : estimate_lce(events, h, grid);
    if (curve.degeneracy != Degeneracy::none)
        err << "warning: every event is a " << (curve.degeneracy == Degeneracy::all_hits ? "hit" : "miss")
            << "; the curve is degenerate\n";

    std::ostringstream csv;
    io::write_curve_csv(csv, curve, a.downsample);
    write_file(a.out, csv.str());
    if (!a.svg.empty())
        write_file(a.svg, svg::reliability_chart(curve, "reliability, " + setting.name() + ", h=" + fmt(h)));
    out << "wrote " << a.out << " (n_samples=" << events.size() << ", bandwidth=" << fmt(h) << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------- diagram

struct DiagramArgs {
    std::string scores;
    std::string setting = "confidence";
    std::string bins = "15";
    std::string binning = "uniform";
    std::string mapping = "one_bin";
    std::string out;
    std::string svg;
};

int cmd_diagram(const DiagramArgs& a, std::ostream& out) {
    const auto binning_kind = a.binning == "adaptive" ? BinningKind::adaptive : BinningKind::uniform;
    const auto mapping_kind = a.mapping == "convex" ? MappingKind::convex : MappingKind::one_bin;
    const auto policy = EstimatorPolicy::binned_policy(binning_kind, mapping_kind, parse_bins(a.bins));
    const auto data = io::read_scores_csv(std::filesystem::path(a.scores));
    const auto setting = resolve_setting(a.setting, data);
    const auto events = single_events(data, setting, "diagram");

    const std::size_t b = policy.resolve_bins(events.size());
    const auto binning = binning_kind == BinningKind::uniform ? build_uniform_binning(b)
                                                              : build_adaptive_binning(events.score, b);
    const auto mapping = build_mapping(events.score, binning, mapping_kind);
    const auto points = diagram_points(events, mapping);
    const auto ece = binned_ece(events, mapping);

    std::ostringstream csv;
    csv << "# " << ece.estimator_id << '=' << io::format_double(ece.value) << '\n';
    io::write_diagram_csv(csv, binning, points);
    write_file(a.out, csv.str());
    if (!a.svg.empty())
        write_file(a.svg, svg::diagram_chart(binning, points,
                                             "reliability diagram, " + setting.name() + ", " +
                                                 std::to_string(binning.size()) + " bins"));
    out << "wrote " << a.out << " (bins=" << binning.size() << ", merged_bins=" << binning.merged_bins() << ", "
        << ece.estimator_id << '=' << fmt(ece.value) << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    std::size_t classes = 2;
    std::size_t dims = 2;
    std::size_t modes = synth::kDefaultModesPerClass;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string out_data;
    std::string out_spec;
    std::string out_scores;
    double temperature = 1.0;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    if (!(a.temperature > 0.0))
        throw UsageError("--temperature must be positive");
    auto spec = std::make_shared<const synth::MixtureSpec>(
        synth::sample_mixture_spec(a.classes, a.dims, bench::derive_seed(a.seed, {1}), a.modes));
    const auto data = synth::sample_dataset(*spec, a.n, bench::derive_seed(a.seed, {2}));

    std::ostringstream csv;
    io::write_dataset_csv(csv, data);
    write_file(a.out_data, csv.str());
    write_file(a.out_spec, io::mixture_to_json(*spec).dump(2) + "\n");
    if (!a.out_scores.empty()) {
        std::ostringstream scores;
        io::write_scores_csv(scores, synth::make_posterior_scorer(spec, a.temperature).score_dataset(data));
        write_file(a.out_scores, scores.str());
    }
    out << "wrote " << a.out_data << " and " << a.out_spec << (a.out_scores.empty() ? "" : " and " + a.out_scores)
        << " (classes=" << a.classes << ", dims=" << a.dims << ", n=" << a.n << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------- benchmark

struct BenchmarkArgs {
    std::string config;
    std::string out;
    bool resume = false;
    std::size_t workers = 0;
    bool quiet = false;
    CLI::Option* workers_opt = nullptr;
};

std::size_t resolve_workers(const BenchmarkArgs& a) {
    if (a.workers_opt->count() > 0) {
        if (a.workers == 0)
            throw UsageError("--workers must be at least 1");
        return a.workers;
    }
    const char* env = std::getenv("CALIBREX_WORKERS");
    if (env == nullptr || *env == '\0')
        return 1;
    std::size_t w = 0;
    if (!parse_number(std::string(env), w) || w == 0)
        throw UsageError(std::string("CALIBREX_WORKERS must be a positive integer, got '") + env + "'");
    return w;
}

std::string file_safe(std::string name) {
    for (char& c : name)
        if (!std::isalnum(static_cast<unsigned char>(c)))
            c = '_';
    return name;
}

int cmd_benchmark(const BenchmarkArgs& a, std::ostream& out, std::ostream& err) {
    const std::size_t workers = resolve_workers(a);
    std::ifstream in(a.config);
    if (!in)
        throw UsageError("cannot open config " + a.config);
    bench::BenchConfig config;
    try {
        config = bench::BenchConfig::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("malformed config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("invalid config: ") + e.what());
    }

    const std::filesystem::path dir(a.out);
    bench::RunOptions options;
    options.checkpoint_dir = dir / "cells";
    options.resume = a.resume;
    options.workers = workers;
    if (!a.quiet)
        options.progress = [&err](std::size_t done, std::size_t total) {
            err << "\rcells " << done << '/' << total << std::flush;
            if (done == total)
                err << '\n';
        };
    const auto report = bench::run_benchmark(config, options);

    io::write_text_file(dir / "report.csv", report.to_csv());
    io::write_text_file(dir / "provenance.json", report.provenance.dump(2) + "\n");
    for (const auto& setting : config.settings)
        io::write_text_file(dir / ("plot_" + file_safe(setting.name()) + ".svg"),
                            svg::benchmark_chart(report.rows, setting.name()));
    out << "wrote " << (dir / "report.csv").string() << " (" << report.rows.size() << " rows, "
        << report.provenance.at("cells_failed").size() << " failed cells)\n";
    return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Calibration error estimators, reliability curves and the estimator benchmark", "calibrex"};
    app.require_subcommand(1);
    app.set_version_flag("--version", bench::kVersion);

    EvalArgs ev;
    auto* eval = app.add_subcommand("eval", "Estimate the calibration error of a score file");
    eval->add_option("--scores", ev.scores, "Score CSV (s_0,...,s_{C-1},label)")->required();
    eval->add_option("--setting", ev.setting, "confidence, classwise or class:<c>")->capture_default_str();
    eval->add_option("--estimator", ev.estimator, "legacy, adaptive, convex, adaptive-convex or kde")->capture_default_str();
    ev.bins_opt = eval->add_option("--bins", ev.bins, "Bin count or 'sqrt' (binned estimators)")->capture_default_str();
    ev.bandwidth_opt = eval->add_option("--bandwidth", ev.bandwidth, "Kernel bandwidth or 'auto' (kde)")->capture_default_str();
    eval->add_option("--metric", ev.metric, "ece or mce")->capture_default_str()->check(CLI::IsMember({"ece", "mce"}));
    eval->add_option("--grid", ev.grid, "Evaluation grid points (kde)")->capture_default_str()->check(CLI::Range(2, 1 << 24));
    eval->add_flag("--json", ev.json, "Print one JSON object");

    ReliabilityArgs rel;
    auto* reliability = app.add_subcommand("reliability", "Write the reliability curve of a score file");
    reliability->add_option("--scores", rel.scores, "Score CSV")->required();
    reliability->add_option("--setting", rel.setting, "confidence or class:<c>")->capture_default_str();
    reliability->add_option("--bandwidth", rel.bandwidth, "Kernel bandwidth or 'auto'")->capture_default_str();
    reliability->add_option("--bootstrap", rel.bootstrap, "Bootstrap resamples; 0 disables the band")->capture_default_str();
    reliability->add_option("--band", rel.band, "Band percentiles 'low,high'")->capture_default_str();
    reliability->add_option("--seed", rel.seed, "Bootstrap seed")->capture_default_str();
    reliability->add_option("--out", rel.out, "Curve CSV path")->required();
    reliability->add_option("--svg", rel.svg, "Optional SVG chart path");
    reliability->add_option("--downsample", rel.downsample, "Write every k-th grid point")->capture_default_str();
    reliability->add_option("--grid", rel.grid, "Evaluation grid points")->capture_default_str()->check(CLI::Range(2, 1 << 24));

    DiagramArgs dg;
    auto* diagram = app.add_subcommand("diagram", "Write reliability diagram points of a score file");
    diagram->add_option("--scores", dg.scores, "Score CSV")->required();
    diagram->add_option("--setting", dg.setting, "confidence or class:<c>")->capture_default_str();
    diagram->add_option("--bins", dg.bins, "Bin count or 'sqrt'")->capture_default_str();
    diagram->add_option("--binning", dg.binning, "uniform or adaptive")->capture_default_str()
        ->check(CLI::IsMember({"uniform", "adaptive"}));
    diagram->add_option("--mapping", dg.mapping, "one_bin or convex")->capture_default_str()
        ->check(CLI::IsMember({"one_bin", "convex"}));
    diagram->add_option("--out", dg.out, "Diagram CSV path")->required();
    diagram->add_option("--svg", dg.svg, "Optional SVG chart path");

    SynthArgs sy;
    auto* synth_cmd = app.add_subcommand("synth", "Sample a Gaussian-mixture classification dataset");
    synth_cmd->add_option("--classes", sy.classes, "Number of classes")->capture_default_str();
    synth_cmd->add_option("--dims", sy.dims, "Feature dimension")->capture_default_str();
    synth_cmd->add_option("--modes", sy.modes, "Mixture modes per class")->capture_default_str();
    synth_cmd->add_option("--n", sy.n, "Number of samples")->required();
    synth_cmd->add_option("--seed", sy.seed, "Seed")->capture_default_str();
    synth_cmd->add_option("--out-data", sy.out_data, "Dataset CSV path")->required();
    synth_cmd->add_option("--out-spec", sy.out_spec, "Mixture JSON path")->required();
    synth_cmd->add_option("--out-scores", sy.out_scores, "Optional score CSV of the (distorted) true posterior");
    synth_cmd->add_option("--temperature", sy.temperature, "Posterior temperature for --out-scores")->capture_default_str();

    BenchmarkArgs bm;
    auto* benchmark = app.add_subcommand("benchmark", "Run the estimator benchmark from a JSON config");
    benchmark->add_option("--config", bm.config, "Benchmark config JSON")->required();
    benchmark->add_option("--out", bm.out, "Output directory")->required();
    benchmark->add_flag("--resume", bm.resume, "Reuse finished cells from the output directory");
    bm.workers_opt = benchmark->add_option("--workers", bm.workers, "Worker threads (default $CALIBREX_WORKERS or 1)");
    benchmark->add_flag("--quiet", bm.quiet, "No progress output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*eval)
            return cmd_eval(ev, out);
        if (*reliability)
            return cmd_reliability(rel, out, err);
        if (*diagram)
            return cmd_diagram(dg, out);
        if (*synth_cmd)
            return cmd_synth(sy, out);
        return cmd_benchmark(bm, out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
}

}  // namespace calibrex::cli
