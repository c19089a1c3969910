#include "calibrex/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "calibrex/binning.hpp"
#include "calibrex/stats.hpp"

namespace calibrex::bench {

const char* const kVersion = "0.3.0";

using nlohmann::json;

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> coords) {
    std::vector<std::uint32_t> words;
    words.reserve(2 * (coords.size() + 1));
    auto push = [&](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(master);
    for (auto c : coords) push(c);
    std::seed_seq seq(words.begin(), words.end());
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// configuration

std::string ModelConfig::name() const {
    switch (kind) {
    case Kind::logistic_regression:
        return "logistic_regression";
    case Kind::gaussian_naive_bayes:
        return "gaussian_naive_bayes";
    case Kind::analytic_posterior:
        return "analytic_posterior";
    case Kind::distorted_posterior: {
        char buf[64];
        std::snprintf(buf, sizeof buf, "distorted_posterior(T=%g)", temperature);
        return buf;
    }
    }
    return {};
}

namespace {

template <typename T>
T required(const json& j, const char* key) {
    if (!j.contains(key))
        throw std::invalid_argument(std::string("config is missing '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config field '") + key + "': " + e.what());
    }
}

ModelConfig model_from_json(const json& j) {
    ModelConfig m;
    const auto kind = required<std::string>(j, "kind");
    if (kind == "logistic_regression") {
        m.kind = ModelConfig::Kind::logistic_regression;
        m.logistic.learning_rate = j.value("learning_rate", m.logistic.learning_rate);
        m.logistic.epochs = j.value("epochs", m.logistic.epochs);
        m.logistic.l2 = j.value("l2", m.logistic.l2);
    } else if (kind == "gaussian_naive_bayes") {
        m.kind = ModelConfig::Kind::gaussian_naive_bayes;
    } else if (kind == "analytic_posterior") {
        m.kind = ModelConfig::Kind::analytic_posterior;
    } else if (kind == "distorted_posterior") {
        m.kind = ModelConfig::Kind::distorted_posterior;
        m.temperature = required<double>(j, "temperature");
        if (!(m.temperature > 0.0))
            throw std::invalid_argument("model temperature must be positive");
    } else {
        throw std::invalid_argument("unknown model kind '" + kind + "'");
    }
    return m;
}

json model_to_json(const ModelConfig& m) {
    switch (m.kind) {
    case ModelConfig::Kind::logistic_regression:
        return {{"kind", "logistic_regression"},
                {"learning_rate", m.logistic.learning_rate},
                {"epochs", m.logistic.epochs},
                {"l2", m.logistic.l2}};
    case ModelConfig::Kind::gaussian_naive_bayes:
        return {{"kind", "gaussian_naive_bayes"}};
    case ModelConfig::Kind::analytic_posterior:
        return {{"kind", "analytic_posterior"}};
    case ModelConfig::Kind::distorted_posterior:
        return {{"kind", "distorted_posterior"}, {"temperature", m.temperature}};
    }
    return {};
}

EstimatorPolicy estimator_from_json(const json& j) {
    auto policy = EstimatorPolicy::from_name(required<std::string>(j, "estimator"));
    if (policy.family == EstimatorPolicy::Family::binned) {
        if (j.contains("bandwidth"))
            throw std::invalid_argument("binned estimators take 'bins', not 'bandwidth'");
        const auto& bins = j.contains("bins") ? j.at("bins") : json("sqrt");
        if (bins.is_string()) {
            if (bins.get<std::string>() != "sqrt")
                throw std::invalid_argument("bins must be a positive integer or \"sqrt\"");
            policy.bins.reset();
        } else if (bins.is_number_unsigned() && bins.get<std::size_t>() > 0) {
            policy.bins = bins.get<std::size_t>();
        } else {
            throw std::invalid_argument("bins must be a positive integer or \"sqrt\"");
        }
    } else {
        if (j.contains("bins"))
            throw std::invalid_argument("ECE_d takes 'bandwidth', not 'bins'");
        const auto& bw = j.contains("bandwidth") ? j.at("bandwidth") : json("silverman");
        if (bw.is_string()) {
            if (bw.get<std::string>() != "silverman")
                throw std::invalid_argument("bandwidth must be a positive number or \"silverman\"");
            policy.bandwidth.reset();
        } else if (bw.is_number() && bw.get<double>() > 0.0) {
            policy.bandwidth = bw.get<double>();
        } else {
            throw std::invalid_argument("bandwidth must be a positive number or \"silverman\"");
        }
    }
    return policy;
}

json estimator_to_json(const EstimatorPolicy& p) {
    json j{{"estimator", p.id()}};
    if (p.family == EstimatorPolicy::Family::binned)
        j["bins"] = p.bins ? json(*p.bins) : json("sqrt");
    else
        j["bandwidth"] = p.bandwidth ? json(*p.bandwidth) : json("silverman");
    return j;
}

}  // namespace

BenchConfig BenchConfig::from_json(const json& j) {
    static const std::set<std::string> known = {
        "classes", "dims", "specs_per_combination", "modes_per_class", "models", "train_size",
        "train_splits", "holdout_size", "truth_bins", "eval_sizes", "n_boot_eval",
        "error_percentile", "estimators", "settings", "seed", "grid_points", "note"};
    if (!j.is_object())
        throw std::invalid_argument("config must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!known.contains(key))
            throw std::invalid_argument("unknown config field '" + key + "'");

    BenchConfig c;
    c.classes = required<std::vector<std::size_t>>(j, "classes");
    c.dims = required<std::vector<std::size_t>>(j, "dims");
    c.specs_per_combination = required<std::size_t>(j, "specs_per_combination");
    c.modes_per_class = j.value("modes_per_class", c.modes_per_class);
    for (const auto& m : required<json>(j, "models")) c.models.push_back(model_from_json(m));
    c.train_size = required<std::size_t>(j, "train_size");
    c.train_splits = required<std::size_t>(j, "train_splits");
    c.holdout_size = required<std::size_t>(j, "holdout_size");
    c.truth_bins = required<std::size_t>(j, "truth_bins");
    c.eval_sizes = required<std::vector<std::size_t>>(j, "eval_sizes");
    c.n_boot_eval = required<std::size_t>(j, "n_boot_eval");
    c.error_percentile = required<double>(j, "error_percentile");
    for (const auto& e : required<json>(j, "estimators")) c.estimators.push_back(estimator_from_json(e));
    for (const auto& s : required<std::vector<std::string>>(j, "settings"))
        c.settings.push_back(CalibrationSetting::parse(s));
    c.seed = required<std::uint64_t>(j, "seed");
    c.grid_points = j.value("grid_points", c.grid_points);
    c.note = j.value("note", std::string{});
    c.validate();
    return c;
}

json BenchConfig::to_json() const {
    json models_j = json::array();
    for (const auto& m : models) models_j.push_back(model_to_json(m));
    json est_j = json::array();
    for (const auto& e : estimators) est_j.push_back(estimator_to_json(e));
    json settings_j = json::array();
    for (const auto& s : settings) settings_j.push_back(s.name());
    json j{{"classes", classes},
           {"dims", dims},
           {"specs_per_combination", specs_per_combination},
           {"modes_per_class", modes_per_class},
           {"models", models_j},
           {"train_size", train_size},
           {"train_splits", train_splits},
           {"holdout_size", holdout_size},
           {"truth_bins", truth_bins},
           {"eval_sizes", eval_sizes},
           {"n_boot_eval", n_boot_eval},
           {"error_percentile", error_percentile},
           {"estimators", est_j},
           {"settings", settings_j},
           {"seed", seed},
           {"grid_points", grid_points}};
    if (!note.empty())
        j["note"] = note;
    return j;
}

void BenchConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("invalid config: " + msg); };
    if (classes.empty() || dims.empty())
        fail("classes and dims must be non-empty");
    for (auto c : classes)
        if (c < 2) fail("every class count must be at least 2");
    for (auto d : dims)
        if (d < 1) fail("every dimension must be at least 1");
    if (specs_per_combination < 1 || modes_per_class < 1 || train_splits < 1)
        fail("specs_per_combination, modes_per_class and train_splits must be positive");
    if (models.empty() || estimators.empty() || settings.empty())
        fail("models, estimators and settings must be non-empty");
    if (train_size < 2)
        fail("train_size must be at least 2");
    if (eval_sizes.empty())
        fail("eval_sizes must be non-empty");
    if (eval_sizes.front() < 2)
        fail("evaluation sets need at least 2 samples");
    for (std::size_t i = 1; i < eval_sizes.size(); ++i)
        if (eval_sizes[i] <= eval_sizes[i - 1]) fail("eval_sizes must be strictly increasing");
    if (n_boot_eval < 1)
        fail("n_boot_eval must be positive");
    if (!(error_percentile > 0.0 && error_percentile < 100.0))
        fail("error_percentile must lie in (0, 100)");
    if (truth_bins < 1)
        fail("truth_bins must be positive");
    std::size_t max_bins = 0;
    for (const auto& e : estimators)
        if (e.family == EstimatorPolicy::Family::binned)
            max_bins = std::max(max_bins, e.bins ? *e.bins : sqrt_bin_heuristic(eval_sizes.back()));
    if (truth_bins < max_bins)
        fail("truth_bins must be at least the largest number of bins under test");
    if (holdout_size < truth_bins)
        fail("holdout_size must exceed truth_bins");
    if (eval_sizes.back() > holdout_size)
        fail("evaluation sets cannot be larger than the holdout pool");
    const auto min_classes = *std::min_element(classes.begin(), classes.end());
    for (const auto& s : settings)
        if (s.kind() == CalibrationSetting::Kind::class_specific && s.target_class() >= min_classes)
            fail("setting " + s.name() + " is out of range for " + std::to_string(min_classes) + " classes");
    Grid{grid_points};
}

std::string BenchConfig::hash() const { return fnv1a_hex(to_json().dump()); }

std::size_t BenchConfig::n_cells() const {
    return classes.size() * dims.size() * specs_per_combination * models.size() * train_splits;
}

// ---------------------------------------------------------------------------
// ground truth and evaluation

double ground_truth_ece(const LabeledScores& holdout, std::size_t truth_bins,
                        const CalibrationSetting& setting) {
    const auto policy = EstimatorPolicy::binned_policy(BinningKind::uniform, MappingKind::one_bin, truth_bins);
    // the grid is unused by binned estimators
    return estimate(policy, holdout, setting, Grid{}).value;
}

double ground_truth_ece(const synth::Scorer& scorer, const synth::MixtureSpec& spec,
                        std::size_t holdout_size, std::size_t truth_bins,
                        const CalibrationSetting& setting, std::uint64_t seed) {
    const auto holdout = synth::sample_dataset(spec, holdout_size, seed);
    return ground_truth_ece(scorer.score_dataset(holdout), truth_bins, setting);
}

ErrorPercentile error_percentile(const std::vector<double>& estimates, double truth, double pct) {
    ErrorPercentile out;
    out.absolute = truth == 0.0;
    std::vector<double> errors(estimates.size());
    for (std::size_t b = 0; b < estimates.size(); ++b) {
        const double diff = std::abs(estimates[b] - truth);
        errors[b] = out.absolute ? diff : diff / truth;
    }
    out.value = stats::percentile(std::move(errors), pct);
    return out;
}

std::vector<ErrorPercentile> evaluate_estimators(const std::vector<EstimatorPolicy>& policies,
                                                 const LabeledScores& pool,
                                                 const CalibrationSetting& setting, double truth,
                                                 const EvalPlan& plan, const Grid& grid) {
    if (plan.eval_size == 0 || plan.eval_size > pool.size())
        throw std::invalid_argument("evaluation size must lie in [1, pool size]");
    if (plan.n_boot == 0)
        throw std::invalid_argument("need at least one evaluation set");
    if (!(truth >= 0.0))
        throw std::invalid_argument("ground truth must be non-negative");

    std::mt19937_64 rng(plan.seed);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::vector<std::vector<double>> estimates(policies.size(), std::vector<double>(plan.n_boot));
    std::vector<std::size_t> rows(plan.eval_size);

    // events are extracted once per evaluation set and shared by all policies
    std::vector<CalibrationSetting> reductions;
    if (setting.kind() == CalibrationSetting::Kind::class_wise)
        for (std::size_t c = 0; c < pool.n_classes(); ++c)
            reductions.push_back(CalibrationSetting::class_specific(c));
    else
        reductions.push_back(setting);

    std::vector<ScoredEvents> events(reductions.size());
    for (std::size_t b = 0; b < plan.n_boot; ++b) {
        for (auto& r : rows) r = pick(rng);
        const auto sample = pool.select(rows);
        for (std::size_t k = 0; k < reductions.size(); ++k) events[k] = extract_events(sample, reductions[k]);
        for (std::size_t e = 0; e < policies.size(); ++e) {
            double sum = 0.0;
            for (const auto& ev : events) sum += estimate(policies[e], ev, grid).value;
            estimates[e][b] = sum / static_cast<double>(events.size());
        }
    }

    std::vector<ErrorPercentile> out;
    out.reserve(policies.size());
    for (const auto& est : estimates) out.push_back(error_percentile(est, truth, plan.error_percentile));
    return out;
}

ErrorPercentile evaluate_estimator(const EstimatorPolicy& policy, const LabeledScores& pool,
                                   const CalibrationSetting& setting, double truth,
                                   const EvalPlan& plan, const Grid& grid) {
    return evaluate_estimators({policy}, pool, setting, truth, plan, grid).front();
}

// ---------------------------------------------------------------------------
// cells

std::string CellKey::label() const {
    return "C" + std::to_string(n_classes) + "-d" + std::to_string(dim) + "-spec" +
           std::to_string(spec_index) + "-model" + std::to_string(model_index) + "-split" +
           std::to_string(split);
}

json CellResult::to_json(const std::string& config_hash) const {
    std::vector<int> abs_flags(absolute.begin(), absolute.end());
    return {{"config_hash", config_hash},
            {"key",
             {{"classes", key.n_classes},
              {"dim", key.dim},
              {"spec", key.spec_index},
              {"model", key.model_index},
              {"split", key.split}}},
            {"ok", ok},
            {"error", error},
            {"truth", truth},
            {"absolute", abs_flags},
            {"p95", p95}};
}

CellResult CellResult::from_json(const json& j) {
    CellResult r;
    const auto& k = j.at("key");
    r.key = {k.at("classes").get<std::size_t>(), k.at("dim").get<std::size_t>(),
             k.at("spec").get<std::size_t>(), k.at("model").get<std::size_t>(),
             k.at("split").get<std::size_t>()};
    r.ok = j.at("ok").get<bool>();
    r.error = j.at("error").get<std::string>();
    r.truth = j.at("truth").get<std::vector<double>>();
    for (int f : j.at("absolute").get<std::vector<int>>()) r.absolute.push_back(f != 0);
    r.p95 = j.at("p95").get<std::vector<std::vector<std::vector<double>>>>();
    return r;
}

std::vector<CellKey> enumerate_cells(const BenchConfig& config) {
    std::vector<CellKey> keys;
    keys.reserve(config.n_cells());
    for (auto c : config.classes)
        for (auto d : config.dims)
            for (std::size_t s = 0; s < config.specs_per_combination; ++s)
                for (std::size_t m = 0; m < config.models.size(); ++m)
                    for (std::size_t split = 0; split < config.train_splits; ++split)
                        keys.push_back({c, d, s, m, split});
    return keys;
}

namespace {

synth::Scorer build_scorer(const ModelConfig& model, const synth::Dataset& train,
                           std::shared_ptr<const synth::MixtureSpec> spec) {
    switch (model.kind) {
    case ModelConfig::Kind::logistic_regression:
        return synth::fit_logistic_regression(train, model.logistic);
    case ModelConfig::Kind::gaussian_naive_bayes:
        return synth::fit_gaussian_naive_bayes(train);
    case ModelConfig::Kind::analytic_posterior:
        return synth::make_posterior_scorer(std::move(spec), 1.0);
    case ModelConfig::Kind::distorted_posterior:
        return synth::make_posterior_scorer(std::move(spec), model.temperature);
    }
    throw std::logic_error("unhandled model kind");
}

}  // namespace

CellResult run_cell(const BenchConfig& config, const CellKey& key) {
    CellResult result;
    result.key = key;
    try {
        const auto spec_seed = derive_seed(config.seed, {1, key.n_classes, key.dim, key.spec_index});
        auto spec = std::make_shared<const synth::MixtureSpec>(
            synth::sample_mixture_spec(key.n_classes, key.dim, spec_seed, config.modes_per_class));
        // train and holdout depend on the split only, so models share them
        const auto split_seed = derive_seed(spec_seed, {2, key.split});
        const auto train = synth::sample_dataset(*spec, config.train_size, derive_seed(split_seed, {3}));
        const auto holdout = synth::sample_dataset(*spec, config.holdout_size, derive_seed(split_seed, {4}));
        const auto scorer = build_scorer(config.models[key.model_index], train, spec);
        const auto pool = scorer.score_dataset(holdout);

        const Grid grid(config.grid_points);
        const auto cell_seed = derive_seed(config.seed, {5, key.n_classes, key.dim, key.spec_index,
                                                         key.model_index, key.split});
        result.p95.assign(config.settings.size(), {});
        for (std::size_t si = 0; si < config.settings.size(); ++si) {
            const auto& setting = config.settings[si];
            const double truth = ground_truth_ece(pool, config.truth_bins, setting);
            result.truth.push_back(truth);
            result.absolute.push_back(truth == 0.0);
            auto& table = result.p95[si];
            table.assign(config.estimators.size(), std::vector<double>(config.eval_sizes.size()));
            for (std::size_t zi = 0; zi < config.eval_sizes.size(); ++zi) {
                const EvalPlan plan{config.eval_sizes[zi], config.n_boot_eval, config.error_percentile,
                                    derive_seed(cell_seed, {si, zi})};
                const auto errs = evaluate_estimators(config.estimators, pool, setting, truth, plan, grid);
                for (std::size_t e = 0; e < errs.size(); ++e) table[e][zi] = errs[e].value;
            }
        }
        result.ok = true;
    } catch (const std::exception& e) {
        result = CellResult{};
        result.key = key;
        result.ok = false;
        result.error = e.what();
    }
    return result;
}

BenchmarkReport assemble_report(const BenchConfig& config, const std::vector<CellResult>& cells) {
    BenchmarkReport report;
    json failed = json::array();
    json flagged = json::array();
    for (const auto& cell : cells) {
        if (!cell.ok) {
            failed.push_back({{"cell", cell.key.label()}, {"error", cell.error}});
            continue;
        }
        for (std::size_t si = 0; si < cell.absolute.size(); ++si)
            if (cell.absolute[si])
                flagged.push_back({{"cell", cell.key.label()}, {"setting", config.settings[si].name()}});
    }

    for (std::size_t si = 0; si < config.settings.size(); ++si) {
        for (std::size_t e = 0; e < config.estimators.size(); ++e) {
            for (std::size_t zi = 0; zi < config.eval_sizes.size(); ++zi) {
                std::vector<double> values;
                for (const auto& cell : cells)
                    if (cell.ok && !cell.absolute[si]) values.push_back(cell.p95[si][e][zi]);
                ReportRow row;
                row.setting = config.settings[si].name();
                row.estimator = config.estimators[e].id();
                row.hyperparams = config.estimators[e].descriptor();
                row.eval_size = config.eval_sizes[zi];
                row.n_distributions = values.size();
                row.median_p95_error =
                    values.empty() ? std::nan("") : stats::median(std::move(values));
                report.rows.push_back(std::move(row));
            }
        }
    }

    json truth_summary = json::array();
    for (const auto& cell : cells)
        if (cell.ok) truth_summary.push_back({{"cell", cell.key.label()}, {"truth", cell.truth}});

    report.provenance = {{"config_hash", config.hash()},
                         {"seed", config.seed},
                         {"version", kVersion},
                         {"cells_total", cells.size()},
                         {"cells_failed", failed},
                         {"cells_flagged_zero_truth", flagged},
                         {"ground_truth", truth_summary},
                         {"config", config.to_json()}};
    return report;
}

std::string BenchmarkReport::to_csv() const {
    std::ostringstream os;
    os << "setting,estimator,hyperparams,eval_size,median_p95_error,n_distributions\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.12g", r.median_p95_error);
        os << r.setting << ',' << r.estimator << ',' << r.hyperparams << ',' << r.eval_size << ','
           << buf << ',' << r.n_distributions << '\n';
    }
    return os.str();
}

namespace {

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, const std::string& config_hash,
                                      const CellKey& key) {
    return dir / ("cell-" + fnv1a_hex(config_hash + "/" + key.label()) + ".json");
}

std::optional<CellResult> load_checkpoint(const std::filesystem::path& path, const std::string& config_hash) {
    std::ifstream in(path);
    if (!in)
        return std::nullopt;
    try {
        const auto j = json::parse(in);
        if (j.at("config_hash").get<std::string>() != config_hash)
            return std::nullopt;
        return CellResult::from_json(j);
    } catch (const std::exception&) {
        return std::nullopt;  // partial or stale file: recompute
    }
}

void store_checkpoint(const std::filesystem::path& path, const json& j) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        if (!out)
            throw std::runtime_error("cannot write checkpoint " + tmp.string());
        out << j.dump() << '\n';
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

BenchmarkReport run_benchmark(const BenchConfig& config, const RunOptions& options) {
    config.validate();
    const auto keys = enumerate_cells(config);
    const auto config_hash = config.hash();
    const bool checkpointing = !options.checkpoint_dir.empty();
    if (checkpointing)
        std::filesystem::create_directories(options.checkpoint_dir);

    std::vector<CellResult> results(keys.size());
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr io_error;
    std::size_t done = 0;
    auto report_progress = [&] {
        if (!options.progress)
            return;
        std::lock_guard lock(error_mutex);
        options.progress(++done, keys.size());
    };

    auto worker = [&] {
        for (std::size_t i = next++; i < keys.size(); i = next++) {
            try {
                if (checkpointing && options.resume) {
                    if (auto cached = load_checkpoint(checkpoint_path(options.checkpoint_dir, config_hash, keys[i]),
                                                      config_hash)) {
                        results[i] = std::move(*cached);
                        report_progress();
                        continue;
                    }
                }
                results[i] = run_cell(config, keys[i]);
                if (checkpointing)
                    store_checkpoint(checkpoint_path(options.checkpoint_dir, config_hash, keys[i]),
                                     results[i].to_json(config_hash));
                report_progress();
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!io_error) io_error = std::current_exception();
            }
        }
    };

    const std::size_t n_workers = std::clamp<std::size_t>(options.workers, 1, std::max<std::size_t>(keys.size(), 1));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (io_error)
        std::rethrow_exception(io_error);

    return assemble_report(config, results);
}

}  // namespace calibrex::bench
