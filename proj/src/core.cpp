#include "calibrex/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace calibrex {

namespace {

void check_shape(const std::vector<double>& flat, std::size_t n_classes,
                 const std::vector<std::size_t>& labels) {
    if (labels.empty())
        throw DataError("score matrix is empty");
    if (n_classes < 2)
        throw DataError("at least two classes are required, got " + std::to_string(n_classes));
    if (flat.size() != labels.size() * n_classes)
        throw DataError("dimension mismatch: " + std::to_string(flat.size()) + " scores for " +
                        std::to_string(labels.size()) + " labels and " +
                        std::to_string(n_classes) + " classes");
}

}  // namespace

LabeledScores LabeledScores::select(std::span<const std::size_t> rows) const {
    LabeledScores out;
    out.n_classes_ = n_classes_;
    out.scores_.resize(rows.size() * n_classes_);
    out.labels_.resize(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto r = rows[k];
        std::copy_n(scores_.begin() + static_cast<std::ptrdiff_t>(r * n_classes_), n_classes_,
                    out.scores_.begin() + static_cast<std::ptrdiff_t>(k * n_classes_));
        out.labels_[k] = labels_[r];
    }
    return out;
}

LabeledScores validate(std::vector<double> flat_scores, std::size_t n_classes,
                       std::vector<std::size_t> labels) {
    check_shape(flat_scores, n_classes, labels);
    const std::size_t n = labels.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= n_classes)
            throw DataError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                            " is out of range for " + std::to_string(n_classes) + " classes");
        double* row = flat_scores.data() + i * n_classes;
        double sum = 0.0;
        for (std::size_t c = 0; c < n_classes; ++c) {
            if (!std::isfinite(row[c]))
                throw DataError("non-finite score at row " + std::to_string(i));
            if (row[c] < 0.0 || row[c] > 1.0)
                throw DataError("score outside [0,1] at row " + std::to_string(i));
            sum += row[c];
        }
        if (std::abs(sum - 1.0) > kRowSumTolerance)
            throw DataError("row " + std::to_string(i) + " sums to " + std::to_string(sum) +
                            ", not 1");
        if (sum != 1.0)
            for (std::size_t c = 0; c < n_classes; ++c) row[c] /= sum;
    }

    LabeledScores out;
    out.scores_ = std::move(flat_scores);
    out.labels_ = std::move(labels);
    out.n_classes_ = n_classes;
    return out;
}

LabeledScores validate(const std::vector<std::vector<double>>& rows,
                       const std::vector<std::size_t>& labels) {
    if (rows.empty() || labels.empty())
        throw DataError("score matrix is empty");
    if (rows.size() != labels.size())
        throw DataError("dimension mismatch: " + std::to_string(rows.size()) + " rows, " +
                        std::to_string(labels.size()) + " labels");
    const std::size_t c = rows.front().size();
    std::vector<double> flat;
    flat.reserve(rows.size() * c);
    for (const auto& r : rows) {
        if (r.size() != c)
            throw DataError("ragged score matrix");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return validate(std::move(flat), c, labels);
}

LabeledScores make_trusted(std::vector<double> flat_scores, std::size_t n_classes,
                           std::vector<std::size_t> labels) {
    check_shape(flat_scores, n_classes, labels);
    LabeledScores out;
    out.scores_ = std::move(flat_scores);
    out.labels_ = std::move(labels);
    out.n_classes_ = n_classes;
    return out;
}

ScoredEvents make_events(std::vector<double> score, std::vector<std::uint8_t> hit) {
    if (score.size() != hit.size())
        throw std::invalid_argument("score and hit vectors differ in length");
    ScoredEvents ev;
    ev.score = std::move(score);
    ev.hit = std::move(hit);
    if (!ev.hit.empty()) {
        const auto hits = std::accumulate(ev.hit.begin(), ev.hit.end(), std::size_t{0});
        ev.class_prior = static_cast<double>(hits) / static_cast<double>(ev.hit.size());
    }
    return ev;
}

CalibrationSetting CalibrationSetting::parse(const std::string& text) {
    if (text == "confidence" || text == "conf")
        return confidence();
    if (text == "classwise" || text == "class_wise" || text == "cw")
        return class_wise();
    if (text.rfind("class:", 0) == 0) {
        const auto digits = text.substr(6);
        if (!digits.empty() && std::all_of(digits.begin(), digits.end(), ::isdigit))
            return class_specific(std::stoul(digits));
    }
    throw std::invalid_argument("unknown calibration setting '" + text + "'");
}

std::string CalibrationSetting::name() const {
    switch (kind_) {
    case Kind::class_specific:
        return "class:" + std::to_string(class_);
    case Kind::class_wise:
        return "classwise";
    case Kind::confidence:
        return "confidence";
    }
    return {};
}

std::size_t argmax(std::span<const double> row) noexcept {
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
        if (row[c] > row[best]) best = c;
    return best;
}

ScoredEvents extract_events(const LabeledScores& data, const CalibrationSetting& setting) {
    const std::size_t n = data.size();
    std::vector<double> score(n);
    std::vector<std::uint8_t> hit(n);
    switch (setting.kind()) {
    case CalibrationSetting::Kind::class_specific: {
        const auto c = setting.target_class();
        if (c >= data.n_classes())
            throw std::invalid_argument("class index " + std::to_string(c) + " out of range for " +
                                        std::to_string(data.n_classes()) + " classes");
        for (std::size_t i = 0; i < n; ++i) {
            score[i] = data.score(i, c);
            hit[i] = data.label(i) == c ? 1 : 0;
        }
        break;
    }
    case CalibrationSetting::Kind::confidence:
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = data.row(i);
            const auto pred = argmax(row);
            score[i] = row[pred];
            hit[i] = data.label(i) == pred ? 1 : 0;
        }
        break;
    case CalibrationSetting::Kind::class_wise:
        throw std::invalid_argument(
            "class-wise setting has no single event reduction; iterate over classes");
    }
    return make_events(std::move(score), std::move(hit));
}

EceEstimate aggregate_classwise(const std::vector<EceEstimate>& per_class) {
    if (per_class.empty())
        throw std::invalid_argument("no per-class estimates to aggregate");
    const auto& id = per_class.front().estimator_id;
    double sum = 0.0;
    for (const auto& e : per_class) {
        if (e.estimator_id != id)
            throw std::invalid_argument("mixed estimator ids: " + id + " and " + e.estimator_id);
        sum += e.value;
    }

    EceEstimate out;
    out.value = sum / static_cast<double>(per_class.size());
    out.estimator_id = id;
    out.setting = CalibrationSetting::class_wise();
    for (const auto& [key, value] : per_class.front().hyperparams) {
        const bool shared = std::all_of(per_class.begin(), per_class.end(), [&](const EceEstimate& e) {
            const auto it = e.hyperparams.find(key);
            return it != e.hyperparams.end() && it->second == value;
        });
        if (shared) {
            out.hyperparams[key] = value;
            continue;
        }
        for (std::size_t c = 0; c < per_class.size(); ++c) {
            const auto it = per_class[c].hyperparams.find(key);
            if (it != per_class[c].hyperparams.end())
                out.hyperparams[key + "[" + std::to_string(c) + "]"] = it->second;
        }
    }
    return out;
}

}  // namespace calibrex
