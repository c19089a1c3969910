#pragma once

// Domain types shared by every estimator, plus the reduction of a multiclass
// score matrix to the (score, indicator) pairs a calibration setting needs.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace calibrex {

/// Malformed or inconsistent input data (as opposed to a bad argument).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kRowSumTolerance = 1e-6;

/// N x C matrix of simplex rows and the matching class labels.
///
/// Only obtainable through validate(), so every instance satisfies the
/// simplex and label-range invariants.
class LabeledScores {
public:
    std::size_t size() const noexcept { return labels_.size(); }
    std::size_t n_classes() const noexcept { return n_classes_; }

    std::span<const double> row(std::size_t i) const noexcept {
        return {scores_.data() + i * n_classes_, n_classes_};
    }
    double score(std::size_t i, std::size_t c) const noexcept { return scores_[i * n_classes_ + c]; }
    std::size_t label(std::size_t i) const noexcept { return labels_[i]; }

    const std::vector<double>& flat_scores() const noexcept { return scores_; }
    const std::vector<std::size_t>& labels() const noexcept { return labels_; }

    /// Rows picked by index (with repetition), e.g. for bootstrap resamples.
    LabeledScores select(std::span<const std::size_t> rows) const;

private:
    friend LabeledScores validate(std::vector<double> flat_scores, std::size_t n_classes,
                                  std::vector<std::size_t> labels);
    friend LabeledScores make_trusted(std::vector<double> flat_scores, std::size_t n_classes,
                                      std::vector<std::size_t> labels);

    std::vector<double> scores_;
    std::vector<std::size_t> labels_;
    std::size_t n_classes_ = 0;
};

/// Checks shape, finiteness, label range and row sums. Rows off the simplex
/// by less than kRowSumTolerance are renormalized; anything worse throws
/// DataError.
LabeledScores validate(std::vector<double> flat_scores, std::size_t n_classes,
                       std::vector<std::size_t> labels);
LabeledScores validate(const std::vector<std::vector<double>>& rows,
                       const std::vector<std::size_t>& labels);

/// Builds LabeledScores from rows already known to be on the simplex (scorer
/// output). Skips the per-row checks; still checks shape.
LabeledScores make_trusted(std::vector<double> flat_scores, std::size_t n_classes,
                           std::vector<std::size_t> labels);

/// One-dimensional view of a calibration problem: a score and whether the
/// event it predicts happened.
struct ScoredEvents {
    std::vector<double> score;
    std::vector<std::uint8_t> hit;
    double class_prior = 0.0;

    std::size_t size() const noexcept { return score.size(); }
};

/// Builds events and computes class_prior from the hits.
ScoredEvents make_events(std::vector<double> score, std::vector<std::uint8_t> hit);

class CalibrationSetting {
public:
    enum class Kind { class_specific, class_wise, confidence };

    static CalibrationSetting class_specific(std::size_t c) { return {Kind::class_specific, c}; }
    static CalibrationSetting class_wise() { return {Kind::class_wise, 0}; }
    static CalibrationSetting confidence() { return {Kind::confidence, 0}; }

    /// Accepts "confidence", "classwise"/"class_wise", "class:<c>".
    static CalibrationSetting parse(const std::string& text);

    Kind kind() const noexcept { return kind_; }
    /// Only meaningful for class_specific.
    std::size_t target_class() const noexcept { return class_; }

    std::string name() const;

    friend bool operator==(const CalibrationSetting&, const CalibrationSetting&) = default;

private:
    CalibrationSetting(Kind kind, std::size_t c) : kind_(kind), class_(c) {}

    Kind kind_;
    std::size_t class_;
};

struct EceEstimate {
    double value = 0.0;
    std::string estimator_id;
    CalibrationSetting setting = CalibrationSetting::confidence();
    std::map<std::string, double> hyperparams;
};

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> row) noexcept;

/// Reduces a score matrix to events. class_wise has no single reduction and
/// throws std::invalid_argument; iterate class_specific and use
/// aggregate_classwise instead.
ScoredEvents extract_events(const LabeledScores& data, const CalibrationSetting& setting);

/// Mean of per-class estimates. Hyperparameters shared by every class keep
/// their key; differing ones are reported as "<key>[c]".
EceEstimate aggregate_classwise(const std::vector<EceEstimate>& per_class);

}  // namespace calibrex
