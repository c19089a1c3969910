#pragma once

// Synthetic classification problems with known posteriors, and the scorers
// trained or derived on them.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "calibrex/core.hpp"

namespace calibrex::synth {

inline constexpr std::size_t kDefaultModesPerClass = 4;
inline constexpr double kCovarianceJitter = 1e-6;

struct Mode {
    std::size_t label = 0;
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

/// Gaussian mixture with equally likely classes and equally likely modes
/// within a class.
class MixtureSpec {
public:
    MixtureSpec(std::size_t n_classes, std::size_t dim, std::size_t modes_per_class,
                std::vector<Mode> modes, std::uint64_t seed);

    std::size_t n_classes() const noexcept { return n_classes_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t modes_per_class() const noexcept { return modes_per_class_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const std::vector<Mode>& modes() const noexcept { return modes_; }

    /// Lower Cholesky factor of mode k's covariance.
    const Eigen::MatrixXd& cholesky(std::size_t k) const noexcept { return factors_[k]; }

    /// log p(x, Y = c) for every class c.
    Eigen::VectorXd class_log_joint(const Eigen::Ref<const Eigen::VectorXd>& x) const;

private:
    std::size_t n_classes_;
    std::size_t dim_;
    std::size_t modes_per_class_;
    std::vector<Mode> modes_;
    std::uint64_t seed_;
    std::vector<Eigen::MatrixXd> factors_;
    std::vector<double> log_norm_;
};

/// Means uniform on [0,1]^d; covariances A A^T + jitter * I with A uniform
/// on [-0.3, 0.3]^(d x d).
MixtureSpec sample_mixture_spec(std::size_t n_classes, std::size_t dim, std::uint64_t seed,
                                std::size_t modes_per_class = kDefaultModesPerClass);

struct Dataset {
    Eigen::MatrixXd features;  // N x d
    std::vector<std::size_t> labels;
    std::size_t n_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
};

Dataset sample_dataset(const MixtureSpec& spec, std::size_t n_samples, std::uint64_t seed);

/// Numerically stable softmax.
Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits);

/// Exact Bayes posterior P(Y | x) of the mixture.
Eigen::VectorXd analytic_posterior(const MixtureSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x);

/// softmax(log posterior / T). T = 1 is the exact posterior, T > 1 flattens
/// it and T < 1 sharpens it.
Eigen::VectorXd distorted_posterior(const MixtureSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                                    double temperature);

struct LogisticHyper {
    double learning_rate = 0.1;
    std::size_t epochs = 5000;
    double l2 = 1e-4;
};

/// Multinomial logistic model softmax(W x + b).
struct LogisticModel {
    Eigen::MatrixXd weights;  // C x d
    Eigen::VectorXd bias;     // C
};

struct LossAndGradient {
    double loss = 0.0;
    Eigen::MatrixXd grad_weights;
    Eigen::VectorXd grad_bias;
};

/// Mean cross-entropy plus (l2 / 2) * ||W||^2; the bias is not penalized.
LossAndGradient logistic_loss(const LogisticModel& model, const Dataset& data, double l2);

struct NaiveBayesModel {
    Eigen::MatrixXd means;      // C x d
    Eigen::MatrixXd variances;  // C x d
    Eigen::VectorXd log_priors; // -inf for classes absent from training
};

struct PosteriorModel {
    std::shared_ptr<const MixtureSpec> spec;
    double temperature = 1.0;
};

class Scorer {
public:
    enum class Kind { logistic_regression, gaussian_naive_bayes, analytic_posterior, distorted_posterior };

    explicit Scorer(LogisticModel m) : model_(std::move(m)) {}
    explicit Scorer(NaiveBayesModel m) : model_(std::move(m)) {}
    explicit Scorer(PosteriorModel m) : model_(std::move(m)) {}

    Kind kind() const noexcept;
    std::size_t n_classes() const noexcept;

    Eigen::VectorXd score(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    /// Scores every row of the dataset.
    LabeledScores score_dataset(const Dataset& data) const;

    const std::variant<LogisticModel, NaiveBayesModel, PosteriorModel>& model() const noexcept {
        return model_;
    }

private:
    std::variant<LogisticModel, NaiveBayesModel, PosteriorModel> model_;
};

/// Full-batch gradient descent from zero weights; stops when the loss moves
/// by less than 1e-8 or the epochs run out.
Scorer fit_logistic_regression(const Dataset& train, const LogisticHyper& hyper = {});

Scorer fit_gaussian_naive_bayes(const Dataset& train);

Scorer make_posterior_scorer(std::shared_ptr<const MixtureSpec> spec, double temperature = 1.0);

}  // namespace calibrex::synth
