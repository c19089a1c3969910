#include "calibrex/synth.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace calibrex::synth {

namespace {

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
    const double top = v.maxCoeff();
    if (!std::isfinite(top))
        return top;
    return top + std::log((v.array() - top).exp().sum());
}

}  // namespace

MixtureSpec::MixtureSpec(std::size_t n_classes, std::size_t dim, std::size_t modes_per_class,
                         std::vector<Mode> modes, std::uint64_t seed)
    : n_classes_(n_classes), dim_(dim), modes_per_class_(modes_per_class), modes_(std::move(modes)),
      seed_(seed) {
    if (n_classes < 2 || dim < 1 || modes_per_class < 1)
        throw std::invalid_argument("mixture needs >= 2 classes, >= 1 dimension and >= 1 mode per class");
    if (modes_.size() != n_classes * modes_per_class)
        throw std::invalid_argument("expected " + std::to_string(n_classes * modes_per_class) +
                                    " modes, got " + std::to_string(modes_.size()));

    const double log_weight = -std::log(static_cast<double>(n_classes)) -
                              std::log(static_cast<double>(modes_per_class));
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    std::vector<std::size_t> per_class(n_classes, 0);
    for (const auto& mode : modes_) {
        if (mode.label >= n_classes || mode.mean.size() != static_cast<Eigen::Index>(dim) ||
            mode.covariance.rows() != static_cast<Eigen::Index>(dim) ||
            mode.covariance.cols() != static_cast<Eigen::Index>(dim))
            throw std::invalid_argument("mode has the wrong shape or label");
        ++per_class[mode.label];
        if (!mode.covariance.isApprox(mode.covariance.transpose()))
            throw std::invalid_argument("mode covariance is not symmetric");
        Eigen::LLT<Eigen::MatrixXd> llt(mode.covariance);
        if (llt.info() != Eigen::Success)
            throw std::invalid_argument("mode covariance is not positive definite");
        Eigen::MatrixXd factor = llt.matrixL();
        const double log_det_half = factor.diagonal().array().log().sum();
        factors_.push_back(std::move(factor));
        log_norm_.push_back(log_weight - log_det_half - 0.5 * static_cast<double>(dim) * log_2pi);
    }
    for (auto count : per_class)
        if (count != modes_per_class)
            throw std::invalid_argument("every class needs exactly modes_per_class modes");
}

Eigen::VectorXd MixtureSpec::class_log_joint(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    Eigen::MatrixXd per_mode(n_classes_, modes_per_class_);
    std::vector<std::size_t> filled(n_classes_, 0);
    for (std::size_t k = 0; k < modes_.size(); ++k) {
        const Eigen::VectorXd z = factors_[k].triangularView<Eigen::Lower>().solve(x - modes_[k].mean);
        const auto c = modes_[k].label;
        per_mode(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(filled[c]++)) =
            log_norm_[k] - 0.5 * z.squaredNorm();
    }
    Eigen::VectorXd out(n_classes_);
    for (std::size_t c = 0; c < n_classes_; ++c)
        out(static_cast<Eigen::Index>(c)) = log_sum_exp(per_mode.row(static_cast<Eigen::Index>(c)).transpose());
    return out;
}

MixtureSpec sample_mixture_spec(std::size_t n_classes, std::size_t dim, std::uint64_t seed,
                                std::size_t modes_per_class) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> entry(-0.3, 0.3);
    const auto d = static_cast<Eigen::Index>(dim);

    std::vector<Mode> modes;
    modes.reserve(n_classes * modes_per_class);
    for (std::size_t c = 0; c < n_classes; ++c) {
        for (std::size_t m = 0; m < modes_per_class; ++m) {
            Mode mode;
            mode.label = c;
            mode.mean.resize(d);
            for (Eigen::Index i = 0; i < d; ++i) mode.mean(i) = unit(rng);
            Eigen::MatrixXd a(d, d);
            for (Eigen::Index i = 0; i < d; ++i)
                for (Eigen::Index j = 0; j < d; ++j) a(i, j) = entry(rng);
            mode.covariance = a * a.transpose() + kCovarianceJitter * Eigen::MatrixXd::Identity(d, d);
            // exact symmetry; the product can differ in the last bit
            mode.covariance = 0.5 * (mode.covariance + mode.covariance.transpose()).eval();
            modes.push_back(std::move(mode));
        }
    }
    return {n_classes, dim, modes_per_class, std::move(modes), seed};
}

Dataset sample_dataset(const MixtureSpec& spec, std::size_t n_samples, std::uint64_t seed) {
    if (n_samples == 0)
        throw std::invalid_argument("dataset size must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_class(0, spec.n_classes() - 1);
    std::uniform_int_distribution<std::size_t> pick_mode(0, spec.modes_per_class() - 1);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto d = static_cast<Eigen::Index>(spec.dim());

    Dataset data;
    data.n_classes = spec.n_classes();
    data.features.resize(static_cast<Eigen::Index>(n_samples), d);
    data.labels.resize(n_samples);
    Eigen::VectorXd z(d);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const auto c = pick_class(rng);
        const auto k = c * spec.modes_per_class() + pick_mode(rng);
        for (Eigen::Index j = 0; j < d; ++j) z(j) = gauss(rng);
        data.features.row(static_cast<Eigen::Index>(i)) =
            (spec.modes()[k].mean + spec.cholesky(k) * z).transpose();
        data.labels[i] = c;
    }
    return data;
}

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
    const double top = logits.maxCoeff();
    // scalar exp: Eigen's packet exp clamps -inf to a denormal instead of 0
    Eigen::VectorXd e = (logits.array() - top).unaryExpr([](double v) { return std::exp(v); });
    return e / e.sum();
}

Eigen::VectorXd analytic_posterior(const MixtureSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
    return softmax(spec.class_log_joint(x));
}

Eigen::VectorXd distorted_posterior(const MixtureSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                                    double temperature) {
    if (!(temperature > 0.0))
        throw std::invalid_argument("temperature must be positive");
    const Eigen::VectorXd joint = spec.class_log_joint(x);
    const Eigen::VectorXd log_post = joint.array() - log_sum_exp(joint);
    return softmax(log_post / temperature);
}

namespace {

void check_training_set(const Dataset& train) {
    if (train.size() == 0 || train.features.rows() != static_cast<Eigen::Index>(train.size()))
        throw std::invalid_argument("training set is empty or malformed");
    std::vector<std::size_t> counts(train.n_classes, 0);
    for (auto y : train.labels) {
        if (y >= train.n_classes)
            throw std::invalid_argument("training label out of range");
        ++counts[y];
    }
    std::size_t present = 0;
    for (auto n : counts) present += n > 0 ? 1 : 0;
    if (present < 2)
        throw std::invalid_argument("training set contains a single class");
}

}  // namespace

LossAndGradient logistic_loss(const LogisticModel& model, const Dataset& data, double l2) {
    const auto n = static_cast<Eigen::Index>(data.size());
    const Eigen::MatrixXd logits = (data.features * model.weights.transpose()).rowwise() + model.bias.transpose();
    Eigen::MatrixXd residual(n, logits.cols());  // p - onehot(y)
    double nll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd row = logits.row(i).transpose();
        const double lse = log_sum_exp(row);
        const auto y = static_cast<Eigen::Index>(data.labels[static_cast<std::size_t>(i)]);
        nll -= row(y) - lse;
        residual.row(i) = (row.array() - lse).exp().transpose();
        residual(i, y) -= 1.0;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    LossAndGradient out;
    out.loss = nll * inv_n + 0.5 * l2 * model.weights.squaredNorm();
    out.grad_weights = residual.transpose() * data.features * inv_n + l2 * model.weights;
    out.grad_bias = residual.colwise().sum().transpose() * inv_n;
    return out;
}

Scorer fit_logistic_regression(const Dataset& train, const LogisticHyper& hyper) {
    check_training_set(train);
    const auto c = static_cast<Eigen::Index>(train.n_classes);
    LogisticModel model{Eigen::MatrixXd::Zero(c, train.features.cols()), Eigen::VectorXd::Zero(c)};
    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        const auto step = logistic_loss(model, train, hyper.l2);
        if (std::abs(previous - step.loss) < 1e-8)
            break;
        previous = step.loss;
        model.weights -= hyper.learning_rate * step.grad_weights;
        model.bias -= hyper.learning_rate * step.grad_bias;
    }
    return Scorer(std::move(model));
}

Scorer fit_gaussian_naive_bayes(const Dataset& train) {
    check_training_set(train);
    const auto c = static_cast<Eigen::Index>(train.n_classes);
    const auto d = train.features.cols();
    NaiveBayesModel model{Eigen::MatrixXd::Zero(c, d), Eigen::MatrixXd::Zero(c, d), Eigen::VectorXd(c)};
    std::vector<double> counts(train.n_classes, 0.0);
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto y = static_cast<Eigen::Index>(train.labels[i]);
        counts[train.labels[i]] += 1.0;
        model.means.row(y) += train.features.row(static_cast<Eigen::Index>(i));
    }
    for (Eigen::Index k = 0; k < c; ++k) {
        const double nk = counts[static_cast<std::size_t>(k)];
        if (nk == 1.0)
            throw std::invalid_argument("class " + std::to_string(k) + " has a single training sample");
        if (nk > 0.0) model.means.row(k) /= nk;
    }
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto y = static_cast<Eigen::Index>(train.labels[i]);
        model.variances.row(y) +=
            (train.features.row(static_cast<Eigen::Index>(i)) - model.means.row(y)).array().square().matrix();
    }
    const double total = static_cast<double>(train.size());
    for (Eigen::Index k = 0; k < c; ++k) {
        const double nk = counts[static_cast<std::size_t>(k)];
        if (nk > 0.0) {
            model.variances.row(k) = (model.variances.row(k) / nk).array().max(1e-9).matrix();
            model.log_priors(k) = std::log(nk / total);
        } else {
            model.variances.row(k).setOnes();
            model.log_priors(k) = -std::numeric_limits<double>::infinity();
        }
    }
    return Scorer(std::move(model));
}

Scorer make_posterior_scorer(std::shared_ptr<const MixtureSpec> spec, double temperature) {
    if (!spec)
        throw std::invalid_argument("posterior scorer needs a mixture");
    if (!(temperature > 0.0))
        throw std::invalid_argument("temperature must be positive");
    return Scorer(PosteriorModel{std::move(spec), temperature});
}

Scorer::Kind Scorer::kind() const noexcept {
    if (std::holds_alternative<LogisticModel>(model_))
        return Kind::logistic_regression;
    if (std::holds_alternative<NaiveBayesModel>(model_))
        return Kind::gaussian_naive_bayes;
    return std::get<PosteriorModel>(model_).temperature == 1.0 ? Kind::analytic_posterior
                                                               : Kind::distorted_posterior;
}

std::size_t Scorer::n_classes() const noexcept {
    return std::visit(
        [](const auto& m) -> std::size_t {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, LogisticModel>)
                return static_cast<std::size_t>(m.bias.size());
            else if constexpr (std::is_same_v<T, NaiveBayesModel>)
                return static_cast<std::size_t>(m.log_priors.size());
            else
                return m.spec->n_classes();
        },
        model_);
}

Eigen::VectorXd Scorer::score(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return std::visit(
        [&](const auto& m) -> Eigen::VectorXd {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, LogisticModel>) {
                return softmax(m.weights * x + m.bias);
            } else if constexpr (std::is_same_v<T, NaiveBayesModel>) {
                const auto c = m.log_priors.size();
                Eigen::VectorXd logits(c);
                for (Eigen::Index k = 0; k < c; ++k) {
                    const auto var = m.variances.row(k).transpose().array();
                    const auto diff = x.array() - m.means.row(k).transpose().array();
                    logits(k) = m.log_priors(k) -
                                0.5 * ((2.0 * std::numbers::pi * var).log() + diff.square() / var).sum();
                }
                return softmax(logits);
            } else {
                return m.temperature == 1.0 ? analytic_posterior(*m.spec, x)
                                            : distorted_posterior(*m.spec, x, m.temperature);
            }
        },
        model_);
}

LabeledScores Scorer::score_dataset(const Dataset& data) const {
    const std::size_t c = n_classes();
    std::vector<double> flat(data.size() * c);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Eigen::VectorXd s = score(data.features.row(static_cast<Eigen::Index>(i)).transpose());
        for (std::size_t k = 0; k < c; ++k) flat[i * c + k] = s(static_cast<Eigen::Index>(k));
    }
    return make_trusted(std::move(flat), c, data.labels);
}

}  // namespace calibrex::synth
