#include "calibrex/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "calibrex/stats.hpp"
#include "fft.hpp"

namespace calibrex {

namespace {

// The kernel is cut where the Gaussian has fallen below ~1e-14 of its peak.
constexpr double kTailSigmas = 8.0;
// Target for the neglected terms of the in-cell Taylor expansion.
constexpr double kSeriesTolerance = 1e-11;
constexpr std::size_t kMaxSeriesOrder = 24;

const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

std::size_t next_pow2(std::size_t n) {
    std::size_t m = 2;
    while (m < n) m <<= 1;
    return m;
}

void check_kde_inputs(std::span<const double> scores, double bandwidth) {
    if (scores.empty())
        throw std::invalid_argument("density estimate needs at least one score");
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
        throw std::invalid_argument("bandwidth must be positive, got " + std::to_string(bandwidth));
    for (double s : scores)
        if (!(s >= 0.0 && s <= 1.0))
            throw std::invalid_argument("scores must lie in [0, 1]");
}

// Kernel sum at every grid point, summing each sample and its two mirror
// images directly. Used when the kernel is too narrow for the grid.
std::vector<double> direct_sum(std::span<const double> scores, double h, const Grid& grid) {
    const std::size_t n = grid.size();
    const double delta = grid.step();
    const double reach = kTailSigmas * h;
    std::vector<double> values(n, 0.0);
    for (double x : scores) {
        for (double y : {x, -x, 2.0 - x}) {
            const double lo = std::max(0.0, std::ceil((y - reach) / delta));
            const double hi = std::min(static_cast<double>(n - 1), std::floor((y + reach) / delta));
            for (auto j = static_cast<std::ptrdiff_t>(lo); j <= static_cast<std::ptrdiff_t>(hi); ++j) {
                const double t = (grid.point(static_cast<std::size_t>(j)) - y) / h;
                values[static_cast<std::size_t>(j)] += std::exp(-0.5 * t * t);
            }
        }
    }
    const double scale = kInvSqrt2Pi / (h * static_cast<double>(scores.size()));
    for (double& v : values) v *= scale;
    return values;
}

// Smallest expansion order whose first neglected term is below tolerance.
// |He_p(t) phi(t)| <= 1.09 sqrt(p!) phi(0) bounds each Taylor term.
std::size_t series_order(double h, double delta) {
    const double ratio = 0.5 * delta / h;
    double term = 3.0 * 1.09 * kInvSqrt2Pi / h;
    for (std::size_t p = 1; p <= kMaxSeriesOrder; ++p) {
        term *= ratio / std::sqrt(static_cast<double>(p));
        if (term < kSeriesTolerance)
            return p - 1;
    }
    return kMaxSeriesOrder;
}

// FFT evaluation of the mirrored kernel sum.
//
// Each point y = g_k + r is attached to its nearest grid node g_k and the
// kernel is expanded in r:
//     K(g_j - y) = sum_p r^p / p! * (-1)^p K^(p)(g_j - g_k)
// so the density is a sum over p of (per-node moments sum r^p) convolved with
// the p-th scaled Hermite function. The p = 0 term alone is nearest-node
// binning; the higher terms remove the binning error.
std::vector<double> fft_sum(std::span<const double> scores, double h, const Grid& grid) {
    const auto n = static_cast<std::ptrdiff_t>(grid.size());
    const double delta = grid.step();
    const auto reach_cells = static_cast<std::ptrdiff_t>(std::ceil(kTailSigmas * h / delta));
    // mirror images live in [-1, 2]
    const std::ptrdiff_t pad = std::min(reach_cells, n - 1);
    const std::ptrdiff_t half_width = std::min(reach_cells, n - 1 + pad);
    const std::size_t m = next_pow2(static_cast<std::size_t>(n + pad + half_width + 1));
    const std::size_t order = series_order(h, delta);

    const detail::RealFft fft(m);
    const std::size_t spec_len = fft.spectrum_length();

    std::vector<detail::FftwBuffer<double>> moments;
    moments.reserve(order + 1);
    for (std::size_t p = 0; p <= order; ++p) {
        moments.push_back(detail::fftw_buffer<double>(m));
        std::fill_n(moments.back().get(), m, 0.0);
    }
    for (double x : scores) {
        for (double y : {x, -x, 2.0 - x}) {
            const auto k = static_cast<std::ptrdiff_t>(std::llround(y / delta));
            if (k < -pad || k > n - 1 + pad)
                continue;
            const double r = y - static_cast<double>(k) * delta;
            const auto pos = static_cast<std::size_t>(k + pad);
            double rp = 1.0;
            for (std::size_t p = 0; p <= order; ++p) {
                moments[p][pos] += rp;
                rp *= r;
            }
        }
    }

    auto kernel = detail::fftw_buffer<double>(m);
    auto spectrum = detail::fftw_buffer<fftw_complex>(spec_len);
    auto data_spectrum = detail::fftw_buffer<fftw_complex>(spec_len);
    auto acc = detail::fftw_buffer<fftw_complex>(spec_len);
    std::fill_n(&acc[0][0], 2 * spec_len, 0.0);

    // He_p(t) phi(t) / (p! h^(p+1)), built by the Hermite recurrence
    std::vector<double> he_prev(static_cast<std::size_t>(2 * half_width + 1));
    std::vector<double> he_cur(he_prev.size());
    std::vector<double> phi(he_prev.size());
    for (std::ptrdiff_t u = -half_width; u <= half_width; ++u) {
        const double t = static_cast<double>(u) * delta / h;
        const auto idx = static_cast<std::size_t>(u + half_width);
        phi[idx] = std::exp(-0.5 * t * t) * kInvSqrt2Pi;
        he_prev[idx] = 0.0;
        he_cur[idx] = 1.0;
    }
    double scale = 1.0 / h;
    for (std::size_t p = 0; p <= order; ++p) {
        if (p > 0) {
            scale /= static_cast<double>(p) * h;
            for (std::ptrdiff_t u = -half_width; u <= half_width; ++u) {
                const double t = static_cast<double>(u) * delta / h;
                const auto idx = static_cast<std::size_t>(u + half_width);
                const double next = t * he_cur[idx] - static_cast<double>(p - 1) * he_prev[idx];
                he_prev[idx] = he_cur[idx];
                he_cur[idx] = next;
            }
        }
        std::fill_n(kernel.get(), m, 0.0);
        for (std::ptrdiff_t u = -half_width; u <= half_width; ++u) {
            const auto idx = static_cast<std::size_t>(u + half_width);
            const auto slot = static_cast<std::size_t>((u + static_cast<std::ptrdiff_t>(m)) %
                                                       static_cast<std::ptrdiff_t>(m));
            kernel[slot] = scale * he_cur[idx] * phi[idx];
        }
        fft.forward(kernel.get(), spectrum.get());
        fft.forward(moments[p].get(), data_spectrum.get());
        for (std::size_t f = 0; f < spec_len; ++f) {
            const double ar = data_spectrum[f][0], ai = data_spectrum[f][1];
            const double br = spectrum[f][0], bi = spectrum[f][1];
            acc[f][0] += ar * br - ai * bi;
            acc[f][1] += ar * bi + ai * br;
        }
    }

    auto out = detail::fftw_buffer<double>(m);
    fft.inverse(acc.get(), out.get());

    std::vector<double> values(static_cast<std::size_t>(n));
    const double norm = 1.0 / (static_cast<double>(m) * static_cast<double>(scores.size()));
    for (std::ptrdiff_t j = 0; j < n; ++j)
        values[static_cast<std::size_t>(j)] =
            std::max(0.0, out[static_cast<std::size_t>(j + pad)] * norm);
    return values;
}

}  // namespace

Grid::Grid(std::size_t n_points) : n_(n_points), step_(0.0) {
    if (n_points < 2)
        throw std::invalid_argument("a grid needs at least two points");
    step_ = 1.0 / static_cast<double>(n_points - 1);
    if (step_ > kMaxGridStep)
        throw std::invalid_argument("grid step " + std::to_string(step_) + " is coarser than " +
                                    std::to_string(kMaxGridStep));
}

std::vector<double> Grid::points() const {
    std::vector<double> pts(n_);
    for (std::size_t i = 0; i < n_; ++i) pts[i] = point(i);
    return pts;
}

double trapezoid(const Grid& grid, std::span<const double> values) {
    if (values.size() != grid.size())
        throw std::invalid_argument("values do not match the grid");
    double sum = 0.5 * (values.front() + values.back());
    for (std::size_t i = 1; i + 1 < values.size(); ++i) sum += values[i];
    return sum * grid.step();
}

double DensityEstimate::integral() const { return trapezoid(grid, values); }

double silverman_bandwidth(std::span<const double> scores) {
    if (scores.size() < 2)
        throw std::invalid_argument("Silverman's rule needs at least two scores");
    const double sd = stats::sample_stddev(scores);
    const double iqr_spread =
        stats::interquartile_range(std::vector<double>(scores.begin(), scores.end())) / 1.34;
    const double shrink = std::pow(static_cast<double>(scores.size()), -0.2);

    // identical scores: the rounded sd is tiny but not always exactly zero
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    if (*lo == *hi)
        return 0.01 * shrink;
    double spread = std::min(sd, iqr_spread);
    if (spread <= 0.0)
        spread = sd;  // heavy ties collapse the IQR first
    return 0.9 * spread * shrink;
}

DensityEstimate kde_mirrored(std::span<const double> scores, double bandwidth, const Grid& grid) {
    check_kde_inputs(scores, bandwidth);
    DensityEstimate est{grid, {}, bandwidth};
    // Below two cells the Taylor series stops converging quickly; the direct
    // sum is cheap there because the kernel spans only a few nodes.
    if (bandwidth < 2.0 * grid.step())
        est.values = direct_sum(scores, bandwidth, grid);
    else
        est.values = fft_sum(scores, bandwidth, grid);
    return est;
}

double density_floor(const Grid& grid) noexcept { return 1e-6 / static_cast<double>(grid.size()); }

namespace {

std::vector<double> hit_scores(const ScoredEvents& events) {
    std::vector<double> out;
    out.reserve(events.size());
    for (std::size_t i = 0; i < events.size(); ++i)
        if (events.hit[i] != 0) out.push_back(events.score[i]);
    return out;
}

Degeneracy degeneracy_of(const ScoredEvents& events) {
    if (events.class_prior >= 1.0)
        return Degeneracy::all_hits;
    if (events.class_prior <= 0.0)
        return Degeneracy::all_misses;
    return Degeneracy::none;
}

void check_events(const ScoredEvents& events, double bandwidth) {
    if (events.size() == 0)
        throw std::invalid_argument("no events");
    if (events.hit.size() != events.score.size())
        throw std::invalid_argument("score and hit vectors differ in length");
    check_kde_inputs(events.score, bandwidth);
}

// Fills NaN entries with the value of the nearest finite entry (left wins ties).
void hold_nearest(std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::ptrdiff_t> left(n, -1), right(n, -1);
    std::ptrdiff_t last = -1;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isnan(v[i])) last = static_cast<std::ptrdiff_t>(i);
        left[i] = last;
    }
    last = -1;
    for (std::size_t i = n; i-- > 0;) {
        if (!std::isnan(v[i])) last = static_cast<std::ptrdiff_t>(i);
        right[i] = last;
    }
    const auto source = v;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isnan(source[i]))
            continue;
        const auto l = left[i], r = right[i];
        if (l < 0 && r < 0)
            continue;
        const auto pick = (r < 0 || (l >= 0 && static_cast<std::ptrdiff_t>(i) - l <= r - static_cast<std::ptrdiff_t>(i))) ? l : r;
        v[i] = source[static_cast<std::size_t>(pick)];
    }
}

}  // namespace

ReliabilityCurve estimate_lce(const ScoredEvents& events, double bandwidth, const Grid& grid) {
    check_events(events, bandwidth);
    ReliabilityCurve curve{grid, {}, {}, std::nullopt, degeneracy_of(events), bandwidth};
    const std::size_t n = grid.size();

    std::vector<double> posterior(n);
    if (curve.degeneracy == Degeneracy::all_hits) {
        std::fill(posterior.begin(), posterior.end(), 1.0);
    } else if (curve.degeneracy == Degeneracy::all_misses) {
        std::fill(posterior.begin(), posterior.end(), 0.0);
    } else {
        const auto all = kde_mirrored(events.score, bandwidth, grid);
        const auto hits = kde_mirrored(hit_scores(events), bandwidth, grid);
        const double floor = density_floor(grid);
        for (std::size_t i = 0; i < n; ++i) {
            if (all.values[i] < floor) {
                posterior[i] = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            posterior[i] = std::clamp(events.class_prior * hits.values[i] / all.values[i], 0.0, 1.0);
        }
        hold_nearest(posterior);
    }

    curve.lce.resize(n);
    curve.rel = posterior;
    for (std::size_t i = 0; i < n; ++i) curve.lce[i] = posterior[i] - grid.point(i);
    return curve;
}

ReliabilityCurve bootstrap_reliability(const ScoredEvents& events, double bandwidth, const Grid& grid,
                                       const BootstrapOptions& options) {
    check_events(events, bandwidth);
    if (options.n_boot < 2)
        throw std::invalid_argument("bootstrap needs at least two resamples");
    if (!(options.low_pct >= 0.0 && options.low_pct < options.high_pct && options.high_pct <= 100.0))
        throw std::invalid_argument("band percentiles must satisfy 0 <= low < high <= 100");
    if (options.low_pct > 50.0 || options.high_pct < 50.0)
        throw std::invalid_argument("band percentiles must bracket the median");

    const std::size_t n_events = events.size();
    const std::size_t n = grid.size();
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<std::size_t> pick(0, n_events - 1);

    // rel values, one row per grid point so each column sort is contiguous
    std::vector<double> samples(n * options.n_boot);
    std::vector<double> score(n_events);
    std::vector<std::uint8_t> hit(n_events);
    for (std::size_t b = 0; b < options.n_boot; ++b) {
        for (std::size_t i = 0; i < n_events; ++i) {
            const auto k = pick(rng);
            score[i] = events.score[k];
            hit[i] = events.hit[k];
        }
        const auto curve = estimate_lce(make_events(score, hit), bandwidth, grid);
        for (std::size_t i = 0; i < n; ++i) samples[i * options.n_boot + b] = curve.rel[i];
    }

    ReliabilityCurve out{grid, std::vector<double>(n), std::vector<double>(n), ReliabilityBands{},
                         degeneracy_of(events), bandwidth};
    auto& bands = *out.bands;
    bands.low_pct = options.low_pct;
    bands.high_pct = options.high_pct;
    bands.lower.resize(n);
    bands.median.resize(n);
    bands.upper.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto first = samples.begin() + static_cast<std::ptrdiff_t>(i * options.n_boot);
        std::sort(first, first + static_cast<std::ptrdiff_t>(options.n_boot));
        const std::span<const double> column(&*first, options.n_boot);
        bands.lower[i] = stats::percentile_sorted(column, options.low_pct);
        bands.median[i] = stats::percentile_sorted(column, 50.0);
        bands.upper[i] = stats::percentile_sorted(column, options.high_pct);
        out.rel[i] = bands.median[i];
        out.lce[i] = out.rel[i] - grid.point(i);
    }
    return out;
}

EceEstimate ece_d(const ScoredEvents& events, double bandwidth, const Grid& grid) {
    check_events(events, bandwidth);
    const std::size_t n = grid.size();
    const double prior = events.class_prior;
    const auto all = kde_mirrored(events.score, bandwidth, grid);

    std::vector<double> weighted_posterior(n, 0.0);  // prior * f(s | hit)
    switch (degeneracy_of(events)) {
    case Degeneracy::all_hits:
        weighted_posterior = all.values;
        break;
    case Degeneracy::all_misses:
        break;
    case Degeneracy::none: {
        const auto hits = kde_mirrored(hit_scores(events), bandwidth, grid);
        for (std::size_t i = 0; i < n; ++i) weighted_posterior[i] = prior * hits.values[i];
        break;
    }
    }

    std::vector<double> integrand(n);
    for (std::size_t i = 0; i < n; ++i)
        integrand[i] = std::abs(weighted_posterior[i] - grid.point(i) * all.values[i]);

    EceEstimate est;
    est.value = std::clamp(trapezoid(grid, integrand), 0.0, 1.0);
    est.estimator_id = "ECE_d";
    est.hyperparams["bandwidth"] = bandwidth;
    return est;
}

}  // namespace calibrex
