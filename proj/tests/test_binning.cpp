#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "calibrex/binning.hpp"
#include "calibrex/estimators.hpp"
#include "support/oracles.hpp"
#include "support/property.hpp"

using namespace calibrex;

namespace {

ScoredEvents events(std::vector<double> s, std::vector<std::uint8_t> h) {
    return make_events(std::move(s), std::move(h));
}

}  // namespace

TEST(UniformBinning, Thresholds) {
    EXPECT_EQ(build_uniform_binning(2).thresholds(), (std::vector<double>{0.5, 1.0}));
    EXPECT_EQ(build_uniform_binning(1).thresholds(), (std::vector<double>{1.0}));
    EXPECT_EQ(build_uniform_binning(4).thresholds(), (std::vector<double>{0.25, 0.5, 0.75, 1.0}));
    EXPECT_THROW(build_uniform_binning(0), std::invalid_argument);
}

TEST(AdaptiveBinning, Thresholds) {
    const std::vector<double> s{0.1, 0.2, 0.6, 0.9};
    EXPECT_EQ(build_adaptive_binning(s, 2).thresholds(), (std::vector<double>{0.4, 1.0}));
    EXPECT_EQ(build_adaptive_binning(s, 1).thresholds(), (std::vector<double>{1.0}));
}

TEST(AdaptiveBinning, TiesMerge) {
    const std::vector<double> s{0.3, 0.3, 0.3, 0.3};
    const auto b = build_adaptive_binning(s, 2);
    EXPECT_EQ(b.thresholds(), (std::vector<double>{1.0}));
    EXPECT_EQ(b.merged_bins(), 1u);
}

TEST(AdaptiveBinning, Errors) {
    EXPECT_THROW(build_adaptive_binning(std::vector<double>{0.1, 0.2}, 3), std::invalid_argument);
    EXPECT_THROW(build_adaptive_binning(std::vector<double>{}, 1), std::invalid_argument);
    EXPECT_THROW(build_adaptive_binning(std::vector<double>{0.1}, 0), std::invalid_argument);
}

TEST(OneBinMapping, IntervalsAreRightClosed) {
    const auto b2 = build_uniform_binning(2);
    EXPECT_EQ(b2.locate(0.2), 0u);
    EXPECT_EQ(b2.locate(0.6), 1u);
    EXPECT_EQ(b2.locate(0.5), 0u);
    EXPECT_EQ(b2.locate(0.0), 0u);
    EXPECT_EQ(build_uniform_binning(7).locate(0.0), 0u);
    EXPECT_EQ(b2.locate(1.0), 1u);
    const auto m = build_one_bin_mapping(std::vector<double>{0.2, 0.6}, b2);
    EXPECT_EQ(m.row(0).count, 1u);
    EXPECT_EQ(m.row(0).bin[0], 0u);
    EXPECT_EQ(m.row(1).bin[0], 1u);
    EXPECT_EQ(m.row(1).weight[0], 1.0);
}

TEST(ConvexMapping, Examples) {
    const auto b2 = build_uniform_binning(2);
    const auto m = build_convex_mapping(std::vector<double>{0.5, 0.1, 0.625}, b2);
    const auto w = m.dense();
    EXPECT_DOUBLE_EQ(w[0], 0.5);
    EXPECT_DOUBLE_EQ(w[1], 0.5);
    EXPECT_DOUBLE_EQ(w[2], 1.0);
    EXPECT_DOUBLE_EQ(w[3], 0.0);
    EXPECT_DOUBLE_EQ(w[4], 0.25);
    EXPECT_DOUBLE_EQ(w[5], 0.75);
}

TEST(BinnedEce, HandExample) {
    const auto e = events({0.2, 0.4, 0.6, 0.8}, {0, 0, 1, 1});
    const auto r = binned_ece(e, build_one_bin_mapping(e.score, build_uniform_binning(2)));
    EXPECT_EQ(r.value, 0.3);
    EXPECT_EQ(r.estimator_id, "ECE_l");
    EXPECT_EQ(r.hyperparams.at("bins"), 2.0);
}

TEST(BinnedEce, CancellingAndPerfect) {
    const auto e = events({0.5, 0.5}, {1, 0});
    for (auto kind : {BinningKind::uniform, BinningKind::adaptive})
        for (auto map : {MappingKind::one_bin, MappingKind::convex})
            for (std::size_t b : {1, 2}) {
                const auto bins = kind == BinningKind::uniform ? build_uniform_binning(b)
                                                               : build_adaptive_binning(e.score, b);
                EXPECT_EQ(binned_ece(e, build_mapping(e.score, bins, map)).value, 0.0);
            }
    const auto p = events({1.0}, {1});
    EXPECT_EQ(binned_ece(p, build_one_bin_mapping(p.score, build_uniform_binning(1))).value, 0.0);
}

TEST(BinnedEce, Ids) {
    EXPECT_STREQ(binned_estimator_id(BinningKind::uniform, MappingKind::one_bin), "ECE_l");
    EXPECT_STREQ(binned_estimator_id(BinningKind::adaptive, MappingKind::one_bin), "ECE_a");
    EXPECT_STREQ(binned_estimator_id(BinningKind::uniform, MappingKind::convex), "ECE_c");
    EXPECT_STREQ(binned_estimator_id(BinningKind::adaptive, MappingKind::convex), "ECE_ac");
}

TEST(BinnedEce, SizeMismatchThrows) {
    const auto e = events({0.2, 0.4}, {0, 1});
    const auto m = build_one_bin_mapping(std::vector<double>{0.2}, build_uniform_binning(2));
    EXPECT_THROW(binned_ece(e, m), std::invalid_argument);
    EXPECT_THROW(binned_mce(e, m), std::invalid_argument);
}

TEST(BinnedMce, Examples) {
    const auto e = events({0.2, 0.4, 0.6, 0.8}, {0, 0, 1, 1});
    EXPECT_DOUBLE_EQ(binned_mce(e, build_one_bin_mapping(e.score, build_uniform_binning(2))).value, 0.3);
    const auto z = events({0.5, 0.5}, {1, 0});
    EXPECT_EQ(binned_mce(z, build_one_bin_mapping(z.score, build_uniform_binning(2))).value, 0.0);
    const auto one = events({0.9}, {0});
    EXPECT_DOUBLE_EQ(binned_mce(one, build_one_bin_mapping(one.score, build_uniform_binning(1))).value, 0.9);
}

TEST(DiagramPoints, Examples) {
    const auto e = events({0.2, 0.4}, {0, 1});
    const auto p = diagram_points(e, build_one_bin_mapping(e.score, build_uniform_binning(1)));
    ASSERT_EQ(p.size(), 1u);
    EXPECT_DOUBLE_EQ(p[0].mean_score, 0.3);
    EXPECT_DOUBLE_EQ(p[0].event_rate, 0.5);
    EXPECT_DOUBLE_EQ(p[0].weight_mass, 2.0);

    const auto f = events({0.2, 0.8}, {1, 0});
    const auto q = diagram_points(f, build_one_bin_mapping(f.score, build_uniform_binning(2)));
    EXPECT_DOUBLE_EQ(q[0].mean_score, 0.2);
    EXPECT_DOUBLE_EQ(q[0].event_rate, 1.0);
    EXPECT_DOUBLE_EQ(q[1].mean_score, 0.8);
    EXPECT_DOUBLE_EQ(q[1].event_rate, 0.0);

    std::vector<double> s(10, 0.7);
    std::vector<std::uint8_t> h{1, 1, 1, 1, 1, 1, 1, 0, 0, 0};
    const auto cal = events(s, h);
    const auto r = diagram_points(cal, build_one_bin_mapping(cal.score, build_uniform_binning(15)));
    EXPECT_EQ(r.size(), 15u);
    std::size_t nonempty = 0;
    for (const auto& pt : r) {
        if (pt.empty)
            continue;
        ++nonempty;
        EXPECT_NEAR(pt.mean_score, pt.event_rate, 1e-12);
    }
    EXPECT_EQ(nonempty, 1u);
}

TEST(SqrtHeuristic, Examples) {
    EXPECT_EQ(sqrt_bin_heuristic(100), 10u);
    EXPECT_EQ(sqrt_bin_heuristic(30), 5u);
    EXPECT_EQ(sqrt_bin_heuristic(1), 1u);
}

TEST(EstimatorPolicy, NamesAndResolution) {
    EXPECT_EQ(EstimatorPolicy::from_name("legacy").id(), "ECE_l");
    EXPECT_EQ(EstimatorPolicy::from_name("adaptive-convex").id(), "ECE_ac");
    EXPECT_EQ(EstimatorPolicy::from_name("kde").id(), "ECE_d");
    EXPECT_EQ(EstimatorPolicy::from_name("legacy").descriptor(), "bins=15");
    EXPECT_THROW(EstimatorPolicy::from_name("nope"), std::invalid_argument);
    const auto sq = EstimatorPolicy::binned_policy(BinningKind::uniform, MappingKind::one_bin, std::nullopt);
    EXPECT_EQ(sq.descriptor(), "bins=sqrt");
    EXPECT_EQ(sq.resolve_bins(100), 10u);
    const auto ad = EstimatorPolicy::binned_policy(BinningKind::adaptive, MappingKind::one_bin, 15);
    EXPECT_EQ(ad.resolve_bins(4), 4u);
    EXPECT_THROW(EstimatorPolicy::binned_policy(BinningKind::uniform, MappingKind::one_bin, 0),
                 std::invalid_argument);
}

// ---------------------------------------------------------------- properties

namespace {

struct Instance {
    ScoredEvents events;
    std::size_t bins;
};

Instance random_instance(std::mt19937_64& rng, std::size_t max_n = 50, std::size_t max_b = 8) {
    std::uniform_int_distribution<std::size_t> nd(1, max_n), bd(1, max_b);
    const auto n = nd(rng);
    auto s = oracle::random_scores(rng, n);
    auto h = oracle::random_hits(rng, s);
    return {make_events(std::move(s), std::move(h)), bd(rng)};
}

BinningScheme scheme(const Instance& in, BinningKind kind) {
    return kind == BinningKind::uniform ? build_uniform_binning(in.bins)
                                        : build_adaptive_binning(in.events.score,
                                                                 std::min(in.bins, in.events.size()));
}

constexpr BinningKind kKinds[] = {BinningKind::uniform, BinningKind::adaptive};
constexpr MappingKind kMaps[] = {MappingKind::one_bin, MappingKind::convex};

}  // namespace

TEST(BinnedProperties, MatchesBruteForceWeightedMean) {
    prop::for_all(21, 500, [](std::mt19937_64& rng) {
        const auto in = random_instance(rng);
        const auto b = std::min(in.bins, in.events.size());
        for (auto kind : kKinds)
            for (auto map : kMaps) {
                const auto bins = kind == BinningKind::uniform ? build_uniform_binning(in.bins)
                                                               : build_adaptive_binning(in.events.score, b);
                const double got = binned_ece(in.events, build_mapping(in.events.score, bins, map)).value;
                const double want = oracle::binned_ece(in.events.score, in.events.hit,
                                                       kind == BinningKind::uniform ? in.bins : b,
                                                       kind == BinningKind::adaptive, map == MappingKind::convex);
                ASSERT_NEAR(got, want, 1e-12) << binned_estimator_id(kind, map);
            }
    });
}

TEST(BinnedProperties, PartitionOfUnityAndMass) {
    prop::for_all(22, prop::kCases, [](std::mt19937_64& rng) {
        const auto in = random_instance(rng, 200, 40);
        for (auto kind : kKinds)
            for (auto map : kMaps) {
                const auto m = build_mapping(in.events.score, scheme(in, kind), map);
                const auto w = m.dense();
                double total = 0.0;
                for (std::size_t i = 0; i < m.size(); ++i) {
                    double row = 0.0;
                    std::size_t nonzero = 0;
                    for (std::size_t j = 0; j < m.n_bins(); ++j) {
                        const double v = w[i * m.n_bins() + j];
                        ASSERT_GE(v, 0.0);
                        row += v;
                        nonzero += v != 0.0;
                    }
                    if (map == MappingKind::one_bin) {
                        ASSERT_EQ(row, 1.0);
                        ASSERT_EQ(nonzero, 1u);
                    } else {
                        ASSERT_NEAR(row, 1.0, 1e-12);
                        ASSERT_LE(nonzero, 2u);
                    }
                    total += row;
                }
                ASSERT_NEAR(total, static_cast<double>(in.events.size()), 1e-9);
            }
    });
}

TEST(BinnedProperties, RangeAndTriangleBound) {
    prop::for_all(23, prop::kCases, [](std::mt19937_64& rng) {
        const auto in = random_instance(rng, 200, 40);
        double bound = 0.0;
        for (std::size_t i = 0; i < in.events.size(); ++i) bound += std::abs(in.events.hit[i] - in.events.score[i]);
        bound /= static_cast<double>(in.events.size());
        for (auto kind : kKinds)
            for (auto map : kMaps) {
                const auto m = build_mapping(in.events.score, scheme(in, kind), map);
                const double ece = binned_ece(in.events, m).value;
                const double mce = binned_mce(in.events, m).value;
                ASSERT_GE(ece, 0.0);
                ASSERT_LE(ece, 1.0);
                ASSERT_GE(mce, 0.0);
                ASSERT_LE(mce, 1.0);
                ASSERT_LE(ece, bound + 1e-12);
                ASSERT_LE(ece, mce + 1e-12);  // a mass-weighted mean never exceeds the max
            }
    });
}

TEST(BinnedProperties, SingleBinMappingsAgree) {
    prop::for_all(24, prop::kCases, [](std::mt19937_64& rng) {
        const auto in = random_instance(rng, 200, 1);
        for (auto kind : kKinds) {
            const auto bins = kind == BinningKind::uniform ? build_uniform_binning(1)
                                                           : build_adaptive_binning(in.events.score, 1);
            ASSERT_EQ(binned_ece(in.events, build_one_bin_mapping(in.events.score, bins)).value,
                      binned_ece(in.events, build_convex_mapping(in.events.score, bins)).value);
        }
    });
}

TEST(BinnedProperties, DiagramPathAgrees) {
    prop::for_all(25, prop::kCases, [](std::mt19937_64& rng) {
        const auto in = random_instance(rng, 300, 30);
        for (auto kind : kKinds) {
            const auto m = build_one_bin_mapping(in.events.score, scheme(in, kind));
            const auto pts = diagram_points(in.events, m);
            double via_points = 0.0, mass = 0.0;
            for (const auto& p : pts) {
                mass += p.weight_mass;
                if (p.empty)
                    continue;
                ASSERT_GE(p.mean_score, 0.0);
                ASSERT_LE(p.mean_score, 1.0);
                ASSERT_GE(p.event_rate, 0.0);
                ASSERT_LE(p.event_rate, 1.0);
                via_points += p.weight_mass / in.events.size() * std::abs(p.event_rate - p.mean_score);
            }
            ASSERT_NEAR(mass, static_cast<double>(in.events.size()), 1e-9);
            ASSERT_NEAR(via_points, binned_ece(in.events, m).value, 1e-12);
        }
    });
}

TEST(BinnedProperties, AdaptiveIsEqualFrequencyOnDistinctScores) {
    prop::for_all(26, prop::kCases, [](std::mt19937_64& rng) {
        std::uniform_int_distribution<std::size_t> nd(1, 300);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const auto n = nd(rng);
        std::vector<double> s(n);
        for (auto& x : s) x = u(rng);
        std::uniform_int_distribution<std::size_t> bd(1, n);
        const auto b = std::min<std::size_t>(bd(rng), 40);
        const auto bins = build_adaptive_binning(s, b);
        ASSERT_EQ(bins.size(), b);
        std::vector<std::size_t> counts(b, 0);
        for (double x : s) ++counts[bins.locate(x)];
        for (auto c : counts) {
            ASSERT_GE(c, n / b);
            ASSERT_LE(c, (n + b - 1) / b);
        }
    });
}

TEST(BinnedProperties, PermutationInvariant) {
    prop::for_all(27, prop::kCases, [](std::mt19937_64& rng) {
        const auto in = random_instance(rng, 100, 20);
        std::vector<std::size_t> perm(in.events.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<double> s;
        std::vector<std::uint8_t> h;
        for (auto i : perm) s.push_back(in.events.score[i]), h.push_back(in.events.hit[i]);
        const Instance shuffled{make_events(s, h), in.bins};
        for (auto kind : kKinds)
            for (auto map : kMaps) {
                const double a = binned_ece(in.events, build_mapping(in.events.score, scheme(in, kind), map)).value;
                const double b =
                    binned_ece(shuffled.events, build_mapping(shuffled.events.score, scheme(shuffled, kind), map)).value;
                ASSERT_NEAR(a, b, 1e-12);
            }
    });
}

TEST(BinnedProperties, ThresholdsAreWellFormed) {
    prop::for_all(28, prop::kCases, [](std::mt19937_64& rng) {
        const auto in = random_instance(rng, 200, 40);
        for (auto kind : kKinds) {
            const auto bins = scheme(in, kind);
            const auto& t = bins.thresholds();
            ASSERT_GE(t.size(), 1u);
            ASSERT_EQ(t.back(), 1.0);
            ASSERT_GT(t.front(), 0.0);
            for (std::size_t j = 1; j < t.size(); ++j) ASSERT_LT(t[j - 1], t[j]);
            for (double s : in.events.score) {
                const auto j = bins.locate(s);
                ASSERT_TRUE(s <= bins.upper(j) && (j == 0 || s > bins.lower(j)));
            }
        }
    });
}
