#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "ffpsurv/model_core.hpp"

using namespace ffpsurv;

TEST(Transform, ZeroCoefficientsGiveOne) {
    const LinearTransform lt({0.0, 0.0, 0.0});
    const std::vector<double> x{5.0, -2.0, 7.0};
    EXPECT_EQ(transform(lt, x), 1.0);
}

TEST(Transform, IdentityCase) {
    const LinearTransform lt({1.0});
    const std::vector<double> x{0.0};
    EXPECT_EQ(transform(lt, x), 1.0);
}

TEST(Transform, MatchesDirectArithmetic) {
    const LinearTransform lt({0.4, -1.0, 1.0});
    const std::vector<double> x{1.0, 1.0, 1.0};
    EXPECT_NEAR(transform(lt, x), 1.491824698, 1e-9);
}

TEST(Transform, DimensionMismatchNamesBothLengths) {
    const LinearTransform lt({1.0, 2.0});
    const std::vector<double> x{1.0, 2.0, 3.0};
    try {
        transform(lt, x);
        FAIL() << "expected dimension_error";
    } catch (const dimension_error& e) {
        EXPECT_EQ(e.expected(), 2u);
        EXPECT_EQ(e.got(), 3u);
        EXPECT_NE(std::string(e.what()).find("expected 2"), std::string::npos);
    }
}

TEST(Transform, MultiplicativeOverConcatenatedBlocks) {
    std::mt19937_64 gen(7);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> b1(3), b2(2), x1(3), x2(2);
        for (auto* v : {&b1, &b2, &x1, &x2})
            for (auto& e : *v) e = nd(gen);
        std::vector<double> b = b1, x = x1;
        b.insert(b.end(), b2.begin(), b2.end());
        x.insert(x.end(), x2.begin(), x2.end());
        const double joint = LinearTransform(b)(x);
        const double split = LinearTransform(b1)(x1) * LinearTransform(b2)(x2);
        EXPECT_NEAR(joint / split, 1.0, 1e-12);
        EXPECT_GT(joint, 0.0);
    }
}

TEST(BuildBaseline, MaskFollowsOccupiedIntervals) {
    const std::vector<double> ys{0.0, 0.0, 2.0};
    const auto hz = build_baseline(1.0, ys);
    EXPECT_EQ(hz.free_mask(), (std::vector<bool>{true, false, true}));
    EXPECT_EQ(hz.size(), 3u);
}

TEST(BuildBaseline, EmptyInputGivesEmptyGrid) {
    const auto hz = build_baseline(1.0, std::vector<double>{});
    EXPECT_EQ(hz.size(), 0u);
    EXPECT_EQ(hz.cumulative(0), 0.0);
    EXPECT_TRUE(std::isinf(hz.cumulative(1)));
}

TEST(BuildBaseline, AllIntervalsOccupied) {
    const auto hz = build_baseline(2.0, std::vector<double>{0.0, 2.0, 4.0, 4.0});
    EXPECT_EQ(hz.free_mask(), (std::vector<bool>{true, true, true}));
}

TEST(BuildBaseline, RejectsOffGridOutcomeWithRow) {
    try {
        build_baseline(1.0, std::vector<double>{0.0, 1.5});
        FAIL();
    } catch (const validation_error& e) {
        ASSERT_TRUE(e.row().has_value());
        EXPECT_EQ(*e.row(), 2u);
    }
}

TEST(BuildBaseline, ToleratesCsvRoundingNoise) {
    const auto hz = build_baseline(0.1, std::vector<double>{0.30000000000000004, 0.7});
    EXPECT_EQ(hz.size(), 8u);
    EXPECT_TRUE(hz.free_mask()[3]);
    EXPECT_TRUE(hz.free_mask()[7]);
}

TEST(BuildBaseline, PermutationInvariant) {
    std::vector<double> ys{0, 3, 3, 7, 1, 12, 5, 0, 9};
    const auto ref = build_baseline(1.0, ys);
    std::mt19937 gen(3);
    for (int i = 0; i < 20; ++i) {
        std::shuffle(ys.begin(), ys.end(), gen);
        const auto hz = build_baseline(1.0, ys);
        EXPECT_EQ(hz.free_mask(), ref.free_mask());
    }
}

TEST(Baseline, CumulativeDifferencesEqualIncrements) {
    const DiscreteBaselineHazard hz(1.0, {0.1, 0.0, 0.7, 1e-9, 3.0}, {true, false, true, true, true});
    EXPECT_EQ(hz.cumulative(0), 0.0);
    for (std::size_t k = 1; k <= hz.size(); ++k) {
        EXPECT_GE(hz.cumulative(k), hz.cumulative(k - 1));
        // equal up to the rounding of the running sum
        const double ulp = std::numeric_limits<double>::epsilon() * hz.cumulative(k);
        EXPECT_NEAR(hz.cumulative(k) - hz.cumulative(k - 1), hz.increments()[k - 1], ulp);
    }
}

TEST(Baseline, RejectsNonZeroFixedIncrement) {
    EXPECT_THROW(DiscreteBaselineHazard(1.0, {0.1, 0.2}, {true, false}), validation_error);
    EXPECT_THROW(DiscreteBaselineHazard(1.0, {-0.1}, {true}), validation_error);
}

TEST(Baseline, FreeValuesRoundTrip) {
    const auto mask = build_baseline(1.0, std::vector<double>{0, 2, 3});
    const std::vector<double> v{0.5, 0.25, 2.0};
    const auto hz = mask.with_free_values(v);
    EXPECT_EQ(hz.increments(), (std::vector<double>{0.5, 0.0, 0.25, 2.0}));
    EXPECT_EQ(hz.free_values(), v);
}

TEST(GammaParams, RejectsNonPositive) {
    EXPECT_THROW(GammaParams(0.0, 1.0), validation_error);
    EXPECT_THROW(GammaParams(1.0, -1.0), validation_error);
    EXPECT_THROW(GammaParams(INFINITY, 1.0), validation_error);
    EXPECT_NO_THROW(GammaParams(0.3, 7.0));
}

TEST(PanelDataset, ValidateFlagsRow) {
    PanelDataset ds;
    ds.p = 1;
    ds.psi = 1.0;
    ds.subjects.push_back({"a", {{0.0, 1, {0.1}}, {2.0, 0, {0.2}}}});
    ds.subjects.push_back({"b", {{1.0, 2, {0.1}}}});
    try {
        ds.validate();
        FAIL();
    } catch (const validation_error& e) {
        EXPECT_EQ(*e.row(), 3u);
    }
}
