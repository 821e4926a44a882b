#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "ffpsurv/likelihood.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace ffpsurv;

namespace {

// Setup-1 log hazard, lambda(t) = log(1 + t): closed-form integral.
double log_hazard_integral(double t) { return (1.0 + t) * std::log1p(t) - t; }

} // namespace

TEST(SpellLikelihood, EmptyPrefixCensoredIsOne) {
    const DiscreteBaselineHazard hz(1.0, {0.7, 0.2}, {true, true});
    EXPECT_EQ(spell_likelihood(GammaParams(2.3, 0.4), 3.1, 0.0, 0, hz), 1.0);
}

TEST(SpellLikelihood, FirstCellEvent) {
    const DiscreteBaselineHazard hz(1.0, {1.0}, {true});
    EXPECT_DOUBLE_EQ(spell_likelihood(GammaParams(1.0, 1.0), 1.0, 0.0, 1, hz), 0.5);
}

TEST(SpellLikelihood, SecondCellEvent) {
    const DiscreteBaselineHazard hz(1.0, {1.0, 1.0}, {true, true});
    EXPECT_NEAR(spell_likelihood(GammaParams(1.0, 1.0), 1.0, 1.0, 1, hz), 1.0 / 6.0, 1e-15);
}

TEST(SpellLikelihood, TailEventKeepsOnlySurvivorTerm) {
    const DiscreteBaselineHazard hz(1.0, {1.0}, {true});
    EXPECT_DOUBLE_EQ(spell_likelihood(GammaParams(1.0, 1.0), 1.0, 1.0, 1, hz), 0.5);
}

TEST(ConditionalLikelihood, PosteriorStateValue) {
    const DiscreteBaselineHazard hz(1.0, {1.0}, {true});
    const double v = conditional_spell_likelihood(GammaParams(1.8, 1.2), 1.0, 0.0, 1, hz);
    EXPECT_NEAR(v, 0.6641344830885363, 1e-14);
    EXPECT_EQ(conditional_spell_likelihood(GammaParams(1.8, 1.2), 1.0, 0.0, 0, hz), 1.0);
}

TEST(ConditionalLikelihood, BaseCaseEqualsSpellLikelihood) {
    const DiscreteBaselineHazard hz(1.0, {0.3, 0.9, 0.1}, {true, true, true});
    const GammaParams g(1.4, 2.2);
    for (double y : {0.0, 1.0, 2.0})
        for (int d : {0, 1}) EXPECT_EQ(conditional_spell_likelihood(g, 0.8, y, d, hz), spell_likelihood(g, 0.8, y, d, hz));
}

TEST(ConditionalLikelihood, ChainProductCloseToMonteCarlo) {
    const DiscreteBaselineHazard hz(1.0, {1.0}, {true});
    const std::vector<Spell> spells{{0.0, 1, {0.0}}, {0.0, 1, {0.0}}};
    const double chain = std::exp(panel_loglik(spells, LinearTransform({0.0}), hz, GammaParams(1.0, 1.0)));
    const auto mc = oracle::monte_carlo_panel({{1.0, 0.0, 1.0, 1}, {1.0, 0.0, 1.0, 1}}, 1.0, 1.0, 400000, 42);
    // exact value is 1 - 2/2 + 1/3 = 1/3
    EXPECT_NEAR(mc.mean, 1.0 / 3.0, 5 * mc.std_error);
    EXPECT_NEAR(chain, mc.mean, 1e-2);
}

TEST(PanelLoglik, CensoredAtOriginIsZero) {
    const DiscreteBaselineHazard hz(1.0, {1.0}, {true});
    const std::vector<Spell> spells{{0.0, 0, {1.0}}, {0.0, 0, {-1.0}}};
    EXPECT_EQ(panel_loglik(spells, LinearTransform({0.3}), hz, GammaParams(1.0, 1.0)), 0.0);
}

TEST(PanelLoglik, TwoEventsComposeVerifiedValues) {
    const DiscreteBaselineHazard hz(1.0, {1.0}, {true});
    const std::vector<Spell> spells{{0.0, 1, {0.0}}, {0.0, 1, {0.0}}};
    const double v = panel_loglik(spells, LinearTransform({0.0}), hz, GammaParams(1.0, 1.0));
    EXPECT_NEAR(v, std::log(0.5) + std::log(0.6641344830885363), 1e-13);
    EXPECT_NEAR(v, -1.1024177958011545, 1e-13);
}

TEST(PanelLoglik, SingleSpellBaseCase) {
    const DiscreteBaselineHazard hz(1.0, {0.4, 0.5, 0.6}, {true, true, true});
    const std::vector<Spell> spells{{1.0, 1, {0.5}}};
    const LinearTransform lt({0.8});
    const GammaParams g(1.3, 0.7);
    EXPECT_DOUBLE_EQ(panel_loglik(spells, lt, hz, g), std::log(spell_likelihood(g, lt(spells[0].x), 1.0, 1, hz)));
}

TEST(PanelLoglik, ZeroLikelihoodNamesSubjectAndSpell) {
    const DiscreteBaselineHazard hz(1.0, {0.4, 0.0}, {true, false});
    const std::vector<Spell> spells{{0.0, 0, {0.0}}, {1.0, 1, {0.0}}};
    try {
        panel_loglik(spells, LinearTransform({0.0}), hz, GammaParams(1.0, 1.0), "subj-7");
        FAIL();
    } catch (const numerical_error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("subj-7"), std::string::npos);
        EXPECT_NE(msg.find("spell 2"), std::string::npos);
    }
}

TEST(DatasetLoglik, EmptyDatasetIsZero) {
    PanelDataset ds;
    ds.p = 2;
    ParameterVector pv;
    pv.beta = {0.1, 0.2};
    EXPECT_EQ(dataset_loglik(ds, pv), 0.0);
}

TEST(DatasetLoglik, OneSubjectEqualsPanelLoglik) {
    auto ds = fixtures::random_panel(3, 1, 5, 2);
    const PanelLikelihood problem(ds, true, false);
    const auto pv = fixtures::random_parameters(problem, 4);
    const auto hz = problem.hazard(pv);
    const double expected = panel_loglik(ds.subjects[0].spells, LinearTransform(pv.beta), hz, pv.prior());
    EXPECT_NEAR(dataset_loglik(ds, pv), expected, 1e-12 * std::abs(expected));
}

TEST(DatasetLoglik, DuplicatedDatasetDoubles) {
    auto ds = fixtures::random_panel(5, 12, 4, 3);
    const PanelLikelihood problem(ds, true, false);
    const auto pv = fixtures::random_parameters(problem, 6);
    const double base = dataset_loglik(ds, pv);
    auto dup = ds;
    for (const auto& s : ds.subjects) dup.subjects.push_back(s);
    EXPECT_DOUBLE_EQ(dataset_loglik(dup, pv), 2.0 * base);
}

TEST(DatasetLoglik, JointScaleInvariance) {
    auto ds = fixtures::random_panel(8, 30, 4, 3);
    const PanelLikelihood problem(ds, true, true);
    const auto pv = fixtures::random_parameters(problem, 9);
    const double base = problem.loglik(pv);
    for (double c : {0.1, 3.0, 10.0}) {
        auto scaled = pv;
        for (auto& d : scaled.log_delta) d += std::log(c);
        *scaled.log_kappa += std::log(c);
        EXPECT_NEAR(problem.loglik(scaled), base, 1e-10 * std::abs(base)) << "c=" << c;
    }
}

TEST(DatasetLoglik, IndependentOfThreadCount) {
    auto ds = fixtures::random_panel(10, 57, 5, 2);
    PanelLikelihood problem(ds, true, false, 1);
    const auto pv = fixtures::random_parameters(problem, 1);
    std::vector<double> g1, g4;
    const double v1 = problem.loglik_grad(pv, g1);
    problem.set_threads(4);
    const double v4 = problem.loglik_grad(pv, g4);
    EXPECT_EQ(v1, v4);
    EXPECT_EQ(g1, g4);
    EXPECT_EQ(problem.loglik(pv), v1);
}

TEST(Gradient, CensoredAtOriginIsZero) {
    PanelDataset ds;
    ds.p = 2;
    for (int i = 0; i < 4; ++i) ds.subjects.push_back({"s" + std::to_string(i), {{0.0, 0, {0.3 * i, -1.0}}, {0.0, 0, {1.0, 2.0}}}});
    const PanelLikelihood problem(ds, true, false);
    auto pv = fixtures::random_parameters(problem, 2);
    for (double g : dataset_loglik_grad(ds, pv)) EXPECT_EQ(g, 0.0);
}

TEST(Gradient, MatchesCentralDifferences) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        for (bool free_kappa : {false, true}) {
            auto ds = fixtures::random_panel(100 + seed, 15, 5, 3);
            const PanelLikelihood problem(ds, true, free_kappa);
            const auto pv = fixtures::random_parameters(problem, 200 + seed);
            std::vector<double> grad;
            problem.loglik_grad(pv, grad);
            auto f = [&](const std::vector<double>& th) {
                auto q = pv;
                q.assign(th);
                return problem.loglik(q);
            };
            const auto theta = pv.flatten();
            for (std::size_t i = 0; i < theta.size(); ++i) {
                const double fd = oracle::central_difference(f, theta, i);
                EXPECT_NEAR(grad[i], fd, 1e-4 * std::max(std::abs(fd), 1e-2)) << pv.name(i) << " seed " << seed;
            }
        }
    }
}

TEST(Gradient, NoFrailtyBaselineMatchesCentralDifferences) {
    auto ds = fixtures::random_panel(77, 20, 3, 2);
    const PanelLikelihood problem(ds, false, false);
    auto pv = fixtures::random_parameters(problem, 78);
    std::vector<double> grad;
    problem.loglik_grad(pv, grad);
    auto f = [&](const std::vector<double>& th) {
        auto q = pv;
        q.assign(th);
        return problem.loglik(q);
    };
    const auto theta = pv.flatten();
    ASSERT_EQ(theta.size(), 2 + problem.free_count());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double fd = oracle::central_difference(f, theta, i);
        EXPECT_NEAR(grad[i], fd, 1e-4 * std::max(std::abs(fd), 1e-2)) << pv.name(i);
    }
}

TEST(Gradient, DeadFeatureCoordinate) {
    auto ds = fixtures::random_panel(12, 20, 4, 3);
    for (auto& s : ds.subjects)
        for (auto& sp : s.spells) sp.x[0] = 0.0;
    const PanelLikelihood problem(ds, true, false);
    const auto pv = fixtures::random_parameters(problem, 13);
    std::vector<double> grad;
    problem.loglik_grad(pv, grad);
    EXPECT_EQ(grad[0], 0.0);
}

TEST(Telescoping, CellProbabilitiesPlusSurvivorSumToOne) {
    std::mt19937_64 gen(21);
    std::uniform_real_distribution<double> u(0.05, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t K = 12;
        std::vector<double> inc(K + 1);
        for (auto& v : inc) v = u(gen);
        const DiscreteBaselineHazard hz(1.0, inc, std::vector<bool>(K + 1, true));
        const GammaParams g(u(gen), u(gen));
        const double phi = u(gen);
        double total = 0.0;
        for (std::size_t k = 0; k <= K; ++k) total += spell_likelihood(g, phi, static_cast<double>(k), 1, hz);
        total += std::pow(1.0 + phi * hz.cumulative(K + 1) / g.rate, -g.shape);
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(RadonNikodym, DiscreteEqualsContinuousAtGridPoints) {
    const std::size_t K = 30;
    std::vector<double> inc(K);
    for (std::size_t k = 0; k < K; ++k) inc[k] = log_hazard_integral(k + 1.0) - log_hazard_integral(k);
    const DiscreteBaselineHazard hz(1.0, inc, std::vector<bool>(K, true));
    const GammaParams g(1.3, 0.9);
    const double phi = 0.6;
    for (std::size_t k = 0; k + 1 < K; ++k) {
        const double y = static_cast<double>(k);
        for (int d : {0, 1}) {
            const double cont = std::pow(1.0 + phi / g.rate * log_hazard_integral(y), -g.shape) -
                                d * std::pow(1.0 + phi / g.rate * log_hazard_integral(y + 1.0), -g.shape);
            EXPECT_NEAR(spell_likelihood(g, phi, y, d, hz), cont, 1e-12 * cont) << "y=" << y << " d=" << d;
        }
    }
}

TEST(Monotonicity, SurvivorTermDecreasesInEachPrefixIncrement) {
    std::vector<double> inc{0.3, 0.5, 0.2, 0.8};
    const GammaParams g(1.1, 0.7);
    const double y = 3.0;
    const double base = spell_likelihood(g, 1.2, y, 0, DiscreteBaselineHazard(1.0, inc, std::vector<bool>(4, true)));
    for (std::size_t k = 0; k < 3; ++k) {
        auto bumped = inc;
        bumped[k] += 0.01;
        EXPECT_LT(spell_likelihood(g, 1.2, y, 0, DiscreteBaselineHazard(1.0, bumped, std::vector<bool>(4, true))), base);
    }
}
