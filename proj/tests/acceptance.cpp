// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// The resimulation studies use a single fixed seed chosen up front.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ffpsurv/bootstrap.hpp"
#include "ffpsurv/estimation.hpp"
#include "ffpsurv/frailty_chain.hpp"
#include "ffpsurv/io.hpp"
#include "ffpsurv/likelihood.hpp"
#include "ffpsurv/simulation.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace ffpsurv;

namespace {

constexpr std::uint64_t study_seed = 20240101;
int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
    std::printf("%s: %s -- %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string vec(const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt("%.4f", v[i]);
    return s + "]";
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

ColumnSummary study(const std::string& setup, std::size_t reps) {
    BootstrapConfig cfg;
    cfg.setup = setup;
    cfg.reps = reps;
    cfg.seed = study_seed;
    cfg.naive = false;
    cfg.threads = default_threads();
    return run_bootstrap(cfg).summarize(false);
}

void coefficient_recovery(const std::string& name, const std::string& setup, double tol, bool check_sd) {
    const std::vector<double> oracle{0.4, -1.0, 1.0};
    const auto s = study(setup, 50);
    bool ok = s.used > 0;
    for (std::size_t k = 0; k < 3; ++k) ok = ok && std::abs(s.mean[k] - oracle[k]) <= tol;
    std::string detail = "mean " + vec(s.mean) + " (tolerance " + fmt("%.2f", tol) + ")";
    if (check_sd) {
        bool sd_ok = true;
        for (double v : s.sd) sd_ok = sd_ok && v >= 0.1 && v <= 0.35;
        detail += (sd_ok ? ", sd " : ", sd OUT OF [0.1, 0.35] ") + vec(s.sd);
        ok = ok && sd_ok;
    } else {
        detail += ", sd " + vec(s.sd);
    }
    detail += ", " + std::to_string(s.used) + " used, " + std::to_string(s.excluded) + " excluded";
    report(ok, name, detail);
}

void predictive_regime() {
    const auto s = study("nonlinear", 20);
    const bool ok = s.c_mean && *s.c_mean >= 0.55 && *s.c_mean <= 0.68;
    report(ok, "nonlinear setup test C-index mean in [0.55, 0.68] over 20 replicates",
           "C-index " + fmt("%.4f", s.c_mean.value_or(NAN)) + " +- " + fmt("%.4f", s.c_sd.value_or(NAN)) + ", " +
               std::to_string(s.used) + " used");
}

void moment_oracle() {
    double worst = 0.0;
    for (double a : {0.5, 1.0, 2.0, 5.0}) {
        for (double eps : {0.01, 0.1, 0.5, 0.9, 0.99}) {
            const double xi = 1.0;
            const double xp = xi / (1.0 - eps);
            const XiPair pair{xi, xp, eps, false};
            const GammaParams prior(a, 1.0);
            const GammaParams g = posterior_update(prior, pair, 1);
            const PosteriorMoments m = posterior_moments_oracle(prior, pair);
            worst = std::max({worst, rel(g.shape / g.rate, m.mu1), rel(g.shape * (g.shape + 1) / (g.rate * g.rate), m.mu2)});
        }
    }
    const GammaParams w = posterior_update(GammaParams(1.0, 1.0), XiPair{1.0, 2.0, 0.5, false}, 1);
    const double wp = std::max(rel(w.shape, 1.8), rel(w.rate, 1.2));
    report(worst <= 1e-8 && wp <= 1e-12, "moment-matched Gamma equals quadrature posterior moments",
           "grid max rel err " + fmt("%.2e", worst) + " (<= 1e-8); worked point (" + fmt("%.15g", w.shape) + ", " +
               fmt("%.15g", w.rate) + ") rel err " + fmt("%.2e", wp) + " (<= 1e-12)");
}

void limit_suite() {
    double small = 0.0, large = 0.0;
    for (double a : {0.5, 1.0, 2.0, 5.0}) {
        for (double xi : {0.3, 1.0, 4.0}) {
            const double e1 = 1e-6;
            const auto s = moment_matched_update(a, xi, e1);
            const double xp = xi / (1.0 - e1);
            small = std::max({small, rel(s.shape, a + 1.0), rel(s.rate, 0.5 * (xi + xp))});
            const auto l = moment_matched_update(a, xi, 1.0 - 1e-10);
            large = std::max({large, rel(l.shape, a), rel(l.rate, xi)});
        }
    }
    report(small <= 1e-3 && large <= 1e-3, "closed-form update matches both eps limits",
           "eps=1e-6 max rel dev " + fmt("%.2e", small) + ", eps=1-1e-10 max rel dev " + fmt("%.2e", large) +
               " (<= 1e-3)");
}

void telescoping() {
    std::mt19937_64 gen(study_seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int inst = 0; inst < 200; ++inst) {
        const std::size_t K = 1 + static_cast<std::size_t>(u(gen) * 12);
        std::vector<double> delta(K);
        for (double& d : delta) d = std::exp(-3.0 + 5.0 * u(gen));
        const DiscreteBaselineHazard hz(1.0, delta, std::vector<bool>(K, true));
        const GammaParams g(std::exp(-2.0 + 5.0 * u(gen)), std::exp(-2.0 + 4.0 * u(gen)));
        const double phi = std::exp(-2.0 + 4.0 * u(gen));
        CompensatedSum total;
        for (std::size_t k = 0; k < K; ++k) total.add(spell_likelihood(g, phi, static_cast<double>(k), 1, hz));
        total.add(spell_likelihood(g, phi, static_cast<double>(K), 0, hz));
        worst = std::max(worst, std::abs(total.value() - 1.0));
    }
    report(worst <= 1e-12, "cell probabilities plus survivor mass sum to one",
           "200 random instances, max |sum - 1| = " + fmt("%.2e", worst) + " (<= 1e-12)");
}

void chain_vs_monte_carlo() {
    std::mt19937_64 gen(study_seed + 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int bad = 0;
    double worst_excess = -1.0;
    for (int subj = 0; subj < 20; ++subj) {
        const std::size_t K = 6;
        std::vector<double> delta(K);
        for (double& d : delta) d = std::exp(-2.0 + 2.5 * u(gen));
        const DiscreteBaselineHazard hz(1.0, delta, std::vector<bool>(K, true));
        const double shape = std::exp(-1.0 + 2.0 * u(gen));
        const double rate = std::exp(-1.0 + 2.0 * u(gen));
        const LinearTransform lt({0.7, -0.4});
        std::vector<Spell> spells(2);
        std::vector<oracle::SpellTerm> terms;
        for (auto& sp : spells) {
            sp.x = {2.0 * u(gen) - 1.0, 2.0 * u(gen) - 1.0};
            const std::size_t k = static_cast<std::size_t>(u(gen) * (K - 1));
            sp.y = static_cast<double>(k);
            sp.d = u(gen) < 0.7 ? 1 : 0;
            terms.push_back({lt(sp.x), hz.cumulative(k), hz.cumulative(k + 1), sp.d});
        }
        const double chain = std::exp(panel_loglik(spells, lt, hz, GammaParams(shape, rate)));
        const auto mc = oracle::monte_carlo_panel(terms, shape, rate, 1000000, study_seed + 100 + subj);
        const double excess = std::abs(chain - mc.mean) - (3.0 * mc.std_error + 0.02);
        worst_excess = std::max(worst_excess, excess);
        if (excess > 0.0) ++bad;
    }
    report(bad == 0, "chain likelihood agrees with 1e6-draw Monte-Carlo on 20 two-spell subjects",
           std::to_string(20 - bad) + "/20 within 3 SE + 0.02; worst margin " + fmt("%.4f", worst_excess));
}

void gradient_check() {
    double worst = 0.0;
    int bad = 0;
    for (std::uint64_t inst = 0; inst < 10; ++inst) {
        const auto ds = fixtures::random_panel(study_seed + inst, 12, 4, 3);
        const bool free_kappa = inst % 2 == 1;
        const PanelLikelihood problem(ds, true, free_kappa);
        const ParameterVector pv = fixtures::random_parameters(problem, study_seed + 50 + inst);
        const auto grad = dataset_loglik_grad(ds, pv);
        const auto f = [&](const std::vector<double>& theta) {
            ParameterVector q = pv;
            q.assign(theta);
            return dataset_loglik(ds, q);
        };
        const auto theta = pv.flatten();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double fd = oracle::central_difference(f, theta, i);
            const double err = std::abs(grad[i] - fd);
            const double scaled = err / std::max(std::abs(fd), 1e-3);
            worst = std::max(worst, scaled);
            if (err > 1e-4 * std::abs(fd) + 1e-7) ++bad;
        }
    }
    report(bad == 0, "analytic gradient matches central differences on 10 random instances",
           std::to_string(bad) + " components outside rtol 1e-4; worst scaled error " + fmt("%.2e", worst));
}

void scale_invariance() {
    double worst = 0.0;
    for (std::uint64_t inst = 0; inst < 10; ++inst) {
        const auto ds = fixtures::random_panel(study_seed + 200 + inst, 15, 5, 2);
        const PanelLikelihood problem(ds, true, true);
        const ParameterVector pv = fixtures::random_parameters(problem, study_seed + 300 + inst);
        const double base = problem.loglik(pv);
        for (double c : {0.1, 3.0, 10.0}) {
            ParameterVector q = pv;
            for (double& d : q.log_delta) d += std::log(c);
            *q.log_kappa += std::log(c);
            worst = std::max(worst, rel(problem.loglik(q), base));
        }
    }
    report(worst <= 1e-10, "log-likelihood invariant under (delta, kappa) -> (c delta, c kappa)",
           "c in {0.1, 3, 10} on 10 instances, max rel change " + fmt("%.2e", worst) + " (<= 1e-10)");
}

std::string pipeline_bytes(unsigned threads) {
    std::ostringstream out;
    SimConfig sim = setup_config("1");
    sim.seed = study_seed;
    const PanelDataset ds = generate(sim, threads);
    write_panel_csv(out, ds);
    FitConfig fc;
    fc.threads = threads;
    ModelFile f;
    f.model = fit(ds, fc);
    f.seed = sim.seed;
    f.data_hash = data_hash(ds);
    out << to_json(f).dump(2);
    BootstrapConfig bc;
    bc.setup = "4";
    bc.reps = 6;
    bc.seed = study_seed;
    bc.threads = threads;
    write_bootstrap_table(out, run_bootstrap(bc));
    return out.str();
}

void determinism() {
    const std::string a = pipeline_bytes(1);
    const std::string b = pipeline_bytes(1);
    const std::string c = pipeline_bytes(4);
    report(a == b && a == c, "simulate -> fit -> bootstrap byte-identical across runs and thread counts",
           std::to_string(a.size()) + " bytes; run-to-run " + (a == b ? "identical" : "DIFFERENT") +
               ", 1 vs 4 threads " + (a == c ? "identical" : "DIFFERENT"));
}

} // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::pair<const char*, std::function<void()>>> checks = {
        {"setup 1", [] { coefficient_recovery("setup 1 coefficient recovery (50 replicates, mean +-0.08, sd in [0.1, 0.35])", "1", 0.08, true); }},
        {"setup 3", [] { coefficient_recovery("setup 3 two-point frailty robustness (50 replicates, mean +-0.10)", "3", 0.10, false); }},
        {"setup 4", [] { coefficient_recovery("setup 4 wide panel (50 replicates, mean +-0.08)", "4", 0.08, false); }},
        {"nonlinear", predictive_regime},
        {"moments", moment_oracle},
        {"limits", limit_suite},
        {"telescoping", telescoping},
        {"monte carlo", chain_vs_monte_carlo},
        {"gradient", gradient_check},
        {"scale", scale_invariance},
        {"determinism", determinism},
    };
    for (const auto& [name, fn] : checks) {
        try {
            fn();
        } catch (const std::exception& e) {
            report(false, name, std::string("threw: ") + e.what());
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%d of %zu criteria failed (%.1f s)\n", failures, checks.size(), secs);
    return failures == 0 ? 0 : 1;
}
