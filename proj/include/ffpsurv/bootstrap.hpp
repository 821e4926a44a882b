#pragma once

// Resimulation study: each replicate draws a fresh dataset from a setup,
// fits it, and records the coefficients (and, for the nonlinear setup, the
// held-out C-index). Replicates are independent and are gathered in order.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ffpsurv/error.hpp"
#include "ffpsurv/estimation.hpp"
#include "ffpsurv/metrics.hpp"
#include "ffpsurv/parallel.hpp"
#include "ffpsurv/random.hpp"
#include "ffpsurv/simulation.hpp"

namespace ffpsurv {

struct BootstrapConfig {
    std::string setup = "1";
    std::size_t reps = 50;
    std::uint64_t seed = 0;
    bool naive = true;            // also fit the frailty-free baseline
    double train_fraction = 2.0 / 3.0; // nonlinear setup only
    FitConfig fit;
    unsigned threads = 1;         // replicate workers
};

struct ModelRun {
    bool ok = false;              // converged and finite
    std::vector<double> beta;
    std::optional<double> c_index;
    std::string error;
};

struct ReplicateResult {
    std::uint64_t seed = 0;
    ModelRun frailty;
    std::optional<ModelRun> naive;
};

struct ColumnSummary {
    std::vector<double> mean;
    std::vector<double> sd;
    std::optional<double> c_mean;
    std::optional<double> c_sd;
    std::size_t used = 0;
    std::size_t excluded = 0;
};

struct BootstrapReport {
    BootstrapConfig config;
    SimConfig sim;
    std::vector<ReplicateResult> replicates;

    ColumnSummary summarize(bool naive) const;
};

namespace detail {

inline ModelRun run_model(const PanelDataset& train, const PanelDataset* test, const FitConfig& fc) {
    ModelRun run;
    try {
        const FittedModel m = fit(train, fc);
        run.beta = m.beta;
        run.ok = m.converged;
        if (!m.converged) run.error = "did not converge (" + m.stop_reason + ")";
        if (test && run.ok) {
            const auto preds = predict_panel(m, *test);
            std::vector<double> s, y;
            std::vector<int> d;
            for (const auto& p : preds) {
                s.push_back(p.score);
                y.push_back(p.y);
                d.push_back(p.d);
            }
            run.c_index = c_index(s, y, d);
        }
    } catch (const numerical_error& e) {
        run.ok = false;
        run.error = e.what();
    }
    return run;
}

inline void mean_sd(const std::vector<double>& v, double& mean, double& sd) {
    CompensatedSum s;
    for (double x : v) s.add(x);
    mean = v.empty() ? std::nan("") : s.value() / static_cast<double>(v.size());
    CompensatedSum q;
    for (double x : v) q.add((x - mean) * (x - mean));
    sd = v.size() < 2 ? std::nan("") : std::sqrt(q.value() / static_cast<double>(v.size() - 1));
}

} // namespace detail

inline BootstrapReport run_bootstrap(const BootstrapConfig& cfg) {
    if (cfg.reps == 0) throw validation_error("bootstrap needs at least one replicate");
    cfg.fit.validate();
    BootstrapReport rep;
    rep.config = cfg;
    rep.sim = setup_config(cfg.setup);
    rep.sim.validate();
    const bool split = rep.sim.nonlinear.has_value();
    if (split && !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
        throw validation_error("train_fraction must lie in (0, 1)");
    }
    rep.replicates.resize(cfg.reps);
    FitConfig fc = cfg.fit;
    fc.threads = 1;
    FitConfig naive_fc = fc;
    naive_fc.frailty = false;

    parallel_for(cfg.reps, cfg.threads, [&](std::size_t r) {
        ReplicateResult& out = rep.replicates[r];
        SimConfig sim = rep.sim;
        sim.seed = derive_seed(cfg.seed, r);
        out.seed = sim.seed;
        PanelDataset all = generate(sim);
        PanelDataset train = all, test = all;
        if (split) {
            const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(sim.n)));
            train.subjects.assign(all.subjects.begin(), all.subjects.begin() + static_cast<long>(n_train));
            test.subjects.assign(all.subjects.begin() + static_cast<long>(n_train), all.subjects.end());
        }
        const PanelDataset* held_out = split ? &test : nullptr;
        out.frailty = detail::run_model(train, held_out, fc);
        if (cfg.naive) out.naive = detail::run_model(train, held_out, naive_fc);
    });
    return rep;
}

inline ColumnSummary BootstrapReport::summarize(bool naive) const {
    ColumnSummary s;
    const std::size_t p = sim.feature_count();
    std::vector<std::vector<double>> cols(p);
    std::vector<double> cs;
    for (const auto& r : replicates) {
        const ModelRun* run = naive ? (r.naive ? &*r.naive : nullptr) : &r.frailty;
        if (!run) continue;
        if (!run->ok) {
            ++s.excluded;
            continue;
        }
        ++s.used;
        for (std::size_t k = 0; k < p; ++k) cols[k].push_back(run->beta[k]);
        if (run->c_index) cs.push_back(*run->c_index);
    }
    s.mean.resize(p);
    s.sd.resize(p);
    for (std::size_t k = 0; k < p; ++k) detail::mean_sd(cols[k], s.mean[k], s.sd[k]);
    if (!cs.empty()) {
        double m, sd;
        detail::mean_sd(cs, m, sd);
        s.c_mean = m;
        s.c_sd = sd;
    }
    return s;
}

// Table layout: one mean row and one sd row per model, coefficients in
// columns, with the generating coefficients on top for linear setups.
inline void write_bootstrap_table(std::ostream& os, const BootstrapReport& rep) {
    const std::size_t p = rep.sim.feature_count();
    auto num = [](double v) {
        if (std::isnan(v)) return std::string();
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return std::string(buf);
    };
    os << "model,statistic";
    for (std::size_t k = 0; k < p; ++k) os << ",beta" << k + 1;
    os << ",c_index,used,excluded\n";
    if (!rep.sim.nonlinear) {
        os << "oracle,value";
        for (double b : rep.sim.beta) os << ',' << num(b);
        os << ",,,\n";
    }
    auto rows = [&](const char* name, const ColumnSummary& s) {
        os << name << ",mean";
        for (double v : s.mean) os << ',' << num(v);
        os << ',' << (s.c_mean ? num(*s.c_mean) : "") << ',' << s.used << ',' << s.excluded << '\n';
        os << name << ",sd";
        for (double v : s.sd) os << ',' << num(v);
        os << ',' << (s.c_sd ? num(*s.c_sd) : "") << ',' << s.used << ',' << s.excluded << '\n';
    };
    rows("FFPSurv-L", rep.summarize(false));
    if (rep.config.naive) rows("naive", rep.summarize(true));
}

} // namespace ffpsurv
