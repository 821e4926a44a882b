#pragma once

// Maximum likelihood for {beta, delta, alpha, (kappa)} by L-BFGS on the
// unconstrained parameters (beta, log delta, log alpha, log kappa).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ffpsurv/error.hpp"
#include "ffpsurv/lbfgs.hpp"
#include "ffpsurv/likelihood.hpp"
#include "ffpsurv/model_core.hpp"

namespace ffpsurv {

inline constexpr double delta_init_floor = 1e-6;
inline const double delta_effective_zero = std::exp(-30.0);

enum class Normalization { unit_mean, free_kappa, no_frailty };

inline std::string to_string(Normalization n) {
    switch (n) {
    case Normalization::unit_mean: return "unit_mean";
    case Normalization::free_kappa: return "free_kappa";
    case Normalization::no_frailty: return "no_frailty";
    }
    return "unit_mean";
}

inline Normalization parse_normalization(const std::string& s) {
    if (s == "unit_mean") return Normalization::unit_mean;
    if (s == "free_kappa") return Normalization::free_kappa;
    if (s == "no_frailty") return Normalization::no_frailty;
    throw validation_error("unknown normalization '" + s + "'");
}

struct FitConfig {
    std::size_t max_iters = 500;
    double grad_tol = 1e-6;
    double rel_f_tol = 1e-9;
    bool unit_mean_frailty = true; // kappa = alpha
    bool frailty = true;           // false fits the frailty-free baseline model
    std::size_t memory = 10;
    unsigned threads = 1;

    void validate() const {
        if (!(grad_tol > 0.0) || !(rel_f_tol > 0.0)) throw validation_error("fit tolerances must be positive");
        if (max_iters == 0) throw validation_error("max_iters must be at least 1");
        if (memory == 0) throw validation_error("L-BFGS memory must be at least 1");
    }

    Normalization normalization() const noexcept {
        if (!frailty) return Normalization::no_frailty;
        return unit_mean_frailty ? Normalization::unit_mean : Normalization::free_kappa;
    }
};

struct FittedModel {
    std::vector<double> beta;
    DiscreteBaselineHazard baseline; // delta with its free_mask
    double alpha = 1.0;
    double kappa = 1.0;
    double loglik = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
    Normalization normalization = Normalization::unit_mean;
    std::size_t clamp_count = 0;
    double grad_inf_norm = 0.0;
    std::string stop_reason;

    double psi() const noexcept { return baseline.interval(); }
    bool frailty() const noexcept { return normalization != Normalization::no_frailty; }
    GammaParams prior() const { return GammaParams(alpha, kappa); }
    LinearTransform transform() const { return LinearTransform(beta); }

    std::size_t effectively_zero_deltas() const {
        std::size_t n = 0;
        for (std::size_t k = 0; k < baseline.size(); ++k)
            if (baseline.free_mask()[k] && baseline.increments()[k] < delta_effective_zero) ++n;
        return n;
    }

    friend bool operator==(const FittedModel& a, const FittedModel& b) {
        return a.beta == b.beta && a.baseline.interval() == b.baseline.interval() &&
               a.baseline.increments() == b.baseline.increments() &&
               a.baseline.free_mask() == b.baseline.free_mask() && a.alpha == b.alpha && a.kappa == b.kappa &&
               a.loglik == b.loglik && a.converged == b.converged && a.iterations == b.iterations &&
               a.normalization == b.normalization && a.clamp_count == b.clamp_count;
    }
};

// Starting point: beta = 0, alpha = kappa = 1, delta_k = empirical discrete
// hazard events_k / at_risk_k floored at 1e-6.
inline ParameterVector initialize(const PanelLikelihood& problem) {
    const auto& ds = problem.dataset();
    if (ds.event_count() == 0) throw validation_error("dataset has no events; the model is degenerate");
    const std::size_t cells = problem.mask().size();
    std::vector<double> events(cells, 0.0), entering(cells, 0.0);
    for (const auto& s : ds.subjects) {
        for (const auto& sp : s.spells) {
            const auto k = static_cast<std::size_t>(grid_cell(sp.y, ds.psi));
            if (sp.d == 1) events[k] += 1.0;
            entering[k] += 1.0;
        }
    }
    // at risk entering interval k: outcomes in cell k or later
    for (std::size_t k = cells; k-- > 1;) entering[k - 1] += entering[k];
    auto pv = problem.blank_parameters();
    std::size_t j = 0;
    for (std::size_t k = 0; k < cells; ++k) {
        if (!problem.mask().free_mask()[k]) continue;
        pv.log_delta[j++] = std::log(std::max(events[k] / entering[k], delta_init_floor));
    }
    return pv;
}

inline ParameterVector initialize(const PanelDataset& ds, bool frailty = true, bool free_kappa = false) {
    return initialize(PanelLikelihood(ds, frailty, free_kappa));
}

// Subjects in a canonical order (stable sort by id) so that the fit does not
// depend on input order.
inline PanelDataset canonical_order(PanelDataset ds) {
    std::stable_sort(ds.subjects.begin(), ds.subjects.end(),
                     [](const Subject& a, const Subject& b) { return a.id < b.id; });
    return ds;
}

struct FitDetail {
    FittedModel model;
    ParameterVector parameters;
    std::vector<double> trace; // log-likelihood after each accepted step
    std::size_t evaluations = 0;
};

inline FitDetail fit_detailed(const PanelDataset& ds, const FitConfig& cfg = {}) {
    cfg.validate();
    const PanelLikelihood problem(canonical_order(ds), cfg.frailty, !cfg.unit_mean_frailty, cfg.threads);
    ParameterVector pv = initialize(problem);

    ParameterVector work = pv;
    const Objective objective = [&](const std::vector<double>& theta, std::vector<double>& grad) {
        work.assign(theta);
        const double ll = problem.loglik_grad(work, grad);
        for (double& g : grad) g = -g;
        return -ll;
    };
    LbfgsOptions opt;
    opt.max_iters = cfg.max_iters;
    opt.grad_tol = cfg.grad_tol;
    opt.rel_f_tol = cfg.rel_f_tol;
    opt.memory = cfg.memory;
    const LbfgsResult res = lbfgs_minimize(objective, pv.flatten(), opt);

    pv.assign(res.x);
    EvalStats stats;
    FitDetail out;
    FittedModel& m = out.model;
    m.beta = pv.beta;
    m.baseline = problem.hazard(pv);
    m.alpha = cfg.frailty ? pv.alpha() : 1.0;
    m.kappa = cfg.frailty ? pv.kappa() : 1.0;
    m.loglik = problem.loglik(pv, &stats);
    m.clamp_count = stats.clamp_count;
    m.iterations = res.iterations;
    m.converged = res.converged && std::isfinite(m.loglik);
    m.normalization = cfg.normalization();
    m.grad_inf_norm = detail::inf_norm(res.grad);
    m.stop_reason = res.reason;
    out.parameters = pv;
    out.evaluations = res.evaluations;
    out.trace.reserve(res.trace.size());
    for (double f : res.trace) out.trace.push_back(-f);
    return out;
}

inline FittedModel fit(const PanelDataset& ds, const FitConfig& cfg = {}) { return fit_detailed(ds, cfg).model; }

struct OverparamReport {
    std::size_t free_deltas = 0;  // r
    std::size_t spells = 0;
    std::size_t features = 0;     // p
    std::size_t parameters = 0;   // r + p + 1
    std::optional<double> delta_ratio;     // r / spells
    std::optional<double> parameter_ratio; // (r + p + 1) / spells
    bool warning = false;

    std::string summary() const {
        std::ostringstream os;
        os << "free baseline increments r=" << free_deltas << ", spells=" << spells << ", parameters r+p+1="
           << parameters;
        if (parameter_ratio)
            os << ", ratio " << parameters << "/" << spells << "=" << *parameter_ratio;
        else
            os << ", ratio undefined (no spells)";
        if (warning) os << "; WARNING: free parameters are not dominated by observations";
        return os.str();
    }
};

inline OverparamReport overparam_check(std::size_t free_deltas, std::size_t spells, std::size_t features) {
    OverparamReport r;
    r.free_deltas = free_deltas;
    r.spells = spells;
    r.features = features;
    r.parameters = free_deltas + features + 1;
    if (spells > 0) {
        r.delta_ratio = static_cast<double>(free_deltas) / static_cast<double>(spells);
        r.parameter_ratio = static_cast<double>(r.parameters) / static_cast<double>(spells);
    }
    r.warning = r.parameters >= spells;
    return r;
}

inline OverparamReport overparam_check(const PanelDataset& ds) {
    const auto ys = ds.outcomes();
    const std::size_t r = ys.empty() ? 0 : build_baseline(ds.psi, ys).free_count();
    return overparam_check(r, ys.size(), ds.p);
}

} // namespace ffpsurv
