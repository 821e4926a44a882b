#pragma once

// Discrete-time spell likelihood, chain-conditional panel likelihood and the
// dataset log-likelihood with its gradient.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ffpsurv/dual.hpp"
#include "ffpsurv/error.hpp"
#include "ffpsurv/frailty_chain.hpp"
#include "ffpsurv/model_core.hpp"
#include "ffpsurv/parallel.hpp"

namespace ffpsurv {

inline constexpr double likelihood_floor = 1e-300;

// Unconstrained parameters. Layout when flattened:
// [beta (p) | log delta over free intervals (r) | log alpha | log kappa].
// log alpha is absent without frailty; log kappa only with a free rate.
struct ParameterVector {
    std::vector<double> beta;
    std::vector<double> log_delta;
    double log_alpha = 0.0;
    std::optional<double> log_kappa;
    bool frailty = true;

    std::size_t size() const noexcept {
        return beta.size() + log_delta.size() + (frailty ? 1 + (log_kappa ? 1 : 0) : 0);
    }
    std::size_t alpha_index() const noexcept { return beta.size() + log_delta.size(); }
    std::size_t kappa_index() const noexcept { return alpha_index() + 1; }

    double alpha() const noexcept { return std::exp(log_alpha); }
    double kappa() const noexcept { return log_kappa ? std::exp(*log_kappa) : alpha(); }
    GammaParams prior() const { return GammaParams(alpha(), kappa()); }

    std::vector<double> flatten() const {
        std::vector<double> out(beta);
        out.insert(out.end(), log_delta.begin(), log_delta.end());
        if (frailty) {
            out.push_back(log_alpha);
            if (log_kappa) out.push_back(*log_kappa);
        }
        return out;
    }

    void assign(std::span<const double> theta) {
        if (theta.size() != size()) throw dimension_error("parameter vector", size(), theta.size());
        std::size_t i = 0;
        for (auto& b : beta) b = theta[i++];
        for (auto& d : log_delta) d = theta[i++];
        if (frailty) {
            log_alpha = theta[i++];
            if (log_kappa) log_kappa = theta[i++];
        }
    }

    std::string name(std::size_t i) const {
        if (i < beta.size()) return "beta[" + std::to_string(i) + "]";
        i -= beta.size();
        if (i < log_delta.size()) return "log_delta[" + std::to_string(i) + "]";
        i -= log_delta.size();
        return i == 0 ? "log_alpha" : "log_kappa";
    }
};

namespace detail {

// log of  exp(-H(S_y)) - d exp(-H(S_y1))  where H is the integrated-out
// cumulative hazard: shape * log1p(phi S / rate) with frailty, phi S
// without. has_upper == false marks the infinite tail, which drops the
// second term. Returns the floor when the difference underflows.
template <class T>
T spell_log_term(const T& shape, const T& rate, const T& phi, const T& s_y, const T& s_y1, bool has_upper, int d,
                 bool frailty, bool& clamped) {
    using std::expm1;
    using std::log;
    using std::log1p;
    const T upper_log = frailty ? T(-shape * log1p(phi * s_y / rate)) : T(-(phi * s_y));
    T out = upper_log;
    if (d == 1 && has_upper) {
        const T lower_log = frailty ? T(-shape * log1p(phi * s_y1 / rate)) : T(-(phi * s_y1));
        const T diff = lower_log - upper_log;
        if (!(value_of(diff) < 0.0)) {
            clamped = true;
            return T(std::log(likelihood_floor));
        }
        out = upper_log + log(-expm1(diff));
    }
    if (!(value_of(out) >= std::log(likelihood_floor))) {
        clamped = true;
        return T(std::log(likelihood_floor));
    }
    return out;
}

inline std::size_t checked_cell(double y, const DiscreteBaselineHazard& hz) {
    const long cell = grid_cell(y, hz.interval());
    if (cell < 0) throw validation_error("outcome " + std::to_string(y) + " is off the grid");
    const auto k = static_cast<std::size_t>(cell);
    if (k > hz.size()) {
        throw validation_error("outcome " + std::to_string(y) + " lies beyond the baseline grid");
    }
    return k;
}

inline double spell_likelihood_unclamped(const GammaParams& g, double phi, double y, int d,
                                         const DiscreteBaselineHazard& hz) {
    if (d != 0 && d != 1) throw validation_error("censoring indicator must be 0 or 1");
    const std::size_t k = checked_cell(y, hz);
    const double upper = std::exp(-g.shape * std::log1p(phi * hz.cumulative(k) / g.rate));
    if (d == 0 || k == hz.size()) return upper;
    const double a = -g.shape * std::log1p(phi * hz.cumulative(k) / g.rate);
    const double b = -g.shape * std::log1p(phi * hz.cumulative(k + 1) / g.rate);
    const double value = std::exp(a) * (-std::expm1(b - a));
    if (value < -1e-15) throw numerical_error("negative spell likelihood; cumulative hazard is not monotone");
    return value;
}

} // namespace detail

// (1 + phi S_y / kappa)^-alpha - d (1 + phi S_{y+psi} / kappa)^-alpha.
inline double spell_likelihood(const GammaParams& prior, double phi, double y, int d,
                               const DiscreteBaselineHazard& hz) {
    return detail::spell_likelihood_unclamped(prior, phi, y, d, hz);
}

// Same expression under the folded posterior state of the previous spells.
inline double conditional_spell_likelihood(const GammaParams& state, double phi, double y, int d,
                                           const DiscreteBaselineHazard& hz) {
    return detail::spell_likelihood_unclamped(state, phi, y, d, hz);
}

// Sum over spells of log conditional likelihoods: spell j is evaluated
// against the state after spells 1..j-1, then folded into it.
inline double panel_loglik(std::span<const Spell> spells, const LinearTransform& lt,
                           const DiscreteBaselineHazard& hz, const GammaParams& prior,
                           const std::string& subject_id = {}) {
    GammaParams state = prior;
    double total = 0.0;
    for (std::size_t j = 0; j < spells.size(); ++j) {
        const Spell& sp = spells[j];
        const double phi = lt(sp.x);
        const double lik = conditional_spell_likelihood(state, phi, sp.y, sp.d, hz);
        if (!(lik > 0.0)) {
            throw numerical_error("zero likelihood for subject '" + subject_id + "' spell " + std::to_string(j + 1));
        }
        total += std::log(lik);
        state = posterior_update(state, compute_xi(state, phi, sp.y, hz), sp.d);
    }
    return total;
}

struct EvalStats {
    std::size_t clamp_count = 0;
};

// Dataset objective bound to a fixed dataset and baseline mask. Spell
// likelihoods are floored at 1e-300 before the log; floored spells
// contribute no gradient. Subject terms are computed independently and
// reduced in subject order with compensated summation.
class PanelLikelihood {
public:
    PanelLikelihood(PanelDataset ds, bool frailty, bool free_kappa, unsigned threads = 1)
        : ds_(std::move(ds)), frailty_(frailty), free_kappa_(frailty && free_kappa), threads_(threads) {
        ds_.validate();
        const auto ys = ds_.outcomes();
        mask_ = build_baseline(ds_.psi, ys);
        free_pos_.assign(mask_.size(), -1);
        long j = 0;
        for (std::size_t k = 0; k < mask_.size(); ++k)
            if (mask_.free_mask()[k]) free_pos_[k] = j++;
        cells_.reserve(ds_.subjects.size());
        for (const auto& s : ds_.subjects) {
            std::vector<std::size_t> c;
            c.reserve(s.spells.size());
            for (const auto& sp : s.spells) c.push_back(static_cast<std::size_t>(grid_cell(sp.y, ds_.psi)));
            cells_.push_back(std::move(c));
        }
    }

    const PanelDataset& dataset() const noexcept { return ds_; }
    const DiscreteBaselineHazard& mask() const noexcept { return mask_; }
    bool frailty() const noexcept { return frailty_; }
    bool free_kappa() const noexcept { return free_kappa_; }
    std::size_t free_count() const noexcept { return mask_.free_count(); }
    void set_threads(unsigned t) noexcept { threads_ = t; }

    // Zero-initialised parameter vector with this problem's layout.
    ParameterVector blank_parameters() const {
        ParameterVector pv;
        pv.beta.assign(ds_.p, 0.0);
        pv.log_delta.assign(free_count(), 0.0);
        pv.frailty = frailty_;
        if (free_kappa_) pv.log_kappa = 0.0;
        return pv;
    }

    DiscreteBaselineHazard hazard(const ParameterVector& pv) const {
        check_layout(pv);
        std::vector<double> v(pv.log_delta.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(pv.log_delta[i]);
        return mask_.with_free_values(v);
    }

    double loglik(const ParameterVector& pv, EvalStats* stats = nullptr) const {
        const auto hz = hazard(pv);
        const LinearTransform lt(pv.beta);
        const double shape = frailty_ ? pv.alpha() : 1.0;
        const double rate = frailty_ ? pv.kappa() : 1.0;
        const std::size_t n = ds_.subjects.size();
        std::vector<double> terms(n, 0.0);
        std::vector<std::size_t> clamps(n, 0);
        parallel_for(n, threads_, [&](std::size_t i) {
            terms[i] = subject_value(i, lt, hz, shape, rate, clamps[i]);
        });
        CompensatedSum sum;
        std::size_t clamp_total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            sum.add(terms[i]);
            clamp_total += clamps[i];
        }
        if (stats) stats->clamp_count = clamp_total;
        return sum.value();
    }

    // Log-likelihood and its gradient with respect to pv.flatten().
    double loglik_grad(const ParameterVector& pv, std::vector<double>& grad, EvalStats* stats = nullptr) const {
        const auto hz = hazard(pv);
        const LinearTransform lt(pv.beta);
        const std::size_t n = ds_.subjects.size();
        const std::size_t dim = pv.size();
        std::vector<double> terms(n, 0.0);
        std::vector<std::size_t> clamps(n, 0);
        std::vector<std::vector<double>> grads(n);
        parallel_for(n, threads_, [&](std::size_t i) {
            grads[i].assign(dim, 0.0);
            terms[i] = subject_value_grad(i, pv, lt, hz, grads[i], clamps[i]);
        });
        CompensatedSum sum;
        std::vector<CompensatedSum> gsum(dim);
        std::size_t clamp_total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            sum.add(terms[i]);
            clamp_total += clamps[i];
            for (std::size_t m = 0; m < dim; ++m) gsum[m].add(grads[i][m]);
        }
        grad.assign(dim, 0.0);
        for (std::size_t m = 0; m < dim; ++m) {
            grad[m] = gsum[m].value();
            if (!std::isfinite(grad[m])) throw numerical_error("non-finite gradient component " + pv.name(m));
        }
        if (stats) stats->clamp_count = clamp_total;
        return sum.value();
    }

private:
    void check_layout(const ParameterVector& pv) const {
        if (pv.beta.size() != ds_.p) throw dimension_error("beta", ds_.p, pv.beta.size());
        if (pv.log_delta.size() != free_count()) throw dimension_error("log_delta", free_count(), pv.log_delta.size());
        if (pv.frailty != frailty_ || (pv.frailty && pv.log_kappa.has_value() != free_kappa_)) {
            throw validation_error("parameter vector normalization does not match the likelihood");
        }
    }

    double subject_value(std::size_t i, const LinearTransform& lt, const DiscreteBaselineHazard& hz, double shape,
                         double rate, std::size_t& clamps) const {
        const auto& spells = ds_.subjects[i].spells;
        const auto& cells = cells_[i];
        double a = shape;
        double k = rate;
        double total = 0.0;
        for (std::size_t j = 0; j < spells.size(); ++j) {
            const Spell& sp = spells[j];
            const std::size_t c = cells[j];
            const double phi = lt(sp.x);
            const bool has_upper = c < hz.size();
            const double s0 = hz.cumulative(c);
            const double s1 = has_upper ? hz.cumulative(c + 1) : 0.0;
            bool clamped = false;
            total += detail::spell_log_term<double>(a, k, phi, s0, s1, has_upper, sp.d, frailty_, clamped);
            clamps += clamped;
            if (frailty_ && j + 1 < spells.size()) {
                const double xi = k + phi * s0;
                const double xi_p = has_upper ? k + phi * s1 : std::numeric_limits<double>::infinity();
                const double eps = has_upper ? (xi_p - xi) / xi_p : 1.0;
                const auto next = update_state<double>(a, xi, xi_p, eps, sp.d, !has_upper);
                a = next.shape;
                k = next.rate;
            }
        }
        return total;
    }

    // Forward propagation of d(shape, rate)/d(theta) along the chain, with
    // the per-spell local Jacobian in (shape, rate, phi, S_y, S_y1) taken
    // from Dual<5>.
    double subject_value_grad(std::size_t i, const ParameterVector& pv, const LinearTransform& lt,
                              const DiscreteBaselineHazard& hz, std::vector<double>& g, std::size_t& clamps) const {
        using D = Dual<5>;
        const auto& spells = ds_.subjects[i].spells;
        const auto& cells = cells_[i];
        const std::size_t dim = g.size();
        const std::size_t p = ds_.p;
        const auto& inc = hz.increments();

        std::vector<double> da(dim, 0.0);
        std::vector<double> dk(dim, 0.0);
        double a = 1.0;
        double k = 1.0;
        if (frailty_) {
            a = pv.alpha();
            k = pv.kappa();
            da[pv.alpha_index()] = a;
            if (free_kappa_)
                dk[pv.kappa_index()] = k;
            else
                dk[pv.alpha_index()] = k;
        }

        std::vector<double> na(dim), nk(dim);
        double total = 0.0;
        for (std::size_t j = 0; j < spells.size(); ++j) {
            const Spell& sp = spells[j];
            const std::size_t c = cells[j];
            const double phi = lt(sp.x);
            const bool has_upper = c < hz.size();
            const double s0 = hz.cumulative(c);
            const double s1 = has_upper ? hz.cumulative(c + 1) : 0.0;

            const D A = frailty_ ? D::variable(a, 0) : D(1.0);
            const D K = frailty_ ? D::variable(k, 1) : D(1.0);
            const D P = D::variable(phi, 2);
            const D S0 = D::variable(s0, 3);
            const D S1 = D::variable(s1, 4);
            bool clamped = false;
            const D term = detail::spell_log_term<D>(A, K, P, S0, S1, has_upper, sp.d, frailty_, clamped);
            clamps += clamped;
            total += term.v;

            // Accumulate  sum_c coef[c] * d(input_c)/d(theta)  into out.
            auto accumulate = [&](const std::array<double, 5>& coef, std::vector<double>& out) {
                if (frailty_) {
                    for (std::size_t m = 0; m < dim; ++m) out[m] += coef[0] * da[m] + coef[1] * dk[m];
                }
                const double cphi = coef[2] * phi;
                if (cphi != 0.0)
                    for (std::size_t m = 0; m < p; ++m) out[m] += cphi * sp.x[m];
                const std::size_t upto = has_upper ? c + 1 : c;
                for (std::size_t q = 0; q < upto; ++q) {
                    const long pos = free_pos_[q];
                    if (pos < 0) continue;
                    double w = coef[3] * (q < c ? 1.0 : 0.0) + coef[4];
                    if (!has_upper) w = coef[3];
                    out[p + static_cast<std::size_t>(pos)] += w * inc[q];
                }
            };
            accumulate(term.d, g);

            if (frailty_ && j + 1 < spells.size()) {
                const D xi = K + P * S0;
                D next_shape, next_rate;
                if (has_upper) {
                    const D xi_p = K + P * S1;
                    const D eps = (xi_p - xi) / xi_p;
                    const auto next = update_state<D>(A, xi, xi_p, eps, sp.d, false);
                    next_shape = next.shape;
                    next_rate = next.rate;
                } else {
                    // Infinite upper term: both regimes reduce to (shape, xi).
                    next_shape = A;
                    next_rate = xi;
                }
                std::fill(na.begin(), na.end(), 0.0);
                std::fill(nk.begin(), nk.end(), 0.0);
                accumulate(next_shape.d, na);
                accumulate(next_rate.d, nk);
                da.swap(na);
                dk.swap(nk);
                a = next_shape.v;
                k = next_rate.v;
            }
        }
        return total;
    }

    PanelDataset ds_;
    bool frailty_;
    bool free_kappa_;
    unsigned threads_;
    DiscreteBaselineHazard mask_;
    std::vector<long> free_pos_;
    std::vector<std::vector<std::size_t>> cells_;
};

namespace detail {
inline PanelLikelihood problem_for(const PanelDataset& ds, const ParameterVector& pv) {
    return PanelLikelihood(ds, pv.frailty, pv.log_kappa.has_value());
}
} // namespace detail

// Sum of subject panel log-likelihoods; baseline mask derived from ds.
inline double dataset_loglik(const PanelDataset& ds, const ParameterVector& pv, EvalStats* stats = nullptr) {
    return detail::problem_for(ds, pv).loglik(pv, stats);
}

inline std::vector<double> dataset_loglik_grad(const PanelDataset& ds, const ParameterVector& pv) {
    std::vector<double> g;
    detail::problem_for(ds, pv).loglik_grad(pv, g);
    return g;
}

} // namespace ffpsurv
