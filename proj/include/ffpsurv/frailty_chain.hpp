#pragma once

// Sequential Gamma updates of the subject frailty after each observed spell.
//
// After a spell with grouped outcome y the exact frailty posterior has
// density proportional to  v^(a-1) (exp(-v xi) - d exp(-v xi')).
// Censored spells keep it Gamma(a, xi). Event spells are replaced by the
// Gamma law matching its first two raw moments, with closed-form limits at
// the two ends of eps = (xi' - xi) / xi' where the raw expression cancels.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "ffpsurv/dual.hpp"
#include "ffpsurv/error.hpp"
#include "ffpsurv/model_core.hpp"

namespace ffpsurv {

inline constexpr double small_eps_threshold = 1e-4;
inline constexpr double large_eps_threshold = 1.0 - 1e-8;

struct XiPair {
    double xi = 0.0;
    double xi_prime = 0.0;
    double epsilon = 0.0;
    bool tail = false; // event term reaches the infinite tail increment
};

// xi = rate + phi * S_{y/psi}, xi' = rate + phi * S_{y/psi + 1}.
inline XiPair compute_xi(const GammaParams& prior, double phi, double y, const DiscreteBaselineHazard& hz) {
    const long cell = grid_cell(y, hz.interval());
    if (cell < 0) throw validation_error("outcome " + std::to_string(y) + " is off the grid");
    const auto k = static_cast<std::size_t>(cell);
    if (k > hz.size()) {
        throw validation_error("outcome " + std::to_string(y) + " lies beyond the baseline grid (" +
                               std::to_string(hz.size()) + " intervals)");
    }
    XiPair xp;
    xp.xi = prior.rate + phi * hz.cumulative(k);
    if (k == hz.size()) {
        xp.xi_prime = std::numeric_limits<double>::infinity();
        xp.epsilon = 1.0;
        xp.tail = true;
    } else {
        xp.xi_prime = prior.rate + phi * hz.cumulative(k + 1);
        xp.epsilon = (xp.xi_prime - xp.xi) / xp.xi_prime;
    }
    return xp;
}

template <class T>
struct ShapeRate {
    T shape;
    T rate;
};

// Moment-matched Gamma approximation of the event-spell posterior, valid
// for eps in (0, 1). No regime switching; see update_state for that.
template <class T>
ShapeRate<T> moment_matched_update(const T& alpha, const T& xi, const T& eps) {
    using std::expm1;
    using std::exp;
    using std::log1p;
    const T log_q = log1p(-eps);
    const T q_a = exp(alpha * log_q);
    const T one_minus_q_a = -expm1(alpha * log_q);
    const T one_minus_q_a1 = -expm1((alpha + 1.0) * log_q);
    const T one_minus_q_a2 = -expm1((alpha + 2.0) * log_q);
    const T den = one_minus_q_a * one_minus_q_a2 - alpha * q_a * eps * eps;
    return {alpha * one_minus_q_a1 * one_minus_q_a1 / den, xi * one_minus_q_a * one_minus_q_a1 / den};
}

// One step of the chain on scalar type T (double or Dual<N>).
template <class T>
ShapeRate<T> update_state(const T& alpha, const T& xi, const T& xi_prime, const T& eps, int d, bool tail) {
    if (d == 0) return {alpha, xi};
    if (tail || value_of(eps) >= large_eps_threshold) return {alpha, xi};
    if (value_of(eps) <= small_eps_threshold) return {alpha + 1.0, (xi + xi_prime) * 0.5};
    return moment_matched_update(alpha, xi, eps);
}

inline GammaParams posterior_update(const GammaParams& prior, const XiPair& xp, int d) {
    if (d != 0 && d != 1) throw validation_error("censoring indicator must be 0 or 1");
    if (!(xp.xi >= prior.rate) || !(xp.xi_prime >= xp.xi) || !(xp.epsilon >= 0.0 && xp.epsilon <= 1.0)) {
        throw validation_error("inconsistent XiPair");
    }
    const auto s = update_state<double>(prior.shape, xp.xi, xp.xi_prime, xp.epsilon, d, xp.tail);
    return GammaParams(s.shape, s.rate);
}

// Prior followed by the posterior state after each spell; size J + 1.
inline std::vector<GammaParams> fold_chain(const GammaParams& prior, std::span<const Spell> spells,
                                           const LinearTransform& lt, const DiscreteBaselineHazard& hz) {
    std::vector<GammaParams> states;
    states.reserve(spells.size() + 1);
    states.push_back(prior);
    for (const auto& sp : spells) {
        const GammaParams& cur = states.back();
        const XiPair xp = compute_xi(cur, lt(sp.x), sp.y, hz);
        states.push_back(posterior_update(cur, xp, sp.d));
    }
    return states;
}

struct PosteriorMoments {
    double mu1 = 0.0;
    double mu2 = 0.0;
};

// First two raw moments of the exact event-spell posterior by adaptive
// tanh-sinh quadrature on [0, U]. Works in s = v * xi so that the integrand is
//   s^(a-1+k) exp(-s) (1 - exp(-s eps / (1 - eps)))
// and rescales afterwards. The upper limit leaves a Gamma(a+2) tail mass
// below 1e-16; the normaliser is the closed form Gamma(a)(xi^-a - xi'^-a).
inline PosteriorMoments posterior_moments_oracle(const GammaParams& prior, const XiPair& xp,
                                                 double abs_tol = 1e-12) {
    const double a = prior.shape;
    const double eps = xp.epsilon;
    if (!(eps > 0.0 && eps < 1.0)) {
        throw validation_error("posterior_moments_oracle needs eps in (0, 1)");
    }
    const double ratio = eps / (1.0 - eps); // xi'/xi - 1
    const double upper = boost::math::gamma_q_inv(a + 2.0, 1e-16);

    auto integral = [&](int k) {
        auto f = [&](double s) {
            if (s <= 0.0) return 0.0;
            return std::pow(s, a - 1.0 + k) * std::exp(-s) * (-std::expm1(-s * ratio));
        };
        static thread_local boost::math::quadrature::tanh_sinh<double> rule(15);
        double err = 0.0;
        double l1 = 0.0;
        const double val = rule.integrate(f, 0.0, upper, 1e-14, &err, &l1);
        if (!(err <= abs_tol) || !std::isfinite(val)) {
            throw numerical_error("posterior moment quadrature did not converge: achieved " + std::to_string(err) +
                                  ", requested " + std::to_string(abs_tol));
        }
        return val;
    };

    // Gamma(a) (1 - (1-eps)^a) in scaled units.
    const double norm = std::tgamma(a) * (-std::expm1(a * std::log1p(-eps)));
    const double m1 = integral(1) / norm;
    const double m2 = integral(2) / norm;
    return {m1 / xp.xi, m2 / (xp.xi * xp.xi)};
}

} // namespace ffpsurv
