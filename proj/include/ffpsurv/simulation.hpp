#pragma once

// Synthetic grouped recurrent-event panels: proportional hazards with a
// subject frailty, durations drawn by inverting the cumulative baseline
// hazard, grouped to a psi-grid and administratively censored at y_max.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/lambert_w.hpp>

#include "ffpsurv/error.hpp"
#include "ffpsurv/model_core.hpp"
#include "ffpsurv/parallel.hpp"
#include "ffpsurv/random.hpp"

namespace ffpsurv {

inline constexpr double hazard_quadrature_tol = 1e-10;

// Baseline hazard lambda0 with its integral Lambda0.
//   log_hazard: lambda0(t) = log(1 + c t), Lambda0 in closed form
//   sqrt_sin:   lambda0(t) = c1 sqrt(t) sin^2(c2 t), Lambda0 by quadrature
// sqrt_sin keeps a table of Lambda0 at integer t so that each evaluation only
// integrates over a unit stretch.
class HazardSpec {
public:
    enum class Kind { log_hazard, sqrt_sin };

    static HazardSpec log_hazard(double c = 1.0) {
        if (!(c > 0.0) || !std::isfinite(c)) throw validation_error("log_hazard needs c > 0");
        HazardSpec h;
        h.kind_ = Kind::log_hazard;
        h.c_ = c;
        return h;
    }

    static HazardSpec sqrt_sin(double c1 = 1.0, double c2 = 0.5, double table_end = 1000.0) {
        if (!(c1 > 0.0) || !std::isfinite(c1) || !(c2 > 0.0) || !std::isfinite(c2)) {
            throw validation_error("sqrt_sin needs c1 > 0 and c2 > 0");
        }
        HazardSpec h;
        h.kind_ = Kind::sqrt_sin;
        h.c1_ = c1;
        h.c2_ = c2;
        auto table = std::make_shared<std::vector<double>>();
        const auto cells = static_cast<std::size_t>(std::ceil(table_end));
        table->reserve(cells + 1);
        table->push_back(0.0);
        for (std::size_t k = 0; k < cells; ++k) {
            table->push_back(table->back() + h.integrate(static_cast<double>(k), static_cast<double>(k + 1)));
        }
        h.table_ = std::move(table);
        return h;
    }

    Kind kind() const noexcept { return kind_; }
    double c() const noexcept { return c_; }
    double c1() const noexcept { return c1_; }
    double c2() const noexcept { return c2_; }

    double hazard(double t) const {
        if (t <= 0.0) return 0.0;
        if (kind_ == Kind::log_hazard) return std::log1p(c_ * t);
        const double s = std::sin(c2_ * t);
        return c1_ * std::sqrt(t) * s * s;
    }

    double cumulative(double t) const {
        if (!(t >= 0.0)) throw validation_error("cumulative hazard needs t >= 0");
        if (t == 0.0) return 0.0;
        if (kind_ == Kind::log_hazard) {
            // ((1+x) log(1+x) - x) / c with x = c t; the series avoids the
            // cancellation for small x.
            const double x = c_ * t;
            if (x < 1e-2) {
                double sum = 0.0;
                double xn = x;
                for (int n = 2; n <= 12; ++n) {
                    xn *= x;
                    sum += ((n % 2 == 0) ? 1.0 : -1.0) * xn / (n * (n - 1.0));
                }
                return sum / c_;
            }
            return ((1.0 + x) * std::log1p(x) - x) / c_;
        }
        const auto& tab = *table_;
        const double last = static_cast<double>(tab.size() - 1);
        if (t >= last) return tab.back() + integrate(last, t);
        const double k = std::floor(t);
        const double base = tab[static_cast<std::size_t>(k)];
        return t == k ? base : base + integrate(k, t);
    }

    // [lo, hi] with Lambda0(lo) <= target <= Lambda0(hi), hi <= t_max.
    std::pair<double, double> bracket(double target, double t_max) const {
        if (kind_ == Kind::sqrt_sin) {
            const auto& tab = *table_;
            const auto it = std::upper_bound(tab.begin(), tab.end(), target);
            if (it != tab.end()) {
                const auto k = static_cast<double>(std::distance(tab.begin(), it));
                return {std::min(k - 1.0, t_max), std::min(k, t_max)};
            }
        }
        return {0.0, t_max};
    }

    // Starting point for the root search.
    std::optional<double> inverse_guess(double target) const {
        if (kind_ != Kind::log_hazard) return std::nullopt;
        // z (log z - 1) = c T - 1 with z = 1 + c t
        const double arg = (c_ * target - 1.0) / std::numbers::e;
        if (arg <= -1.0 / std::numbers::e) return 0.0;
        const double z = std::exp(1.0 + boost::math::lambert_w0(arg));
        return std::max(0.0, (z - 1.0) / c_);
    }

private:
    double integrate(double a, double b) const {
        auto f = [this](double t) { return hazard(t); };
        double err = 0.0;
        double val;
        if (a < 1.0) {
            // sqrt behaviour at the origin
            boost::math::quadrature::tanh_sinh<double> rule(12);
            val = rule.integrate(f, a, b, 1e-14, &err);
        } else {
            val = boost::math::quadrature::gauss_kronrod<double, 21>::integrate(f, a, b, 12, 1e-14, &err);
        }
        if (!(err <= hazard_quadrature_tol) || !std::isfinite(val)) {
            throw numerical_error("baseline hazard quadrature did not converge on [" + std::to_string(a) + ", " +
                                  std::to_string(b) + "]");
        }
        return val;
    }

    Kind kind_ = Kind::log_hazard;
    double c_ = 1.0;
    double c1_ = 1.0;
    double c2_ = 0.5;
    std::shared_ptr<const std::vector<double>> table_;
};

inline double cumulative_hazard(const HazardSpec& hs, double t) { return hs.cumulative(t); }

struct DurationDraw {
    double t = 0.0;
    bool capped = false; // target lay beyond Lambda0(t_max)
};

// Solves Lambda0(t) = -log(u) / (nu phi) by safeguarded Newton inside a
// shrinking bracket.
inline DurationDraw sample_duration(const HazardSpec& hs, double nu, double phi, double u, double t_max) {
    if (!(u > 0.0 && u < 1.0)) throw validation_error("sample_duration needs u in (0, 1)");
    if (!(nu > 0.0) || !(phi > 0.0) || !std::isfinite(nu * phi)) {
        throw validation_error("sample_duration needs positive finite nu and phi");
    }
    const double target = -std::log(u) / (nu * phi);
    if (target <= 0.0) return {0.0, false};
    if (!(target < hs.cumulative(t_max))) return {t_max, true};

    auto [lo, hi] = hs.bracket(target, t_max);
    double t = 0.5 * (lo + hi);
    if (auto g = hs.inverse_guess(target); g && *g > lo && *g < hi) t = *g;

    for (int it = 0; it < 200; ++it) {
        const double f = hs.cumulative(t) - target;
        if (f == 0.0) return {t, false};
        if (f < 0.0)
            lo = t;
        else
            hi = t;
        const double slope = hs.hazard(t);
        double next = slope > 0.0 ? t - f / slope : lo - 1.0;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        const double step = std::abs(next - t);
        t = next;
        if (step <= 1e-13 * std::max(1.0, t) || hi - lo <= 1e-12 * std::max(1.0, t)) break;
    }
    return {t, false};
}

// Subject frailty law.
struct FrailtySpec {
    enum class Kind { gamma, two_point };
    Kind kind = Kind::gamma;
    double shape = 1.0;
    double rate = 1.0;
    double p = 0.5; // mass at v1
    double v1 = 0.5;
    double v2 = 5.0;

    static FrailtySpec gamma(double shape, double rate) {
        GammaParams checked(shape, rate);
        FrailtySpec f;
        f.shape = checked.shape;
        f.rate = checked.rate;
        return f;
    }
    static FrailtySpec two_point(double p = 0.5, double v1 = 0.5, double v2 = 5.0) {
        if (!(p >= 0.0 && p <= 1.0) || !(v1 > 0.0) || !(v2 > 0.0)) {
            throw validation_error("two_point frailty needs p in [0, 1] and positive support");
        }
        FrailtySpec f;
        f.kind = Kind::two_point;
        f.p = p;
        f.v1 = v1;
        f.v2 = v2;
        return f;
    }

    double draw(Rng& rng) const {
        if (kind == Kind::gamma) return rng.gamma(shape, rate);
        return rng.uniform() < p ? v1 : v2;
    }
};

// Phi(x) = exp(b1 x1 + b2 (x2 + c2)^2 + log(b3 x3 + c3) + b4 x4). The log
// argument is floored at `log_floor` when b3 x3 + c3 is not positive.
struct NonlinearSpec {
    double c2 = 0.5;
    double c3 = 2.0;
    double beta4 = 0.5;
    double log_floor = 1e-3;
};

struct SimConfig {
    std::size_t n = 250;
    std::size_t J = 4;
    HazardSpec hazard = HazardSpec::log_hazard(1.0);
    FrailtySpec frailty = FrailtySpec::gamma(1.0, 1.0);
    std::vector<double> beta{0.4, -1.0, 1.0};
    std::optional<NonlinearSpec> nonlinear;
    double psi = 1.0;
    double y_max = 80.0;
    std::uint64_t seed = 0;

    std::size_t feature_count() const noexcept { return beta.size() + (nonlinear ? 1 : 0); }
    double t_max() const noexcept { return 10.0 * y_max; }

    void validate() const {
        if (n < 1 || J < 1) throw validation_error("simulation needs n >= 1 and J >= 1");
        if (!(psi > 0.0) || !std::isfinite(psi)) throw validation_error("psi must be positive and finite");
        if (!(y_max > 0.0) || grid_cell(y_max, psi) < 0) throw validation_error("y_max must be a positive multiple of psi");
        if (beta.empty()) throw validation_error("simulation needs at least one coefficient");
        if (nonlinear && beta.size() != 3) throw validation_error("the nonlinear transform uses exactly three coefficients");
    }
};

inline double feature_effect(const SimConfig& cfg, std::span<const double> x) {
    if (x.size() != cfg.feature_count()) throw dimension_error("simulation features", cfg.feature_count(), x.size());
    if (!cfg.nonlinear) return LinearTransform(cfg.beta)(x);
    const auto& nl = *cfg.nonlinear;
    const double shifted = x[1] + nl.c2;
    const double arg = std::max(cfg.beta[2] * x[2] + nl.c3, nl.log_floor);
    return std::exp(cfg.beta[0] * x[0] + cfg.beta[1] * shifted * shifted + std::log(arg) + nl.beta4 * x[3]);
}

inline std::string subject_label(std::size_t i, std::size_t n) {
    const std::size_t width = std::max<std::size_t>(4, std::to_string(n).size());
    std::string digits = std::to_string(i + 1);
    return "s" + std::string(width - digits.size(), '0') + digits;
}

// Subject i draws from substream i of cfg.seed, so the result does not
// depend on the worker count.
inline PanelDataset generate(const SimConfig& cfg, unsigned threads = 1) {
    cfg.validate();
    const std::size_t p = cfg.feature_count();
    const long top = grid_cell(cfg.y_max, cfg.psi);
    const double y_cap = static_cast<double>(top) * cfg.psi;
    PanelDataset ds;
    ds.p = p;
    ds.psi = cfg.psi;
    ds.subjects.resize(cfg.n);
    parallel_for(cfg.n, threads, [&](std::size_t i) {
        Rng rng = Rng::substream(cfg.seed, i);
        Subject& s = ds.subjects[i];
        s.id = subject_label(i, cfg.n);
        const double nu = cfg.frailty.draw(rng);
        s.spells.resize(cfg.J);
        for (auto& sp : s.spells) {
            sp.x.resize(p);
            for (double& v : sp.x) v = rng.normal();
            const double phi = feature_effect(cfg, sp.x);
            const DurationDraw t = sample_duration(cfg.hazard, nu, phi, rng.uniform(), cfg.t_max());
            const long k = static_cast<long>(std::floor(t.t / cfg.psi));
            if (t.capped || k >= top) {
                sp.y = y_cap;
                sp.d = 0;
            } else {
                sp.y = static_cast<double>(k) * cfg.psi;
                sp.d = 1;
            }
        }
    });
    return ds;
}

// Named setups: "1" (n=250, J=4, Gamma(1,1) frailty, log hazard), "2"
// (sqrt-sin hazard), "3" (two-point frailty), "4" (n=50, J=20) and
// "nonlinear" (n=300, J=4, four features through the nonlinear transform).
inline SimConfig setup_config(std::string_view name) {
    SimConfig cfg;
    if (name == "1") return cfg;
    if (name == "2") {
        cfg.hazard = HazardSpec::sqrt_sin(1.0, 0.5);
        return cfg;
    }
    if (name == "3") {
        cfg.frailty = FrailtySpec::two_point(0.5, 0.5, 5.0);
        return cfg;
    }
    if (name == "4") {
        cfg.n = 50;
        cfg.J = 20;
        return cfg;
    }
    if (name == "nonlinear") {
        cfg.n = 300;
        cfg.nonlinear = NonlinearSpec{};
        return cfg;
    }
    throw validation_error("unknown setup '" + std::string(name) + "' (expected 1, 2, 3, 4 or nonlinear)");
}

} // namespace ffpsurv
