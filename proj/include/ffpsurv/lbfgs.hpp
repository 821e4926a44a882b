#pragma once

// Limited-memory BFGS minimiser with a backtracking Armijo line search.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "ffpsurv/error.hpp"

namespace ffpsurv {

struct LbfgsOptions {
    std::size_t max_iters = 500;
    double grad_tol = 1e-6;    // inf-norm
    double rel_f_tol = 1e-9;   // |f_k - f_{k+1}| <= rel_f_tol * max(1, |f_{k+1}|)
    std::size_t memory = 10;
    double armijo_c1 = 1e-4;
    double shrink = 0.5;
    std::size_t max_backtracks = 40;
    double max_step = 5.0;     // cap on the largest coordinate change per trial
};

struct LbfgsResult {
    std::vector<double> x;
    double f = std::numeric_limits<double>::infinity();
    std::vector<double> grad;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    bool converged = false;
    std::string reason;
    std::vector<double> trace; // objective after each accepted step, starting with f(x0)
};

// fn(x, grad) returns f(x) and fills grad. A non-finite value, or a
// numerical_error thrown by fn, rejects a trial point.
using Objective = std::function<double(const std::vector<double>&, std::vector<double>&)>;

namespace detail {
inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}
inline double inf_norm(const std::vector<double>& a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}
} // namespace detail

inline LbfgsResult lbfgs_minimize(const Objective& fn, std::vector<double> x0, const LbfgsOptions& opt = {}) {
    if (!(opt.grad_tol > 0.0) || !(opt.rel_f_tol > 0.0)) throw validation_error("tolerances must be positive");
    const std::size_t n = x0.size();
    LbfgsResult res;
    res.x = std::move(x0);
    res.f = fn(res.x, res.grad);
    res.evaluations = 1;
    if (!std::isfinite(res.f)) throw numerical_error("objective is not finite at the starting point");
    res.trace.push_back(res.f);
    if (detail::inf_norm(res.grad) <= opt.grad_tol) {
        res.converged = true;
        res.reason = "gradient tolerance";
        return res;
    }

    std::deque<std::vector<double>> s_hist, y_hist;
    std::deque<double> rho_hist;
    std::vector<double> dir(n), x_new(n), g_new;
    std::size_t flat_run = 0; // consecutive accepted steps with f unchanged

    auto evaluate = [&](const std::vector<double>& x, std::vector<double>& g) {
        ++res.evaluations;
        try {
            const double f = fn(x, g);
            return std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
        } catch (const numerical_error&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    while (res.iterations < opt.max_iters) {
        // two-loop recursion
        dir = res.grad;
        const std::size_t m = s_hist.size();
        std::vector<double> a(m);
        for (std::size_t i = m; i-- > 0;) {
            a[i] = rho_hist[i] * detail::dot(s_hist[i], dir);
            for (std::size_t j = 0; j < n; ++j) dir[j] -= a[i] * y_hist[i][j];
        }
        if (m > 0) {
            const double gamma = detail::dot(s_hist.back(), y_hist.back()) / detail::dot(y_hist.back(), y_hist.back());
            for (double& v : dir) v *= gamma;
        } else {
            const double gn = detail::inf_norm(res.grad);
            for (double& v : dir) v /= std::max(1.0, gn);
        }
        for (std::size_t i = 0; i < m; ++i) {
            const double b = rho_hist[i] * detail::dot(y_hist[i], dir);
            for (std::size_t j = 0; j < n; ++j) dir[j] += s_hist[i][j] * (a[i] - b);
        }
        for (double& v : dir) v = -v;

        double slope = detail::dot(res.grad, dir);
        if (!(slope < 0.0)) {
            // not a descent direction: fall back to steepest descent
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            const double gn = std::max(1.0, detail::inf_norm(res.grad));
            for (std::size_t j = 0; j < n; ++j) dir[j] = -res.grad[j] / gn;
            slope = detail::dot(res.grad, dir);
        }

        double step = 1.0;
        const double dmax = detail::inf_norm(dir);
        if (dmax * step > opt.max_step) step = opt.max_step / dmax;

        bool accepted = false;
        double f_new = 0.0;
        for (std::size_t bt = 0; bt <= opt.max_backtracks; ++bt) {
            for (std::size_t j = 0; j < n; ++j) x_new[j] = res.x[j] + step * dir[j];
            f_new = evaluate(x_new, g_new);
            // Near the optimum the decrease can fall below the resolution of
            // f, where Armijo passes trivially. A step that leaves f unchanged
            // is taken only if the slope along dir shrank.
            const bool armijo = f_new <= res.f + opt.armijo_c1 * step * slope;
            const bool slope_ok = f_new <= res.f && std::abs(detail::dot(g_new, dir)) <= 0.9 * std::abs(slope);
            if ((armijo && f_new < res.f) || slope_ok) {
                accepted = true;
                break;
            }
            step *= opt.shrink;
        }
        if (!accepted) {
            if (!s_hist.empty()) {
                s_hist.clear();
                y_hist.clear();
                rho_hist.clear();
                continue;
            }
            res.reason = "line search failed";
            break;
        }

        ++res.iterations;
        std::vector<double> s(n), y(n);
        for (std::size_t j = 0; j < n; ++j) {
            s[j] = x_new[j] - res.x[j];
            y[j] = g_new[j] - res.grad[j];
        }
        const double f_old = res.f;
        res.x = x_new;
        res.f = f_new;
        res.grad = g_new;
        res.trace.push_back(f_new);

        const double sy = detail::dot(s, y);
        if (sy > 1e-12 * std::sqrt(detail::dot(s, s) * detail::dot(y, y))) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (s_hist.size() > opt.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }

        if (detail::inf_norm(res.grad) <= opt.grad_tol) {
            res.converged = true;
            res.reason = "gradient tolerance";
            return res;
        }
        flat_run = f_new == f_old ? flat_run + 1 : 0;
        if ((flat_run == 0 && std::abs(f_old - f_new) <= opt.rel_f_tol * std::max(1.0, std::abs(f_new))) ||
            flat_run >= 20) {
            res.converged = true;
            res.reason = "relative objective tolerance";
            return res;
        }
    }
    if (res.reason.empty()) res.reason = "iteration limit";
    return res;
}

} // namespace ffpsurv
