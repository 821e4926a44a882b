#pragma once

// Domain types of the discrete-time mixed proportional hazards model.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ffpsurv/error.hpp"

namespace ffpsurv {

inline constexpr double grid_tolerance = 1e-9;

// Shape/rate parameterisation of a Gamma distribution. Used both for the
// frailty prior and for every posterior state of the update chain.
struct GammaParams {
    double shape = 1.0;
    double rate = 1.0;

    GammaParams() = default;
    GammaParams(double shape_, double rate_) : shape(shape_), rate(rate_) {
        if (!(std::isfinite(shape) && std::isfinite(rate) && shape > 0.0 && rate > 0.0)) {
            throw validation_error("GammaParams requires finite shape > 0 and rate > 0, got (" +
                                   std::to_string(shape) + ", " + std::to_string(rate) + ")");
        }
    }

    double mean() const noexcept { return shape / rate; }

    friend bool operator==(const GammaParams&, const GammaParams&) = default;
};

// Index k such that y == k * psi, within grid_tolerance * psi.
// Returns -1 when y is negative or off the grid.
inline long grid_cell(double y, double psi) noexcept {
    if (!(y >= -grid_tolerance * psi) || !std::isfinite(y)) return -1;
    const double ratio = y / psi;
    const double k = std::nearbyint(ratio);
    if (std::abs(y - k * psi) > grid_tolerance * psi || k < 0.0) return -1;
    return static_cast<long>(k);
}

// Piecewise-constant cumulative baseline hazard on a grid of width psi.
//
// increments()[k-1] holds delta_k, the hazard mass of interval
// [(k-1)psi, k psi). cumulative(k) is delta_1 + ... + delta_k with
// cumulative(0) = 0. The mass beyond the last stored interval is infinite
// and is never represented as a number.
class DiscreteBaselineHazard {
public:
    DiscreteBaselineHazard() = default;

    DiscreteBaselineHazard(double psi, std::vector<double> increments, std::vector<bool> free_mask)
        : psi_(psi), increments_(std::move(increments)), free_mask_(std::move(free_mask)) {
        if (!(psi_ > 0.0) || !std::isfinite(psi_)) {
            throw validation_error("baseline interval length must be positive and finite");
        }
        if (free_mask_.size() != increments_.size()) {
            throw dimension_error("baseline free_mask", increments_.size(), free_mask_.size());
        }
        cumulative_.assign(increments_.size() + 1, 0.0);
        for (std::size_t k = 0; k < increments_.size(); ++k) {
            const double v = increments_[k];
            if (!(v >= 0.0) || !std::isfinite(v)) {
                throw validation_error("baseline increment " + std::to_string(k + 1) +
                                       " must be finite and non-negative");
            }
            if (!free_mask_[k] && v != 0.0) {
                throw validation_error("baseline increment " + std::to_string(k + 1) +
                                       " is fixed at zero but holds " + std::to_string(v));
            }
            cumulative_[k + 1] = cumulative_[k] + v;
        }
    }

    double interval() const noexcept { return psi_; }
    std::size_t size() const noexcept { return increments_.size(); }
    const std::vector<double>& increments() const noexcept { return increments_; }
    const std::vector<bool>& free_mask() const noexcept { return free_mask_; }
    const std::vector<double>& cumulative() const noexcept { return cumulative_; }

    // Sum of the first k increments. k == size()+1 reaches the infinite tail.
    double cumulative(std::size_t k) const noexcept {
        if (k < cumulative_.size()) return cumulative_[k];
        return std::numeric_limits<double>::infinity();
    }

    std::size_t free_count() const noexcept {
        return static_cast<std::size_t>(std::count(free_mask_.begin(), free_mask_.end(), true));
    }

    // Free increments in grid order.
    std::vector<double> free_values() const {
        std::vector<double> out;
        out.reserve(free_count());
        for (std::size_t k = 0; k < increments_.size(); ++k)
            if (free_mask_[k]) out.push_back(increments_[k]);
        return out;
    }

    // Same mask, free increments replaced in grid order.
    DiscreteBaselineHazard with_free_values(std::span<const double> values) const {
        if (values.size() != free_count()) {
            throw dimension_error("baseline free values", free_count(), values.size());
        }
        std::vector<double> inc(increments_.size(), 0.0);
        std::size_t j = 0;
        for (std::size_t k = 0; k < inc.size(); ++k)
            if (free_mask_[k]) inc[k] = values[j++];
        return DiscreteBaselineHazard(psi_, std::move(inc), free_mask_);
    }

    // Same increments on a rescaled hazard (delta -> c * delta).
    DiscreteBaselineHazard scaled(double c) const {
        std::vector<double> inc = increments_;
        for (double& v : inc) v *= c;
        return DiscreteBaselineHazard(psi_, std::move(inc), free_mask_);
    }

private:
    double psi_ = 1.0;
    std::vector<double> increments_;
    std::vector<bool> free_mask_;
    std::vector<double> cumulative_{0.0};
};

// Builds the increment mask from observed grouped outcomes: interval k is
// free iff some outcome y lies in [(k-1)psi, k psi), i.e. y/psi == k-1.
// This covers the extra interval an event at y needs for its upper term.
// Free increments start at zero; the estimator assigns starting values.
inline DiscreteBaselineHazard build_baseline(double psi, std::span<const double> observed_ys) {
    if (!(psi > 0.0) || !std::isfinite(psi)) {
        throw validation_error("psi must be positive and finite");
    }
    std::vector<bool> mask;
    for (std::size_t row = 0; row < observed_ys.size(); ++row) {
        const long cell = grid_cell(observed_ys[row], psi);
        if (cell < 0) {
            throw validation_error("outcome " + std::to_string(observed_ys[row]) +
                                       " is not a non-negative multiple of psi",
                                   row + 1);
        }
        const auto k = static_cast<std::size_t>(cell);
        if (mask.size() <= k) mask.resize(k + 1, false);
        mask[k] = true;
    }
    std::vector<double> inc(mask.size(), 0.0);
    return DiscreteBaselineHazard(psi, std::move(inc), std::move(mask));
}

// Phi(x) = exp(x . beta). No intercept: it is absorbed by the baseline scale.
class LinearTransform {
public:
    LinearTransform() = default;
    explicit LinearTransform(std::vector<double> coefficients) : beta_(std::move(coefficients)) {}

    const std::vector<double>& coefficients() const noexcept { return beta_; }
    std::size_t dimension() const noexcept { return beta_.size(); }

    double linear_predictor(std::span<const double> x) const {
        if (x.size() != beta_.size()) throw dimension_error("transform", beta_.size(), x.size());
        return std::inner_product(x.begin(), x.end(), beta_.begin(), 0.0);
    }

    double operator()(std::span<const double> x) const { return std::exp(linear_predictor(x)); }

private:
    std::vector<double> beta_;
};

inline double transform(const LinearTransform& lt, std::span<const double> x) { return lt(x); }

// One observed (y, d, x) triplet.
struct Spell {
    double y = 0.0;
    int d = 0;
    std::vector<double> x;

    friend bool operator==(const Spell&, const Spell&) = default;
};

struct Subject {
    std::string id;
    std::vector<Spell> spells; // observation order

    friend bool operator==(const Subject&, const Subject&) = default;
};

struct PanelDataset {
    std::vector<Subject> subjects;
    std::size_t p = 0;
    double psi = 1.0;

    std::size_t spell_count() const noexcept {
        std::size_t n = 0;
        for (const auto& s : subjects) n += s.spells.size();
        return n;
    }

    std::size_t event_count() const noexcept {
        std::size_t n = 0;
        for (const auto& s : subjects)
            for (const auto& sp : s.spells) n += static_cast<std::size_t>(sp.d == 1);
        return n;
    }

    std::vector<double> outcomes() const {
        std::vector<double> ys;
        ys.reserve(spell_count());
        for (const auto& s : subjects)
            for (const auto& sp : s.spells) ys.push_back(sp.y);
        return ys;
    }

    // Throws validation_error on the first violated invariant. Row numbers
    // count spells in dataset order starting at 1.
    void validate() const {
        if (!(psi > 0.0) || !std::isfinite(psi)) throw validation_error("psi must be positive and finite");
        std::size_t row = 0;
        for (const auto& s : subjects) {
            for (const auto& sp : s.spells) {
                ++row;
                if (sp.x.size() != p) {
                    throw validation_error("subject '" + s.id + "' has " + std::to_string(sp.x.size()) +
                                               " features, expected " + std::to_string(p),
                                           row);
                }
                if (sp.d != 0 && sp.d != 1) throw validation_error("d must be 0 or 1", row);
                if (grid_cell(sp.y, psi) < 0) {
                    throw validation_error("y=" + std::to_string(sp.y) + " is not a non-negative multiple of psi",
                                           row);
                }
                for (double v : sp.x)
                    if (!std::isfinite(v)) throw validation_error("non-finite feature value", row);
            }
        }
    }
};

} // namespace ffpsurv
