#pragma once

// Predictions from a fitted model and the two evaluation metrics: Harrell's
// concordance index and an integrated Brier score.
//
// Survival convention: S(k psi) = P(t >= k psi) = P(y >= k psi), so the
// realised status at grid time tau is 1{y >= tau}.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ffpsurv/error.hpp"
#include "ffpsurv/estimation.hpp"
#include "ffpsurv/frailty_chain.hpp"
#include "ffpsurv/model_core.hpp"
#include "ffpsurv/parallel.hpp"

namespace ffpsurv {

struct SurvivalCurve {
    double psi = 1.0;
    std::vector<double> survival; // survival[k] = S(k psi), k = 0..K

    std::vector<double> grid() const {
        std::vector<double> g(survival.size());
        for (std::size_t k = 0; k < g.size(); ++k) g[k] = static_cast<double>(k) * psi;
        return g;
    }

    // S at grid time tau; zero past the fitted grid, where the baseline
    // hazard is infinite.
    double at(double tau) const {
        const long k = grid_cell(tau, psi);
        if (k < 0) throw validation_error("time " + std::to_string(tau) + " is not on the grid");
        const auto i = static_cast<std::size_t>(k);
        return i < survival.size() ? survival[i] : 0.0;
    }
};

namespace detail {
inline void check_features(const FittedModel& m, std::span<const double> x) {
    if (x.size() != m.beta.size()) throw dimension_error("features", m.beta.size(), x.size());
}
} // namespace detail

// Frailty state after folding `history` through the chain. Outcomes past the
// fitted grid are treated as reaching its last cell.
inline GammaParams posterior_state(const FittedModel& m, std::span<const Spell> history) {
    GammaParams state = m.prior();
    if (!m.frailty()) return state;
    const LinearTransform lt = m.transform();
    const double last = static_cast<double>(m.baseline.size()) * m.psi();
    for (const auto& sp : history) {
        detail::check_features(m, sp.x);
        const double y = std::min(sp.y, last);
        state = posterior_update(state, compute_xi(state, lt(sp.x), y, m.baseline), sp.d);
    }
    return state;
}

inline SurvivalCurve predict_survival(const FittedModel& m, std::span<const double> x,
                                      std::span<const Spell> history = {}) {
    detail::check_features(m, x);
    const GammaParams st = posterior_state(m, history);
    const double phi = m.transform()(x);
    SurvivalCurve c;
    c.psi = m.psi();
    c.survival.resize(m.baseline.size() + 1);
    for (std::size_t k = 0; k < c.survival.size(); ++k) {
        const double s = m.baseline.cumulative(k);
        c.survival[k] = m.frailty() ? std::exp(-st.shape * std::log1p(phi * s / st.rate)) : std::exp(-phi * s);
    }
    return c;
}

// phi(x) times the posterior mean frailty; higher means riskier.
inline double risk_score(const FittedModel& m, std::span<const double> x, std::span<const Spell> history = {}) {
    detail::check_features(m, x);
    const double phi = m.transform()(x);
    if (!m.frailty()) return phi;
    const GammaParams st = posterior_state(m, history);
    return phi * st.mean();
}

// Harrell's C: pairs (i, j) with y_i < y_j and d_i = 1 are comparable; the
// pair is concordant when score_i > score_j and counts 1/2 on a score tie.
inline double c_index(std::span<const double> scores, std::span<const double> y, std::span<const int> d) {
    if (scores.size() != y.size() || y.size() != d.size()) {
        throw dimension_error("c_index inputs", scores.size(), y.size() != scores.size() ? y.size() : d.size());
    }
    double concordant = 0.0;
    double comparable = 0.0;
    const std::size_t n = y.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (d[i] != 1) continue;
        for (std::size_t j = 0; j < n; ++j) {
            if (!(y[i] < y[j])) continue;
            comparable += 1.0;
            if (scores[i] > scores[j])
                concordant += 1.0;
            else if (scores[i] == scores[j])
                concordant += 0.5;
        }
    }
    if (comparable == 0.0) throw validation_error("c_index: no comparable pairs");
    return concordant / comparable;
}

// One prediction per spell, each spell using its subject's earlier spells
// as history.
struct SpellPrediction {
    double y = 0.0;
    int d = 0;
    double score = 0.0;
    SurvivalCurve curve;
};

inline std::vector<SpellPrediction> predict_panel(const FittedModel& m, const PanelDataset& ds, unsigned threads = 1) {
    if (ds.p != m.beta.size()) throw dimension_error("dataset features", m.beta.size(), ds.p);
    if (std::abs(ds.psi - m.psi()) > grid_tolerance * m.psi()) {
        throw validation_error("dataset psi does not match the model's grid");
    }
    std::vector<std::vector<SpellPrediction>> per(ds.subjects.size());
    parallel_for(ds.subjects.size(), threads, [&](std::size_t i) {
        const auto& spells = ds.subjects[i].spells;
        for (std::size_t j = 0; j < spells.size(); ++j) {
            const std::span<const Spell> hist(spells.data(), j);
            per[i].push_back({spells[j].y, spells[j].d, risk_score(m, spells[j].x, hist),
                              predict_survival(m, spells[j].x, hist)});
        }
    });
    std::vector<SpellPrediction> out;
    for (auto& v : per)
        for (auto& p : v) out.push_back(std::move(p));
    return out;
}

// Brier score on tau = psi, 2 psi, ..., horizon against status 1{y >= tau};
// censored spells contribute only while tau <= y. Grid times with no
// contributor are skipped; the rest are averaged by the trapezoid rule.
inline double integrated_brier(std::span<const SpellPrediction> preds, double psi, double horizon) {
    if (preds.empty()) throw validation_error("integrated_brier needs a non-empty test set");
    const long m = grid_cell(horizon, psi);
    if (m < 1) throw validation_error("horizon must be a positive multiple of psi");
    std::vector<double> taus, scores;
    for (long k = 1; k <= m; ++k) {
        const double tau = static_cast<double>(k) * psi;
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& p : preds) {
            const bool alive = p.y >= tau - grid_tolerance * psi;
            if (p.d == 0 && !alive) continue;
            const double e = (alive ? 1.0 : 0.0) - p.curve.at(tau);
            sum += e * e;
            ++count;
        }
        if (count == 0) continue;
        taus.push_back(tau);
        scores.push_back(sum / static_cast<double>(count));
    }
    if (taus.empty()) throw validation_error("integrated_brier: no spell contributes at any grid time");
    if (taus.size() == 1) return scores[0];
    double area = 0.0;
    for (std::size_t i = 1; i < taus.size(); ++i) area += 0.5 * (scores[i] + scores[i - 1]) * (taus[i] - taus[i - 1]);
    return area / (taus.back() - taus.front());
}

inline double integrated_brier(const FittedModel& m, const PanelDataset& test, double horizon, unsigned threads = 1) {
    const auto preds = predict_panel(m, test, threads);
    return integrated_brier(preds, m.psi(), horizon);
}

struct Evaluation {
    double c_index = 0.0;
    double ibs = 0.0;
    std::size_t spells = 0;
    double horizon = 0.0;
};

// horizon <= 0 selects the last time on the model's grid.
inline Evaluation evaluate(const FittedModel& m, const PanelDataset& test, double horizon = 0.0, unsigned threads = 1) {
    const auto preds = predict_panel(m, test, threads);
    std::vector<double> s, y;
    std::vector<int> d;
    for (const auto& p : preds) {
        s.push_back(p.score);
        y.push_back(p.y);
        d.push_back(p.d);
    }
    Evaluation e;
    e.horizon = horizon > 0.0 ? horizon : static_cast<double>(std::max<std::size_t>(m.baseline.size(), 1)) * m.psi();
    e.c_index = c_index(s, y, d);
    e.ibs = integrated_brier(preds, m.psi(), e.horizon);
    e.spells = preds.size();
    return e;
}

} // namespace ffpsurv
