#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ffpsurv/likelihood.hpp"
#include "ffpsurv/model_core.hpp"

namespace fixtures {

// Small random panel on a unit grid with outcomes in [0, max_cell].
inline ffpsurv::PanelDataset random_panel(std::uint64_t seed, std::size_t n, std::size_t max_spells,
                                          std::size_t p, int max_cell = 6) {
    std::mt19937_64 gen(seed);
    std::uniform_int_distribution<int> cell(0, max_cell);
    std::uniform_int_distribution<std::size_t> spells(1, max_spells);
    std::bernoulli_distribution event(0.7);
    std::normal_distribution<double> feature(0.0, 1.0);
    ffpsurv::PanelDataset ds;
    ds.p = p;
    ds.psi = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        ffpsurv::Subject s;
        s.id = "s" + std::to_string(i);
        const std::size_t j = spells(gen);
        for (std::size_t q = 0; q < j; ++q) {
            ffpsurv::Spell sp;
            sp.y = cell(gen);
            sp.d = event(gen) ? 1 : 0;
            for (std::size_t m = 0; m < p; ++m) sp.x.push_back(feature(gen));
            s.spells.push_back(sp);
        }
        ds.subjects.push_back(s);
    }
    return ds;
}

// Random parameters in the layout of `problem`.
inline ffpsurv::ParameterVector random_parameters(const ffpsurv::PanelLikelihood& problem, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto pv = problem.blank_parameters();
    for (auto& b : pv.beta) b = 0.5 * u(gen);
    for (auto& d : pv.log_delta) d = -1.0 + 0.8 * u(gen);
    pv.log_alpha = 0.7 * u(gen);
    if (pv.log_kappa) *pv.log_kappa = 0.7 * u(gen);
    return pv;
}

} // namespace fixtures
