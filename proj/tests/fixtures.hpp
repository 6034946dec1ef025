#pragma once

// Life-history specs assembled directly from a simulation, bypassing the
// upstream stages: smolt approximations are drawn around the true smolts.

#include <cmath>
#include <random>

#include "salmon/lifehistory.hpp"
#include "salmon/simulator.hpp"

namespace fixture {

inline salmon::lh::LifeHistorySpec spec_from_simulation(const salmon::sim::SimulationResult& res, double smolt_sd,
                                                        std::uint64_t seed, double prior_sd = 1.0) {
    using namespace salmon;
    const auto& d = res.design;
    lh::LifeHistorySpec s;
    s.first_year = d.first_year;
    s.n_years = d.n_years;
    s.ages = d.ages;
    s.stocks = d.stocks;
    s.natural_mortality = d.natural_mortality;
    s.fisheries = d.fisheries;
    for (const auto& f : d.fisheries) s.log_q.push_back({std::log(f.q), prior_sd});
    for (std::size_t a = 0; a + 1 < d.maturation.L.size(); ++a) {
        const double m = d.maturation.L[a];
        s.maturation.push_back({1.0 + 8.0 * m, 1.0 + 8.0 * (1.0 - m)});
    }
    const auto T = static_cast<std::size_t>(d.ages.smolt_delay);
    for (std::size_t i = 0; i < d.stocks.size(); ++i) {
        s.fecundity.push_back(d.stock_params[i].fecundity);
        s.female_prop.push_back(d.stock_params[i].female_prop);
        lh::SRPrior sr;
        sr.log_alpha = {std::log(d.stock_params[i].alpha), prior_sd};
        sr.log_beta = {std::log(d.stock_params[i].beta), prior_sd};
        s.sr.push_back(sr);
        std::vector<lh::NormalPrior> sea, smolts;
        for (double n : d.initial_sea[i]) sea.push_back({std::log(n), prior_sd});
        for (std::size_t k = 0; k < T; ++k) smolts.push_back({std::log(d.initial_smolts[i][k]), prior_sd});
        s.log_initial_sea.push_back(sea);
        s.log_initial_smolts.push_back(smolts);
    }
    for (double v : d.m74_survival) s.m74.push_back({1.0 + 20.0 * v, 1.0 + 20.0 * (1.0 - v)});
    s.log_sigma_R = {std::log(0.3), 0.5};
    s.data = res.data;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    const auto& traj = res.truth.trajectory;
    for (std::size_t i = 0; i < d.stocks.size(); ++i)
        for (std::size_t t = 0; t < d.n_years; ++t)
            s.data.smolts.push_back({d.stocks[i], d.first_year + static_cast<int>(t),
                                     std::log(traj.R(i, t)) + smolt_sd * z(rng), smolt_sd});
    return s;
}

/// Unconstrained vector holding the generating values.
inline std::vector<double> true_point(const salmon::lh::LifeHistoryModel& model,
                                      const salmon::sim::SimulationResult& res) {
    using namespace salmon;
    const auto& d = res.design;
    const auto& reg = model.registry();
    std::vector<double> x(reg.size(), 0.0);
    for (std::size_t i = 0; i < d.stocks.size(); ++i) {
        x[reg.index("alpha", i)] = d.stock_params[i].alpha;
        x[reg.index("beta", i)] = d.stock_params[i].beta;
        for (std::size_t a = 0; a < d.initial_sea[i].size(); ++a)
            x[reg.index("initial_sea", i * d.initial_sea[i].size() + a)] = d.initial_sea[i][a];
        for (std::size_t t = 0; t < model.n_smolt_years(); ++t)
            x[reg.index("smolts", i * model.n_smolt_years() + t)] = res.truth.trajectory.R(i, t);
    }
    for (std::size_t f = 0; f < d.fisheries.size(); ++f) x[reg.index("q", f)] = d.fisheries[f].q;
    for (std::size_t a = 0; a + 1 < d.maturation.L.size(); ++a) x[reg.index("maturation", a)] = d.maturation.L[a];
    x[reg.index("sigma_R", 0)] = d.noise.sigma_R;
    for (std::size_t t = 0; t < d.n_years; ++t) x[reg.index("s74", t)] = d.m74_survival[t];
    return reg.to_unconstrained(x);
}

}  // namespace fixture
