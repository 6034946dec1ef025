#include "salmon/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "salmon/errors.hpp"

namespace salmon::dynamics {

namespace {

bool nonneg_finite(double x) { return std::isfinite(x) && x >= 0.0; }

void require(bool ok, const char* msg) {
    if (!ok) throw DomainError(msg);
}

}  // namespace

void AgeStructure::validate() const {
    if (max_sea_age < 1) throw ValidationError("max_sea_age must be >= 1");
    if (smolt_delay < 1) throw ValidationError("smolt_delay must be >= 1");
}

void StockParams::validate(const AgeStructure& ages) const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be positive");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ValidationError("beta must be positive");
    if (!(female_prop >= 0.0 && female_prop <= 1.0))
        throw ValidationError("female_prop must be a probability");
    if (fecundity.size() != static_cast<std::size_t>(ages.max_sea_age))
        throw ValidationError("fecundity needs one value per sea-age");
    for (std::size_t a = 0; a < fecundity.size(); ++a) {
        if (!(fecundity[a] > 0.0)) throw ValidationError("fecundity must be positive");
        if (a > 0 && fecundity[a] < fecundity[a - 1])
            throw ValidationError("fecundity must be nondecreasing in sea-age");
    }
}

void YearRates::validate(const AgeStructure& ages) const {
    const auto n = static_cast<std::size_t>(ages.n_rates());
    if (F.size() != n || M.size() != n) throw ValidationError("rates need one entry per sea-age 0..A");
    for (std::size_t a = 0; a < n; ++a) require(nonneg_finite(F[a]) && nonneg_finite(M[a]), "mortality rates must be >= 0");
}

MortalitySchedule::MortalitySchedule(std::size_t n_years, const AgeStructure& ages)
        : n_years_(n_years),
          n_rates_(static_cast<std::size_t>(ages.n_rates())),
          F_(n_years * n_rates_, 0.0),
          M_(n_years * n_rates_, 0.0) {}

YearRates MortalitySchedule::year(std::size_t t) const {
    YearRates r;
    r.F.assign(F_.begin() + static_cast<std::ptrdiff_t>(t * n_rates_),
               F_.begin() + static_cast<std::ptrdiff_t>((t + 1) * n_rates_));
    r.M.assign(M_.begin() + static_cast<std::ptrdiff_t>(t * n_rates_),
               M_.begin() + static_cast<std::ptrdiff_t>((t + 1) * n_rates_));
    return r;
}

void MortalitySchedule::validate() const {
    for (std::size_t k = 0; k < F_.size(); ++k)
        require(nonneg_finite(F_[k]) && nonneg_finite(M_[k]), "mortality rates must be >= 0 and finite");
}

void MaturationSchedule::validate(const AgeStructure& ages) const {
    if (L.size() != static_cast<std::size_t>(ages.max_sea_age))
        throw ValidationError("maturation needs one fraction per sea-age");
    for (double l : L)
        if (!(l >= 0.0 && l <= 1.0)) throw ValidationError("maturation fractions must be in [0,1]");
    if (L.back() != 1.0) throw ValidationError("all fish must mature at the oldest sea-age");
}

void M74Series::validate() const {
    for (double s : survival)
        if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("M74 survival must be in [0,1]");
}

void ProcessNoise::validate() const {
    if (!(sigma_R >= 0.0 && sigma_N >= 0.0 && sigma_S >= 0.0))
        throw ValidationError("process noise scales must be >= 0");
}

double process_error(double sigma, double z) { return std::exp(sigma * z - 0.5 * sigma * sigma); }

StepInnovations StepInnovations::zeros(const AgeStructure& ages) {
    StepInnovations z;
    z.sea.assign(static_cast<std::size_t>(ages.max_sea_age), 0.0);
    z.spawn.assign(static_cast<std::size_t>(ages.max_sea_age), 0.0);
    return z;
}

double bh_recruitment(double eggs, double alpha, double beta) {
    require(nonneg_finite(eggs), "eggs must be finite and >= 0");
    require(std::isfinite(alpha) && alpha > 0.0, "alpha must be finite and > 0");
    require(std::isfinite(beta) && beta > 0.0, "beta must be finite and > 0");
    return eggs / (alpha + beta * eggs);
}

double survival_kernel(double n, double F, double M, double eps) {
    require(nonneg_finite(n), "abundance must be finite and >= 0");
    require(nonneg_finite(F) && nonneg_finite(M), "mortality rates must be finite and >= 0");
    require(std::isfinite(eps) && eps > 0.0, "process error must be finite and > 0");
    return n * std::exp(-F - M) * eps;
}

double spawners_from_sea(double n, double maturing, double F, double M, double eps) {
    require(maturing >= 0.0 && maturing <= 1.0, "maturation fraction must be in [0,1]");
    return maturing * survival_kernel(n, F, M, eps);
}

double eggs_from_spawners(std::span<const double> spawners, std::span<const double> fecundity,
                          double female_prop) {
    if (spawners.size() != fecundity.size()) throw DomainError("spawners and fecundity differ in length");
    require(female_prop >= 0.0 && female_prop <= 1.0, "female proportion must be in [0,1]");
    double eggs = 0.0;
    for (std::size_t a = 0; a < spawners.size(); ++a) {
        require(std::isfinite(fecundity[a]) && fecundity[a] >= 0.0, "fecundity must be >= 0");
        require(nonneg_finite(spawners[a]), "spawners must be finite and >= 0");
        eggs += female_prop * fecundity[a] * spawners[a];
    }
    return eggs;
}

double depletion_ratio(double smolts, double pspc) {
    require(std::isfinite(pspc) && pspc > 0.0, "pspc must be > 0");
    require(nonneg_finite(smolts), "smolts must be finite and >= 0");
    return smolts / pspc;
}

StepResult step_population(const PopulationState& state,
                           std::span<const StockParams> stocks,
                           const AgeStructure& ages,
                           const MaturationSchedule& maturation,
                           const YearRates& rates,
                           double s74,
                           const ProcessNoise& noise,
                           std::span<const StepInnovations> innovations,
                           int horizon) {
    const int A = ages.max_sea_age;
    const auto nA = static_cast<std::size_t>(A);
    const auto T = static_cast<std::size_t>(ages.smolt_delay);
    if (state.stocks.size() != stocks.size() || innovations.size() != stocks.size())
        throw ValidationError("dimension mismatch: stocks, params and innovations differ in count");
    if (state.year + 1 > horizon) throw ValidationError("step beyond the modeled horizon");
    if (rates.F.size() != nA + 1 || rates.M.size() != nA + 1 || maturation.L.size() != nA)
        throw ValidationError("dimension mismatch: rates or maturation vs sea-ages");
    require(s74 >= 0.0 && s74 <= 1.0, "M74 survival must be in [0,1]");

    StepResult out;
    out.next.year = state.year + 1;
    out.next.stocks.resize(stocks.size());
    out.spawners.assign(stocks.size(), std::vector<double>(nA, 0.0));
    out.eggs.assign(stocks.size(), 0.0);

    for (std::size_t i = 0; i < stocks.size(); ++i) {
        const StockState& cur = state.stocks[i];
        const StepInnovations& z = innovations[i];
        if (cur.smolts.size() != T || cur.sea.size() != nA || z.sea.size() != nA || z.spawn.size() != nA)
            throw ValidationError("dimension mismatch in stock state or innovations");
        StockState& nxt = out.next.stocks[i];
        nxt.sea.assign(nA, 0.0);

        // (1) smolts -> first sea-year, with M74 on the cohort's first year
        nxt.sea[0] = survival_kernel(cur.smolts[0], rates.F[0], rates.M[0],
                                     process_error(noise.sigma_N, z.sea[0])) * s74;
        // (2) aging of immature fish
        for (int a = 1; a < A; ++a) {
            const auto k = static_cast<std::size_t>(a);
            nxt.sea[k] = (1.0 - maturation.at(a)) *
                         survival_kernel(cur.sea[k - 1], rates.F[k], rates.M[k],
                                         process_error(noise.sigma_N, z.sea[k]));
        }
        // (3) spawners; capped at the sea abundance they come from
        for (int a = 1; a <= A; ++a) {
            const auto k = static_cast<std::size_t>(a);
            const double s = spawners_from_sea(cur.sea[k - 1], maturation.at(a), rates.F[k], rates.M[k],
                                               process_error(noise.sigma_S, z.spawn[k - 1]));
            out.spawners[i][k - 1] = std::min(s, cur.sea[k - 1]);
        }
        // (4) eggs
        out.eggs[i] = eggs_from_spawners(out.spawners[i], stocks[i].fecundity, stocks[i].female_prop);
        // (5) recruits T years ahead
        const double recruits = bh_recruitment(out.eggs[i], stocks[i].alpha, stocks[i].beta) *
                                process_error(noise.sigma_R, z.recruit);
        nxt.smolts.assign(cur.smolts.begin() + 1, cur.smolts.end());
        nxt.smolts.push_back(recruits);
    }
    return out;
}

Trajectory::Trajectory(std::size_t n_stocks, std::size_t n_years, const AgeStructure& ages)
        : n_stocks_(n_stocks),
          n_years_(n_years),
          n_smolt_years_(n_years + static_cast<std::size_t>(ages.smolt_delay)),
          A_(static_cast<std::size_t>(ages.max_sea_age)),
          ages_(ages),
          R_(n_stocks * n_smolt_years_, 0.0),
          N_(n_stocks * (n_years + 1) * A_, 0.0),
          S_(n_stocks * n_years * A_, 0.0),
          O_(n_stocks * n_years, 0.0) {}

double Trajectory::total_spawners(std::size_t i, std::size_t t) const {
    double s = 0.0;
    for (int a = 1; a <= ages_.max_sea_age; ++a) s += S(i, t, a);
    return s;
}

PopulationState Trajectory::state_at(std::size_t t) const {
    PopulationState st;
    st.year = static_cast<int>(t);
    st.stocks.resize(n_stocks_);
    for (std::size_t i = 0; i < n_stocks_; ++i) {
        auto& s = st.stocks[i];
        for (std::size_t k = 0; k < static_cast<std::size_t>(ages_.smolt_delay); ++k) s.smolts.push_back(R(i, t + k));
        for (int a = 1; a <= ages_.max_sea_age; ++a) s.sea.push_back(N(i, t, a));
    }
    return st;
}

Trajectory simulate_trajectory(const PopulationState& initial,
                               std::span<const StockParams> stocks,
                               const AgeStructure& ages,
                               const MaturationSchedule& maturation,
                               const MortalitySchedule& rates,
                               const M74Series& m74,
                               const ProcessNoise& noise,
                               const std::vector<std::vector<StepInnovations>>& innovations) {
    const std::size_t n_years = rates.n_years();
    if (m74.survival.size() != n_years || innovations.size() != n_years)
        throw ValidationError("dimension mismatch: years in rates, M74 series and innovations differ");
    const int horizon = initial.year + static_cast<int>(n_years);
    Trajectory traj(stocks.size(), n_years, ages);
    PopulationState state = initial;
    for (std::size_t t = 0; t < n_years; ++t) {
        for (std::size_t i = 0; i < state.stocks.size(); ++i) {
            traj.R(i, t) = state.stocks[i].smolts[0];
            for (int a = 1; a <= ages.max_sea_age; ++a) traj.N(i, t, a) = state.stocks[i].sea[static_cast<std::size_t>(a - 1)];
        }
        StepResult res = step_population(state, stocks, ages, maturation, rates.year(t), m74.survival[t], noise,
                                         innovations[t], horizon);
        for (std::size_t i = 0; i < state.stocks.size(); ++i) {
            for (int a = 1; a <= ages.max_sea_age; ++a) traj.S(i, t, a) = res.spawners[i][static_cast<std::size_t>(a - 1)];
            traj.O(i, t) = res.eggs[i];
        }
        state = std::move(res.next);
    }
    for (std::size_t i = 0; i < state.stocks.size(); ++i) {
        for (std::size_t k = 0; k < static_cast<std::size_t>(ages.smolt_delay); ++k) traj.R(i, n_years + k) = state.stocks[i].smolts[k];
        for (int a = 1; a <= ages.max_sea_age; ++a) traj.N(i, n_years, a) = state.stocks[i].sea[static_cast<std::size_t>(a - 1)];
    }
    return traj;
}

Trajectory reconstruct_trajectory(const std::vector<std::vector<double>>& initial_sea,
                                  const std::vector<std::vector<double>>& smolts,
                                  std::span<const StockParams> stocks,
                                  const AgeStructure& ages,
                                  const MaturationSchedule& maturation,
                                  const MortalitySchedule& rates,
                                  const M74Series& m74,
                                  const ProcessNoise& noise,
                                  const std::vector<std::vector<std::vector<double>>>& sea_innovations,
                                  const std::vector<std::vector<std::vector<double>>>& spawn_innovations) {
    const std::size_t n_years = rates.n_years(), I = stocks.size();
    const int A = ages.max_sea_age;
    const auto nA = static_cast<std::size_t>(A);
    const std::size_t n_smolt_years = n_years + static_cast<std::size_t>(ages.smolt_delay);
    if (initial_sea.size() != I || smolts.size() != I || m74.survival.size() != n_years)
        throw ValidationError("dimension mismatch: stocks, initial state, smolts or M74 series");
    if (maturation.L.size() != nA || rates.n_rates() != nA + 1)
        throw ValidationError("dimension mismatch: rates or maturation vs sea-ages");
    const bool sea_noise = noise.sigma_N > 0.0, spawn_noise = noise.sigma_S > 0.0;
    if ((sea_noise && sea_innovations.size() != n_years) || (spawn_noise && spawn_innovations.size() != n_years))
        throw ValidationError("dimension mismatch: innovations vs years");

    Trajectory traj(I, n_years, ages);
    for (std::size_t i = 0; i < I; ++i) {
        if (initial_sea[i].size() != nA || smolts[i].size() != n_smolt_years)
            throw ValidationError("dimension mismatch in initial sea abundance or smolt series");
        for (std::size_t t = 0; t < n_smolt_years; ++t) traj.R(i, t) = smolts[i][t];
        for (int a = 1; a <= A; ++a) traj.N(i, 0, a) = initial_sea[i][static_cast<std::size_t>(a - 1)];
        for (std::size_t t = 0; t < n_years; ++t) {
            auto eps_sea = [&](std::size_t k) {
                return sea_noise ? process_error(noise.sigma_N, sea_innovations[t][i][k]) : 1.0;
            };
            auto eps_spawn = [&](std::size_t k) {
                return spawn_noise ? process_error(noise.sigma_S, spawn_innovations[t][i][k]) : 1.0;
            };
            traj.N(i, t + 1, 1) = survival_kernel(traj.R(i, t), rates.F(t, 0), rates.M(t, 0), eps_sea(0)) *
                                  m74.survival[t];
            for (int a = 1; a < A; ++a) {
                const auto k = static_cast<std::size_t>(a);
                traj.N(i, t + 1, a + 1) = (1.0 - maturation.at(a)) *
                                          survival_kernel(traj.N(i, t, a), rates.F(t, k), rates.M(t, k), eps_sea(k));
            }
            double eggs = 0.0;
            for (int a = 1; a <= A; ++a) {
                const auto k = static_cast<std::size_t>(a);
                const double n = traj.N(i, t, a);
                const double s = std::min(n, spawners_from_sea(n, maturation.at(a), rates.F(t, k), rates.M(t, k),
                                                               eps_spawn(k - 1)));
                traj.S(i, t, a) = s;
                eggs += stocks[i].female_prop * stocks[i].fecundity[k - 1] * s;
            }
            traj.O(i, t) = eggs;
        }
    }
    return traj;
}

}  // namespace salmon::dynamics
