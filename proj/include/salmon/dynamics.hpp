#pragma once

// Age-structured life-history kernels: smolts R, sea abundance N by sea-age,
// spawners S and eggs O for each stock, stepped one year at a time.

#include <cstddef>
#include <span>
#include <vector>

namespace salmon::dynamics {

struct AgeStructure {
    int max_sea_age = 1;  // sea-age classes a = 1..max_sea_age
    int smolt_delay = 1;  // years from egg cohort to smolt emigration

    int n_rates() const { return max_sea_age + 1; }  // sea-age 0 is the post-smolt year
    void validate() const;
};

struct StockParams {
    double alpha = 1.0;
    double beta = 1.0;
    std::vector<double> fecundity;  // eggs per female, indexed by sea-age - 1
    double female_prop = 0.5;

    /// Potential smolt production capacity, the Beverton-Holt asymptote.
    double pspc() const { return 1.0 / beta; }
    void validate(const AgeStructure& ages) const;
};

/// Instantaneous rates for one year, indexed by sea-age 0..max_sea_age.
struct YearRates {
    std::vector<double> F;
    std::vector<double> M;

    void validate(const AgeStructure& ages) const;
};

class MortalitySchedule {
public:
    MortalitySchedule() = default;
    MortalitySchedule(std::size_t n_years, const AgeStructure& ages);

    std::size_t n_years() const { return n_years_; }
    std::size_t n_rates() const { return n_rates_; }

    double& F(std::size_t t, std::size_t a) { return F_[t * n_rates_ + a]; }
    double& M(std::size_t t, std::size_t a) { return M_[t * n_rates_ + a]; }
    double F(std::size_t t, std::size_t a) const { return F_[t * n_rates_ + a]; }
    double M(std::size_t t, std::size_t a) const { return M_[t * n_rates_ + a]; }

    YearRates year(std::size_t t) const;
    void validate() const;

private:
    std::size_t n_years_ = 0;
    std::size_t n_rates_ = 0;
    std::vector<double> F_;
    std::vector<double> M_;
};

struct MaturationSchedule {
    std::vector<double> L;  // L[a - 1]: fraction maturing at sea-age a

    double at(int sea_age) const { return L[static_cast<std::size_t>(sea_age - 1)]; }
    void validate(const AgeStructure& ages) const;
};

struct M74Series {
    std::vector<double> survival;  // first-year survival per year
    void validate() const;
};

struct ProcessNoise {
    double sigma_R = 0.0;
    double sigma_N = 0.0;
    double sigma_S = 0.0;

    void validate() const;
};

/// Mean-one multiplicative error exp(sigma*z - sigma^2/2).
double process_error(double sigma, double z);

/// Standard-normal innovations driving one stock through one annual step.
struct StepInnovations {
    double recruit = 0.0;
    std::vector<double> sea;    // [0]: smolt -> sea-age 1; [a]: sea-age a -> a+1
    std::vector<double> spawn;  // [a - 1]: spawners at sea-age a

    static StepInnovations zeros(const AgeStructure& ages);
};

struct StockState {
    std::vector<double> smolts;  // R_t .. R_{t+T-1}
    std::vector<double> sea;     // N_{t,a}, a = 1..max_sea_age
};

struct PopulationState {
    int year = 0;  // index of the modeled year this state describes
    std::vector<StockState> stocks;
};

struct StepResult {
    PopulationState next;
    std::vector<std::vector<double>> spawners;  // [stock][a - 1], year t
    std::vector<double> eggs;                   // [stock], year t
};

double bh_recruitment(double eggs, double alpha, double beta);
double survival_kernel(double n, double F, double M, double eps);
double spawners_from_sea(double n, double maturing, double F, double M, double eps);
double eggs_from_spawners(std::span<const double> spawners, std::span<const double> fecundity,
                          double female_prop);
double depletion_ratio(double smolts, double pspc);

/// Advances every stock from year t to t+1: post-smolt survival (with M74),
/// aging, spawning, egg production and recruitment T years ahead.
/// `horizon` is the number of modeled years; stepping past it throws.
StepResult step_population(const PopulationState& state,
                           std::span<const StockParams> stocks,
                           const AgeStructure& ages,
                           const MaturationSchedule& maturation,
                           const YearRates& rates,
                           double s74,
                           const ProcessNoise& noise,
                           std::span<const StepInnovations> innovations,
                           int horizon);

/// Full history of the latent states.
class Trajectory {
public:
    Trajectory() = default;
    Trajectory(std::size_t n_stocks, std::size_t n_years, const AgeStructure& ages);

    std::size_t n_stocks() const { return n_stocks_; }
    std::size_t n_years() const { return n_years_; }
    const AgeStructure& ages() const { return ages_; }

    // smolts for t in [0, n_years + T)
    double& R(std::size_t i, std::size_t t) { return R_[i * n_smolt_years_ + t]; }
    double R(std::size_t i, std::size_t t) const { return R_[i * n_smolt_years_ + t]; }
    // sea abundance for t in [0, n_years], a in 1..A
    double& N(std::size_t i, std::size_t t, int a) { return N_[idx_n(i, t, a)]; }
    double N(std::size_t i, std::size_t t, int a) const { return N_[idx_n(i, t, a)]; }
    // spawners for t in [0, n_years), a in 1..A
    double& S(std::size_t i, std::size_t t, int a) { return S_[idx_s(i, t, a)]; }
    double S(std::size_t i, std::size_t t, int a) const { return S_[idx_s(i, t, a)]; }
    double& O(std::size_t i, std::size_t t) { return O_[i * n_years_ + t]; }
    double O(std::size_t i, std::size_t t) const { return O_[i * n_years_ + t]; }

    /// Abundance at risk in year t for sea-age a, with a = 0 meaning the smolt cohort.
    double at_sea(std::size_t i, std::size_t t, int a) const { return a == 0 ? R(i, t) : N(i, t, a); }
    double total_spawners(std::size_t i, std::size_t t) const;

    /// State at the start of year t (t <= n_years).
    PopulationState state_at(std::size_t t) const;

private:
    std::size_t idx_n(std::size_t i, std::size_t t, int a) const {
        return (i * (n_years_ + 1) + t) * A_ + static_cast<std::size_t>(a - 1);
    }
    std::size_t idx_s(std::size_t i, std::size_t t, int a) const {
        return (i * n_years_ + t) * A_ + static_cast<std::size_t>(a - 1);
    }

    std::size_t n_stocks_ = 0;
    std::size_t n_years_ = 0;
    std::size_t n_smolt_years_ = 0;
    std::size_t A_ = 0;
    AgeStructure ages_;
    std::vector<double> R_, N_, S_, O_;
};

/// Steps `initial` through every year of `rates`. innovations[t][i] drive stock i in year t.
Trajectory simulate_trajectory(const PopulationState& initial,
                               std::span<const StockParams> stocks,
                               const AgeStructure& ages,
                               const MaturationSchedule& maturation,
                               const MortalitySchedule& rates,
                               const M74Series& m74,
                               const ProcessNoise& noise,
                               const std::vector<std::vector<StepInnovations>>& innovations);

/// History with smolt abundances given rather than generated: every R(i,t),
/// t < n_years + T, comes from `smolts[i]`; sea abundance, spawners and eggs follow
/// the same kernels and step order as step_population. Eggs of year t are what
/// the recruitment relation maps to R(i, t + T).
/// sea_innovations[t][i] / spawn_innovations[t][i] may be empty when the matching
/// sigma is zero.
Trajectory reconstruct_trajectory(const std::vector<std::vector<double>>& initial_sea,
                                  const std::vector<std::vector<double>>& smolts,
                                  std::span<const StockParams> stocks,
                                  const AgeStructure& ages,
                                  const MaturationSchedule& maturation,
                                  const MortalitySchedule& rates,
                                  const M74Series& m74,
                                  const ProcessNoise& noise,
                                  const std::vector<std::vector<std::vector<double>>>& sea_innovations = {},
                                  const std::vector<std::vector<std::vector<double>>>& spawn_innovations = {});

}  // namespace salmon::dynamics
