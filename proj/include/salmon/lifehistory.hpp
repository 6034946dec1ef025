#pragma once

// Posterior of the full life-history model: priors from the upstream stages,
// dynamics from given smolt abundances, and every observation likelihood.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "salmon/dynamics.hpp"
#include "salmon/observation.hpp"
#include "salmon/parameters.hpp"
#include "salmon/priors.hpp"

namespace salmon::lh {

struct NormalPrior {
    double mean = 0.0;
    double sd = 1.0;

    double log_density(double x) const;
};

/// Prior over (log alpha, log beta) of one stock.
struct SRPrior {
    NormalPrior log_alpha{std::log(100.0), 1.0};
    NormalPrior log_beta{std::log(1e-5), 2.0};
    double corr = 0.0;
    std::string source = "default";  // where the prior came from, for the manifest
};

struct LifeHistorySpec {
    int first_year = 0;
    std::size_t n_years = 0;
    dynamics::AgeStructure ages;
    std::vector<std::string> stocks;
    std::vector<std::vector<double>> fecundity;  // [stock][a - 1]
    std::vector<double> female_prop;             // [stock]
    std::vector<double> natural_mortality;       // sea-age 0..A, treated as known
    std::vector<obs::FisheryDef> fisheries;      // q is replaced by the sampled value
    std::vector<NormalPrior> log_q;              // [fishery]
    std::vector<priors::BetaParams> maturation;  // sea-ages 1..A-1; the oldest age always matures
    std::vector<SRPrior> sr;                     // [stock]
    NormalPrior log_sigma_R{std::log(0.3), 0.5};
    double sigma_N = 0.0;  // known; innovations are sampled only when positive
    double sigma_S = 0.0;
    std::vector<std::vector<NormalPrior>> log_initial_sea;     // [stock][a - 1]
    std::vector<std::vector<NormalPrior>> log_initial_smolts;  // [stock][k], k < T
    std::vector<priors::BetaParams> m74;                       // [year]
    double catch_floor = 0.5;
    obs::Dataset data;

    void validate() const;
};

/// One parameter vector on the natural scale.
struct Parameters {
    std::vector<dynamics::StockParams> stocks;
    std::vector<double> q;
    dynamics::MaturationSchedule maturation;
    double sigma_R = 0.0;
    std::vector<std::vector<double>> initial_sea;  // [stock][a - 1]
    std::vector<std::vector<double>> smolts;       // [stock][t], t < n_years + T
    std::vector<double> s74;                       // [year]
    std::vector<std::vector<std::vector<double>>> z_sea, z_spawn;  // [t][stock][k], empty when unused
};

class LifeHistoryModel {
public:
    explicit LifeHistoryModel(LifeHistorySpec spec);

    LifeHistoryModel(const LifeHistoryModel&) = delete;
    LifeHistoryModel& operator=(const LifeHistoryModel&) = delete;

    const LifeHistorySpec& spec() const { return spec_; }
    const ParameterRegistry& registry() const { return registry_; }
    const obs::ObservationModel& observation_model() const { return obs_model_; }

    Parameters unpack(std::span<const double> unconstrained) const;
    dynamics::MortalitySchedule mortality(std::span<const double> q) const;
    dynamics::Trajectory trajectory(const Parameters& p) const;

    /// Prior density on the sampler's coordinates, Jacobians included.
    double log_prior(std::span<const double> unconstrained) const;
    obs::LoglikTerms loglik(std::span<const double> unconstrained) const;
    /// Finite or -infinity, never NaN.
    double log_posterior(std::span<const double> unconstrained) const;

    /// Prior-centred start near the smolt approximations, jittered per chain.
    std::vector<std::vector<double>> initial_points(std::size_t n_chains, std::uint64_t seed,
                                                    double jitter = 0.1) const;

    /// Index of smolts[stock, t] in the flat vector.
    std::size_t smolt_index(std::size_t stock, std::size_t t) const;
    std::size_t n_smolt_years() const { return spec_.n_years + static_cast<std::size_t>(spec_.ages.smolt_delay); }

private:
    double evaluate(std::span<const double> u, bool with_likelihood, obs::LoglikTerms* terms) const;

    LifeHistorySpec spec_;
    ParameterRegistry registry_;
    obs::ObservationModel obs_model_;
    obs::IndexedDataset indexed_;
    std::size_t off_alpha_ = 0, off_beta_ = 0, off_q_ = 0, off_mat_ = 0, off_sigma_ = 0, off_smolts_ = 0,
                off_sea0_ = 0, off_s74_ = 0, off_zsea_ = 0, off_zspawn_ = 0;
    std::uint64_t instance_ = 0;  // distinguishes models in per-thread scratch space
};

}  // namespace salmon::lh
