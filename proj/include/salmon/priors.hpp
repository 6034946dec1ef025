#pragma once

// Informative priors for the life-history model: expert PSPC quantiles,
// a hierarchical stock-recruit prior from external stocks, and M74 survival.

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "salmon/mcmc.hpp"

namespace salmon::priors {

struct QuantilePair {
    double prob = 0.5;
    double value = 1.0;
};

struct ExpertQuantiles {
    std::string stock;
    std::vector<QuantilePair> pairs;

    void validate() const;
};

struct LognormalPrior {
    double mu = 0.0;  // mean of log
    double sd = 1.0;  // sd of log

    double quantile(double prob) const;
    double log_density_of_log(double log_x) const;  // normal density of log x
};

/// Least-squares fit of log-quantiles; exact when given two pairs.
LognormalPrior fit_quantile_prior(const ExpertQuantiles& expert);

struct SRPair {
    double eggs = 0.0;
    double recruits = 0.0;
};

struct ExternalSRDataset {
    std::string stock;
    std::vector<SRPair> pairs;

    void validate() const;
};

struct SRHyperpriorSettings {
    std::uint64_t seed = 1;
    std::size_t n_chains = 4;
    std::size_t n_warmup = 2000;
    std::size_t n_iter = 6000;
    std::size_t thin = 2;
    double rhat_threshold = 1.05;
    std::array<double, 2> mean_center{0.0, 0.0};  // population means of (log alpha, log beta)
    double mean_sd = 10.0;
    double scale_sd = 2.5;  // half-normal on population sds
    double obs_sd_scale = 1.0;
    std::size_t n_predictive = 4000;
};

/// Population-level draw: means, sds and correlation of (log alpha, log beta).
struct SRHyperDraw {
    std::array<double, 2> mean{};
    std::array<double, 2> sd{};
    double corr = 0.0;
};

/// Predictive distribution of (log alpha, log beta) for a new stock.
struct SRPredictive {
    std::array<double, 2> mean{};
    std::array<double, 2> sd{};
    double corr = 0.0;
    std::vector<std::array<double, 2>> draws;
};

struct SRHyperpriorFit {
    std::vector<std::string> names;
    std::vector<mcmc::PosteriorChain> chains;
    mcmc::DiagnosticsReport diagnostics;
    std::vector<SRHyperDraw> hyper_draws;              // pooled over chains
    std::vector<std::array<double, 2>> stock_means;    // posterior mean per external stock
    SRPredictive predictive;

    /// One predictive draw: a posterior hyper draw, then a bivariate normal stock.
    std::array<double, 2> sample(std::mt19937_64& rng) const;
};

/// Hierarchical bivariate-normal model over per-stock (log alpha, log beta),
/// Beverton-Holt recruitment with lognormal error. Throws ConvergenceError
/// when any R-hat exceeds the threshold.
SRHyperpriorFit fit_sr_hyperprior(std::span<const ExternalSRDataset> stocks, const SRHyperpriorSettings& settings);

struct M74Observation {
    int year = 0;
    long families = 0;
    long affected = 0;
};

struct BetaParams {
    double a = 1.0;
    double b = 1.0;

    double mean() const { return a / (a + b); }
    double variance() const { return a * b / ((a + b) * (a + b) * (a + b + 1.0)); }
    double log_density(double x) const;
    double sample(std::mt19937_64& rng) const;
};

struct M74YearPosterior {
    int year = 0;
    BetaParams mortality;
    BetaParams survival;
};

/// Beta(1,1) prior on the yearly fraction of families affected, binomial counts.
/// Years in [first_year, first_year + n_years) without data keep the prior.
std::vector<M74YearPosterior> fit_m74_series(std::span<const M74Observation> observations, int first_year,
                                             std::size_t n_years);

/// Future survival: a year chosen uniformly among the fitted years, then its Beta.
double sample_m74_predictive(std::span<const M74YearPosterior> fitted, std::mt19937_64& rng);

}  // namespace salmon::priors
