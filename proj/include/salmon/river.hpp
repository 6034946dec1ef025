#pragma once

// River-stage submodels: smolt run size from trap mark-recapture, and the
// hierarchical parr-to-smolt model that carries trap information to every river.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "salmon/mcmc.hpp"
#include "salmon/observation.hpp"

namespace salmon::river {

struct SmoltTrapData {
    std::string river;
    int year = 0;
    long marked = 0;      // marked and released upstream of the trap
    long captured = 0;    // all fish caught in the trap, marked or not
    long recaptured = 0;  // marked fish among the captured

    void validate() const;
};

struct RunSizePrior {
    enum class Kind { uniform, log_uniform, lognormal };
    Kind kind = Kind::log_uniform;
    std::optional<double> lower;  // defaults to the fish known to exist
    std::optional<double> upper;  // defaults to a wide multiple of the Petersen estimate
    double log_mean = 0.0;        // lognormal only
    double log_sd = 1.0;
};

RunSizePrior::Kind run_size_prior_kind(const std::string& name);

struct SmoltPosterior {
    std::string river;
    int year = 0;
    std::vector<double> draws;
    std::string warning;  // non-empty when the data barely inform the run size
};

/// Posterior of the run size U with the capture probability integrated out
/// under a uniform prior: recaptures ~ Bin(marked, p), unmarked ~ Bin(U - marked, p).
SmoltPosterior markrecapture_posterior(const SmoltTrapData& data, const RunSizePrior& prior, std::size_t n_draws,
                                       std::uint64_t seed);

struct ElectrofishingSite {
    std::string river;
    int year = 0;
    std::string site;
    double area = 100.0;    // m^2 fished
    double density = 0.0;   // parr per 100 m^2
};

struct RiverInfo {
    std::string river;
    double habitat_area = 0.0;  // m^2 of parr habitat
};

enum class Pooling { hierarchical, independent };

struct RiverModelSettings {
    int lag = 1;  // smolt year minus parr year
    Pooling pooling = Pooling::hierarchical;
    std::uint64_t seed = 1;
    std::size_t n_chains = 4;
    std::size_t n_warmup = 2000;
    std::size_t n_iter = 4000;
    std::size_t thin = 2;
    double rhat_threshold = 1.05;
    double survival_prior_mean = -1.5;  // log scale, population mean (or each river when independent)
    double survival_prior_sd = 2.0;
    double scale_sd = 1.0;              // half-normal on every sd
    double zero_density = 0.1;          // parr per 100 m^2 substituted for empty sites
    double site_sd_floor = 0.05;        // keeps noiseless site data from collapsing the site sd
};

struct RiverModelFit {
    std::vector<std::string> rivers;
    std::vector<SmoltPosterior> smolts;                // every river-year with parr or trap data
    std::vector<std::vector<double>> survival_draws;   // [river][draw], parr-to-smolt survival
    std::vector<std::string> names;
    std::vector<mcmc::PosteriorChain> chains;
    mcmc::DiagnosticsReport diagnostics;

    const SmoltPosterior* find(const std::string& river, int year) const;
};

/// log smolts(t) = log parr index(t - lag) + log survival_r + process noise, with
/// survival_r drawn from a common population. Trap posteriors enter through their
/// lognormal approximation. Throws ValidationError when no trap year overlaps the
/// electrofishing years, ConvergenceError when the hyper-parameters fail the gate.
RiverModelFit fit_river_model(std::span<const RiverInfo> rivers, std::span<const ElectrofishingSite> sites,
                              std::span<const SmoltPosterior> trap_posteriors, const RiverModelSettings& settings);

/// Area-weighted mean site density times habitat area / 100.
double parr_index(std::span<const ElectrofishingSite> sites, double habitat_area, double zero_density = 0.1);

/// Lognormal moment match in log space, sd floored at `sd_floor`.
obs::SmoltLikelihoodApprox approximate_smolt_likelihood(const SmoltPosterior& posterior, double sd_floor = 0.01);

}  // namespace salmon::river
