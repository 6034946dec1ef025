#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace salmon::mcmc {

using LogDensity = std::function<double(std::span<const double>)>;

/// Row-major draws x parameters.
struct DrawMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    DrawMatrix() = default;
    DrawMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::vector<double> column(std::size_t c) const;
};

struct ChainSettings {
    std::uint64_t seed = 1;
    std::size_t n_warmup = 1000;
    std::size_t n_iter = 1000;
    std::size_t thin = 1;
    bool adapt = true;
    double target_accept = 0.3;
    double initial_scale = 0.1;
    /// Index blocks updated in turn each iteration; empty means one block of everything.
    std::vector<std::vector<std::size_t>> blocks;
};

struct BlockState {
    std::vector<std::size_t> indices;
    double scale = 1.0;               // multiplier on the Cholesky factor below
    std::vector<double> chol;         // lower-triangular proposal factor, row-major d x d
    double warmup_acceptance = 0.0;
    double acceptance = 0.0;          // post-warmup, the fixed kernel
    std::vector<double> window_acceptance;  // acceptance per adaptation window
};

struct PosteriorChain {
    std::size_t chain_id = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> names;
    DrawMatrix draws;  // unconstrained sampler coordinates
    std::vector<double> log_posterior;
    std::vector<BlockState> blocks;

    std::size_t n_draws() const { return draws.rows; }
};

/// Seed of chain k derived from a base seed.
std::uint64_t chain_seed(std::uint64_t base, std::size_t chain);

/// Blockwise random-walk Metropolis. Proposal covariances and scales adapt during
/// warmup only (windowed covariance estimates plus Robbins-Monro scaling toward
/// `target_accept`); the post-warmup kernel is fixed.
PosteriorChain run_chain(const LogDensity& log_density, std::vector<double> init, const ChainSettings& settings,
                         const std::vector<std::string>& names = {}, std::size_t chain_id = 0);

/// Runs one chain per init concurrently, chain k seeded with chain_seed(settings.seed, k).
std::vector<PosteriorChain> run_chains(const LogDensity& log_density, const std::vector<std::vector<double>>& inits,
                                       const ChainSettings& settings, const std::vector<std::string>& names = {});

struct ParamDiagnostic {
    std::string name;
    double mean = 0.0;
    double sd = 0.0;
    double rhat = 1.0;
    double ess = 0.0;
    bool degenerate = false;  // no variation within or across chains
    bool flagged = false;     // rhat above threshold, or degenerate
};

struct DiagnosticsReport {
    double threshold = 1.05;
    std::vector<ParamDiagnostic> params;

    bool passed() const;
    std::vector<std::string> flagged() const;
    double max_rhat() const;
    double min_ess() const;
};

/// Split R-hat (chains halved) over all chains.
double split_rhat(const std::vector<std::vector<double>>& chains);

/// Multi-chain effective sample size with Geyer's initial positive sequence.
double effective_sample_size(const std::vector<std::vector<double>>& chains);

/// Autocorrelation of a single series for lags 0..n-1 (FFT based).
std::vector<double> autocorrelation(std::span<const double> x);

DiagnosticsReport diagnostics(const std::vector<DrawMatrix>& chains, const std::vector<std::string>& names,
                              double threshold = 1.05);

}  // namespace salmon::mcmc
