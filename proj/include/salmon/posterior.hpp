#pragma once

// Persisted life-history posterior: the model structure needed to replay and
// project histories, plus the retained draws on the natural scale.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "salmon/dynamics.hpp"
#include "salmon/lifehistory.hpp"
#include "salmon/mcmc.hpp"
#include "salmon/observation.hpp"
#include "salmon/parameters.hpp"
#include "salmon/priors.hpp"

namespace salmon::post {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kSchema = "v1";

/// Everything a projection needs besides the draws. Stored as life_history/model.json.
struct PosteriorModel {
    int first_year = 0;
    std::size_t n_years = 0;
    dynamics::AgeStructure ages;
    std::vector<std::string> stocks;
    std::vector<std::vector<double>> fecundity;  // [stock][a - 1]
    std::vector<double> female_prop;
    std::vector<double> natural_mortality;       // sea-age 0..A
    std::vector<obs::FisheryDef> fisheries;      // q is sampled, not stored here
    std::vector<std::vector<double>> effort;     // [fishery][year]
    double sigma_N = 0.0;
    double sigma_S = 0.0;
    std::vector<priors::M74YearPosterior> m74;   // source of future M74 survival
    std::vector<ParamGroup> groups;              // layout of a draw row

    static PosteriorModel from_spec(const lh::LifeHistoryModel& model,
                                    std::vector<priors::M74YearPosterior> m74);

    std::size_t n_params() const;
    const ParamGroup& group(const std::string& name) const;
    /// Natural-scale row to structured parameters.
    lh::Parameters parameters(std::span<const double> row) const;
    std::size_t stock_index(const std::string& stock) const;
};

json to_json(const PosteriorModel& m);
PosteriorModel model_from_json(const json& j);

/// Writes model.json, chain_<k>.csv (natural scale, shortest round-trip text) and
/// diagnostics.json into `dir`. Returns the relative paths written.
std::vector<std::string> write_posterior(const fs::path& dir, const PosteriorModel& model,
                                         const lh::LifeHistoryModel& lh_model,
                                         const std::vector<mcmc::PosteriorChain>& chains,
                                         const mcmc::DiagnosticsReport& diagnostics);

json diagnostics_json(const mcmc::DiagnosticsReport& d);

/// Read-only view of a fitted run directory (the directory holding manifest.json).
class PosteriorStore {
public:
    static PosteriorStore load(const fs::path& run_dir);

    const fs::path& dir() const { return dir_; }
    const PosteriorModel& model() const { return model_; }
    const std::vector<std::string>& names() const { return names_; }
    std::size_t n_draws() const { return draws_.rows; }
    std::size_t n_chains() const { return n_chains_; }
    std::span<const double> row(std::size_t r) const { return draws_.row(r); }
    std::vector<double> column(const std::string& name) const;
    const json& diagnostics() const { return diagnostics_; }
    const json& manifest() const { return manifest_; }

private:
    fs::path dir_;
    PosteriorModel model_;
    std::vector<std::string> names_;
    mcmc::DrawMatrix draws_;  // pooled, chain by chain
    std::size_t n_chains_ = 0;
    json diagnostics_;
    json manifest_;
};

/// Type-7 quantile of unsorted values.
double quantile(std::vector<double> values, double p);

}  // namespace salmon::post
