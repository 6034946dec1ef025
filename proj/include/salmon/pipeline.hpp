#pragma once

// Sequential assessment: expert capacity priors (A), mark-recapture smolt
// estimates (B), the river model (C), the stock-recruit hyperprior (D) and the
// M74 series (E) feed the life-history fit.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "salmon/dynamics.hpp"
#include "salmon/lifehistory.hpp"
#include "salmon/observation.hpp"
#include "salmon/priors.hpp"
#include "salmon/river.hpp"

namespace salmon::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kVersion = "1.0.0";

/// Stage names in canonical order; the index also fixes each stage's seed.
const std::vector<std::string>& stage_names();

struct StageBinding {
    std::string name;
    std::vector<std::string> inputs;
};

struct StockConfig {
    std::string name;
    std::vector<double> fecundity;  // per sea-age
    double female_prop = 0.5;
};

struct McmcConfig {
    std::size_t chains = 4;
    std::size_t iterations = 20000;  // per chain, warmup included
    double warmup_fraction = 0.5;
    std::size_t thin = 10;
    double rhat_threshold = 1.05;

    std::size_t n_warmup() const;
    std::size_t n_kept() const;
};

struct PipelineConfig {
    std::uint64_t seed = 1;
    fs::path data_dir;
    int first_year = 0;
    std::size_t n_years = 0;
    dynamics::AgeStructure ages;
    std::vector<StockConfig> stocks;
    std::vector<double> natural_mortality;
    std::vector<obs::FisheryDef> fisheries;
    std::vector<lh::NormalPrior> log_q;  // [fishery]
    double sigma_N = 0.0;
    double sigma_S = 0.0;

    std::vector<priors::BetaParams> maturation;  // sea-ages 1..A-1
    lh::NormalPrior log_sigma_R{std::log(0.3), 0.5};
    lh::SRPrior sr_default;                      // used where D is not bound
    priors::BetaParams m74_default{9.0, 1.0};    // used where E is not bound
    double initial_state_sd = 1.0;
    double initial_log_smolts = std::log(1e5);   // used when a stock has no smolt information
    double catch_floor = 0.5;

    std::vector<StageBinding> stages;
    river::RunSizePrior run_size_prior;
    std::size_t trap_draws = 4000;
    river::RiverModelSettings river;             // seed is derived, not read
    priors::SRHyperpriorSettings sr;             // seed is derived, not read
    McmcConfig life_history;

    void validate() const;
    /// Stage names in execution order.
    std::vector<std::string> execution_order() const;
    bool has_stage(const std::string& name) const;
    const StageBinding& stage(const std::string& name) const;
    std::uint64_t stage_seed(const std::string& name) const;
};

/// Relative data_dir entries are resolved against `base_dir`.
PipelineConfig config_from_json(const json& j, const fs::path& base_dir);
PipelineConfig load_config(const fs::path& file);
json to_json(const PipelineConfig& c);

/// Config of the demo designs, pointing at `data_dir`.
PipelineConfig demo_config(const std::string& scale, const fs::path& data_dir);

struct PipelineResult {
    json manifest;
    std::vector<std::string> order;
};

/// Runs every bound stage in order, writing stage outputs, the life-history posterior
/// and manifest.json under `out_dir`. Throws ConvergenceError labelled with the stage.
PipelineResult run_pipeline(const PipelineConfig& config, const fs::path& out_dir);

/// Re-runs the configuration recorded in a manifest after checking that the inputs
/// still hash to the recorded values.
PipelineResult rerun_from_manifest(const fs::path& manifest_file, const fs::path& out_dir);

}  // namespace salmon::pipeline
