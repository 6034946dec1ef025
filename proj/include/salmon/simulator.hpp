#pragma once

// Synthetic data with known truth, generated through the same kernels the fit uses.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "salmon/dynamics.hpp"
#include "salmon/observation.hpp"
#include "salmon/priors.hpp"
#include "salmon/river.hpp"

namespace salmon::sim {

struct ObservationSchedule {
    std::vector<std::string> spawner_stocks;  // rivers with spawner counts in every year
    double spawner_cv = 0.2;
    std::vector<std::string> trap_stocks;     // rivers with a smolt trap in every year
    long trap_marked = 500;
    double trap_capture_prob = 0.04;
    std::size_t sites_per_river = 8;          // electrofishing sites per river-year, every river
    double site_sd = 0.3;                     // log-scale site scatter at the mean site area
    int parr_lag = 1;
    double survival_mean = -1.6;              // log parr-to-smolt survival, population mean
    double survival_sd = 0.05;
    double survival_process_sd = 0.1;
    long tags_per_cohort = 2000;              // reared smolts tagged each year, 0 for none
    std::size_t last_tag_offset = 3;          // no releases in the last years of the series
    std::vector<double> reared_at_sea;        // reared abundance per sea-age 0..A, every year
    long m74_families = 30;
    double expert_bias_sd = 0.2;              // log-scale error of the expert median
    double expert_log_sd = 0.5;               // stated uncertainty
    std::size_t external_stocks = 8;
    std::size_t external_obs = 20;
    priors::SRHyperDraw external_population{{std::log(250.0), std::log(1e-5)}, {0.3, 1.0}, 0.0};
    double external_obs_sd = 0.3;
};

struct SimulationDesign {
    std::string name = "custom";
    int first_year = 2000;
    std::size_t n_years = 10;
    dynamics::AgeStructure ages;
    std::vector<std::string> stocks;
    std::vector<dynamics::StockParams> stock_params;
    std::vector<double> habitat_area;             // [stock], m^2
    std::vector<obs::FisheryDef> fisheries;       // q holds the true catchability
    std::vector<std::vector<double>> effort;      // [fishery][year]
    std::vector<double> natural_mortality;        // sea-age 0..A
    dynamics::MaturationSchedule maturation;
    std::vector<double> m74_survival;             // [year]
    dynamics::ProcessNoise noise;
    std::vector<std::vector<double>> initial_sea;     // [stock][a - 1]
    std::vector<std::vector<double>> initial_smolts;  // [stock][k], k < T
    ObservationSchedule schedule;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Everything the generator knew; persisted next to the data, marked synthetic.
struct Truth {
    dynamics::Trajectory trajectory;
    std::vector<double> river_survival;  // [stock], log scale
    std::vector<std::vector<double>> log_parr;  // [stock][parr year index], NaN where not surveyed
};

struct SimulationResult {
    SimulationDesign design;
    obs::Dataset data;
    std::vector<river::RiverInfo> rivers;
    std::vector<river::SmoltTrapData> traps;
    std::vector<river::ElectrofishingSite> sites;
    std::vector<priors::M74Observation> m74;
    std::vector<priors::ExpertQuantiles> expert;
    std::vector<priors::ExternalSRDataset> external;
    Truth truth;
};

/// Lognormal observation with mean `expected`; sd 0 returns `expected` itself.
double draw_lognormal_obs(double expected, double sd, std::mt19937_64& rng);

SimulationResult simulate(const SimulationDesign& design);

/// "small": 2 stocks x 15 years x 3 sea-ages; "medium": 4 stocks x 25 years x 4 sea-ages
/// with one trap river.
SimulationDesign make_demo(const std::string& scale, std::uint64_t seed = 20240601);

/// Writes the observations as the data files read by the pipeline into `dir`/data and
/// the generating values into `dir`/truth, marked as synthetic.
void write_simulation(const std::filesystem::path& dir, const SimulationResult& result);

}  // namespace salmon::sim
