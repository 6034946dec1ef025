#pragma once

// Observation models linking the latent trajectory to catch/effort series,
// tag recoveries, spawner counts and approximated smolt likelihoods.

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "salmon/dynamics.hpp"

namespace salmon::obs {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct FisheryDef {
    std::string id;
    double q = 1e-4;                  // catchability per effort unit
    std::vector<double> selectivity;  // sea-age 0..A
    double reporting_rate = 1.0;      // tag reporting rate
    double obs_sd = 0.2;              // log-scale catch sd

    void validate(const dynamics::AgeStructure& ages) const;
};

struct CatchEffortRecord {
    std::string fishery;
    int year = 0;
    double effort = 0.0;
    std::optional<double> catch_obs;  // missing catch is skipped
};

struct TagRecovery {
    std::string fishery;
    int year = 0;
    long count = 0;
};

struct TagCohort {
    std::string id;
    int release_year = 0;
    long released = 0;
    std::string release_type = "reared";
    std::vector<TagRecovery> recoveries;

    void validate() const;
};

struct SpawnerCount {
    std::string stock;
    int year = 0;
    double count = 0.0;
    double cv = 0.2;
};

/// Lognormal approximation of a smolt posterior, used as a likelihood for log R.
struct SmoltLikelihoodApprox {
    std::string stock;
    int year = 0;
    double mu = 0.0;
    double sd = 1.0;
};

/// Reared fish at sea; enters the catch series only.
struct RearedAbundance {
    int year = 0;
    int sea_age = 1;
    double abundance = 0.0;
};

struct Dataset {
    std::vector<CatchEffortRecord> catches;
    std::vector<TagCohort> tags;
    std::vector<SpawnerCount> spawners;
    std::vector<SmoltLikelihoodApprox> smolts;
    std::vector<RearedAbundance> reared;

    bool empty() const {
        return catches.empty() && tags.empty() && spawners.empty() && smolts.empty();
    }
};

double fishing_mortality(double q, double effort, double selectivity);
double expected_catch(double n, double F, double M);

/// Normal log-density of log(C_obs) around log(C) - sd^2/2. Zero observations
/// are replaced with `zero_floor`.
double loglik_catch(double observed, double expected, double sd, double zero_floor = 0.5);

/// Same observation model for spawner counts, with sd = sqrt(log(1 + cv^2)).
double loglik_spawner_count(double observed, double expected_spawners, double cv, double zero_floor = 0.5);

double loglik_smolt_approx(double smolts, const SmoltLikelihoodApprox& approx);

struct TagCell {
    std::size_t fishery = 0;
    int year = 0;
    double probability = 0.0;
};

/// Multinomial log-density over the recovery cells plus the never-seen cell.
/// Recoveries in a cell absent from `cells` have probability zero.
double loglik_tags(const TagCohort& cohort, std::span<const TagCell> cells,
                   const std::unordered_map<std::string, std::size_t>& fishery_index);

/// Fisheries, effort and known natural mortality over the modeled years.
class ObservationModel {
public:
    ObservationModel(int first_year, std::size_t n_years, dynamics::AgeStructure ages,
                     std::vector<FisheryDef> fisheries, std::vector<std::vector<double>> effort,
                     std::vector<double> natural_mortality, std::vector<std::string> stocks);

    /// Builds the effort table from catch records; every fishery-year needs effort.
    static std::vector<std::vector<double>> effort_table(const Dataset& data, const std::vector<FisheryDef>& fisheries,
                                                         int first_year, std::size_t n_years);

    int first_year() const { return first_year_; }
    std::size_t n_years() const { return n_years_; }
    const dynamics::AgeStructure& ages() const { return ages_; }
    const std::vector<FisheryDef>& fisheries() const { return fisheries_; }
    std::vector<FisheryDef>& fisheries() { return fisheries_; }
    const std::vector<std::vector<double>>& effort() const { return effort_; }
    const std::vector<double>& natural_mortality() const { return M_; }
    const std::vector<std::string>& stocks() const { return stocks_; }
    const std::unordered_map<std::string, std::size_t>& fishery_index() const { return fishery_index_; }
    const std::unordered_map<std::string, std::size_t>& stock_index() const { return stock_index_; }

    std::optional<std::size_t> year_index(int year) const;

    double fishery_F(std::size_t f, std::size_t t, int a) const;
    double total_F(std::size_t t, int a) const;
    dynamics::MortalitySchedule mortality() const;

    double catch_floor = 0.5;

private:
    int first_year_;
    std::size_t n_years_;
    dynamics::AgeStructure ages_;
    std::vector<FisheryDef> fisheries_;
    std::vector<std::vector<double>> effort_;  // [fishery][year]
    std::vector<double> M_;                    // per sea-age 0..A
    std::vector<std::string> stocks_;
    std::unordered_map<std::string, std::size_t> fishery_index_;
    std::unordered_map<std::string, std::size_t> stock_index_;
};

/// Cell probabilities for a tag cohort released as smolts in `release_year`.
std::vector<TagCell> tag_cell_probabilities(const TagCohort& cohort, const ObservationModel& model,
                                            const dynamics::MaturationSchedule& maturation);

/// Expected wild plus reared catch of fishery f in year t.
double expected_fishery_catch(std::size_t f, std::size_t t, const dynamics::Trajectory& traj,
                              const ObservationModel& model, std::span<const double> reared_at_sea = {});

struct LoglikTerms {
    double catches = 0.0;
    double tags = 0.0;
    double spawners = 0.0;
    double smolts = 0.0;
    double total = 0.0;
};

/// Dataset with identifiers resolved to indices for repeated evaluation.
struct IndexedDataset {
    struct Catch { std::size_t fishery, t; double observed; };
    struct Spawners { std::size_t stock, t; double count, cv; };
    struct Smolt { std::size_t stock, t; SmoltLikelihoodApprox approx; };

    std::vector<Catch> catches;
    std::vector<const TagCohort*> tags;
    std::vector<Spawners> spawners;
    std::vector<Smolt> smolts;
    std::vector<double> reared;  // [t * (A+1) + a]
};

/// Resolves identifiers; records outside the modeled years or referencing unknown
/// stocks/fisheries are rejected. `data` must outlive the result.
IndexedDataset index_dataset(const Dataset& data, const ObservationModel& model);

LoglikTerms total_loglik(const IndexedDataset& data, const dynamics::Trajectory& traj,
                         const ObservationModel& model, const dynamics::MaturationSchedule& maturation);

LoglikTerms total_loglik(const Dataset& data, const dynamics::Trajectory& traj, const ObservationModel& model,
                         const dynamics::MaturationSchedule& maturation);

}  // namespace salmon::obs
