#pragma once

// Forward projections of posterior draws under effort policies, and the
// probabilities of reaching fractions of the smolt production capacity.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "salmon/lifehistory.hpp"
#include "salmon/posterior.hpp"

namespace salmon::decision {

using nlohmann::json;

inline constexpr std::array<double, 5> kQuantileLevels{0.05, 0.25, 0.5, 0.75, 0.95};

/// Effort multipliers applied to last observed year's effort, per fishery and future year.
struct Policy {
    std::string name;
    std::size_t horizon = 6;
    std::vector<std::vector<double>> multipliers;  // [fishery][year 0..H-1]

    void validate(std::size_t n_fisheries) const;
    /// Same multiplier for every fishery and year.
    static Policy uniform(std::string name, double multiplier, std::size_t n_fisheries, std::size_t horizon = 6);
};

/// Accepts {"name", "horizon"?, "multipliers": {fishery: number | [numbers]}}; a fishery
/// left out keeps status-quo effort. Errors name the offending field.
Policy policy_from_json(const json& j, std::span<const obs::FisheryDef> fisheries);
json to_json(const Policy& p, std::span<const obs::FisheryDef> fisheries);

struct ProjectionSettings {
    std::size_t window_first = 4;   // 1-based future years of the headline window
    std::size_t window_last = 6;
    double collapse_ratio = 0.1;    // "collapse" proxy threshold, fraction of capacity
};

struct StockProjection {
    std::string stock;
    std::vector<int> years;                         // calendar years of the future smolt cohorts
    std::vector<std::array<double, 5>> smolts;      // quantiles per year
    std::vector<std::array<double, 5>> ratio;       // smolts / capacity
    double p_half = 0.0;                            // ratio >= 0.5 in some window year
    double p_three_quarters = 0.0;
};

struct ProjectionResult {
    std::string policy;
    std::size_t horizon = 0;
    std::size_t n_draws = 0;
    std::uint64_t seed = 0;
    std::size_t window_first = 0, window_last = 0;
    std::vector<StockProjection> stocks;
    double expected_catch = 0.0;  // wild fish, summed over future years
    double p_collapse = 0.0;      // some stock below the collapse ratio in a window year
    double collapse_ratio = 0.0;
};

json to_json(const ProjectionResult& r);

/// Projects each draw H years ahead. Draw `draw_ids[k]` seeds its own random stream,
/// so policies compared on the same ids share every random number.
ProjectionResult project(const post::PosteriorModel& model, std::span<const lh::Parameters> draws,
                         std::span<const std::size_t> draw_ids, const Policy& policy, std::uint64_t seed,
                         const ProjectionSettings& settings = {});

/// One row per policy on shared random numbers; duplicate names are rejected.
std::vector<ProjectionResult> compare_policies(const post::PosteriorModel& model,
                                               std::span<const lh::Parameters> draws,
                                               std::span<const std::size_t> draw_ids,
                                               std::span<const Policy> policies, std::uint64_t seed,
                                               const ProjectionSettings& settings = {});

json to_json(const std::vector<ProjectionResult>& table);
/// Delimiter-separated decision table, one row per policy and stock.
std::string decision_table_csv(const std::vector<ProjectionResult>& table);

/// Row indices used for projection: all rows, or a seeded subsample of `n` rows in
/// increasing order.
std::vector<std::size_t> select_draws(std::size_t n_rows, std::size_t n, std::uint64_t seed, bool full);

}  // namespace salmon::decision
