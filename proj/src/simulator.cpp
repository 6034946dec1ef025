#include "salmon/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "salmon/errors.hpp"
#include "salmon/io.hpp"
#include "salmon/mcmc.hpp"

#include <json.hpp>

namespace salmon::sim {

namespace {

// Independent generator streams, so adding one data type leaves the others unchanged.
enum Stream : std::size_t { process, catches, spawners, tags, traps, parr, m74, expert, external };

std::mt19937_64 stream(std::uint64_t seed, Stream s) { return std::mt19937_64(mcmc::chain_seed(seed, s)); }

long draw_binomial(long n, double p, std::mt19937_64& rng) {
    if (n <= 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    return std::binomial_distribution<long>(n, p)(rng);
}

obs::ObservationModel truth_model(const SimulationDesign& d) {
    auto fisheries = d.fisheries;
    for (auto& f : fisheries) f.obs_sd = std::max(f.obs_sd, 1.0);  // noise level is not part of the model here
    return {d.first_year, d.n_years, d.ages, fisheries, d.effort, d.natural_mortality, d.stocks};
}

}  // namespace

double draw_lognormal_obs(double expected, double sd, std::mt19937_64& rng) {
    if (sd == 0.0) return expected;
    std::normal_distribution<double> z(0.0, 1.0);
    return expected * std::exp(sd * z(rng) - 0.5 * sd * sd);
}

void SimulationDesign::validate() const {
    ages.validate();
    const std::size_t I = stocks.size();
    const auto A = static_cast<std::size_t>(ages.max_sea_age), T = static_cast<std::size_t>(ages.smolt_delay);
    if (I == 0 || n_years == 0) throw ValidationError("simulation needs stocks and years");
    if (stock_params.size() != I || habitat_area.size() != I || initial_sea.size() != I || initial_smolts.size() != I)
        throw ValidationError("simulation: per-stock settings must list every stock");
    for (std::size_t i = 0; i < I; ++i) {
        stock_params[i].validate(ages);
        if (initial_sea[i].size() != A || initial_smolts[i].size() != T)
            throw ValidationError("simulation: initial state of " + stocks[i] + " has the wrong size");
        if (!(habitat_area[i] > 0.0)) throw ValidationError("simulation: habitat area must be positive");
    }
    if (effort.size() != fisheries.size()) throw ValidationError("simulation: effort needed for every fishery");
    for (const auto& e : effort)
        if (e.size() != n_years) throw ValidationError("simulation: effort needed for every year");
    if (m74_survival.size() != n_years) throw ValidationError("simulation: M74 survival needed for every year");
    maturation.validate(ages);
    noise.validate();
    truth_model(*this);  // fishery and mortality checks
    auto known = [&](const std::string& s) { return std::find(stocks.begin(), stocks.end(), s) != stocks.end(); };
    for (const auto& s : schedule.spawner_stocks)
        if (!known(s)) throw ValidationError("simulation: spawner schedule names unknown stock " + s);
    for (const auto& s : schedule.trap_stocks)
        if (!known(s)) throw ValidationError("simulation: trap schedule names unknown stock " + s);
    if (!schedule.reared_at_sea.empty() && schedule.reared_at_sea.size() != A + 1)
        throw ValidationError("simulation: reared abundance needs one value per sea-age 0..A");
    if (!(schedule.trap_capture_prob > 0.0 && schedule.trap_capture_prob <= 1.0))
        throw ValidationError("simulation: trap capture probability must be in (0, 1]");
    if (schedule.parr_lag < 0) throw ValidationError("simulation: parr lag must be >= 0");
}

SimulationResult simulate(const SimulationDesign& design) {
    design.validate();
    const std::size_t I = design.stocks.size(), Y = design.n_years;
    const int A = design.ages.max_sea_age;
    const auto nA = static_cast<std::size_t>(A);
    const auto& sch = design.schedule;

    SimulationResult out;
    out.design = design;
    const obs::ObservationModel model = truth_model(design);

    // Process noise and the true history.
    auto rng = stream(design.seed, process);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<std::vector<dynamics::StepInnovations>> innov(Y);
    for (auto& year : innov)
        for (std::size_t i = 0; i < I; ++i) {
            dynamics::StepInnovations s;
            s.recruit = z(rng);
            for (std::size_t a = 0; a < nA; ++a) s.sea.push_back(z(rng));
            for (std::size_t a = 0; a < nA; ++a) s.spawn.push_back(z(rng));
            year.push_back(s);
        }
    dynamics::PopulationState initial;
    for (std::size_t i = 0; i < I; ++i) initial.stocks.push_back({design.initial_smolts[i], design.initial_sea[i]});
    out.truth.trajectory = dynamics::simulate_trajectory(initial, design.stock_params, design.ages, design.maturation,
                                                         model.mortality(), {design.m74_survival}, design.noise, innov);
    const auto& traj = out.truth.trajectory;

    std::vector<double> reared;
    if (!sch.reared_at_sea.empty()) {
        for (std::size_t t = 0; t < Y; ++t) {
            for (int a = 0; a <= A; ++a) {
                const double n = sch.reared_at_sea[static_cast<std::size_t>(a)];
                reared.push_back(n);
                if (n > 0.0) out.data.reared.push_back({design.first_year + static_cast<int>(t), a, n});
            }
        }
    }

    rng = stream(design.seed, catches);
    for (std::size_t f = 0; f < design.fisheries.size(); ++f)
        for (std::size_t t = 0; t < Y; ++t) {
            const double expected = obs::expected_fishery_catch(f, t, traj, model, reared);
            out.data.catches.push_back({design.fisheries[f].id, design.first_year + static_cast<int>(t),
                                        design.effort[f][t],
                                        draw_lognormal_obs(expected, design.fisheries[f].obs_sd, rng)});
        }

    rng = stream(design.seed, spawners);
    const double spawner_sd = std::sqrt(std::log1p(sch.spawner_cv * sch.spawner_cv));
    for (std::size_t i = 0; i < I; ++i) {
        if (std::find(sch.spawner_stocks.begin(), sch.spawner_stocks.end(), design.stocks[i]) ==
            sch.spawner_stocks.end())
            continue;
        for (std::size_t t = 0; t < Y; ++t)
            out.data.spawners.push_back({design.stocks[i], design.first_year + static_cast<int>(t),
                                         draw_lognormal_obs(traj.total_spawners(i, t), spawner_sd, rng),
                                         sch.spawner_cv});
    }

    // Tag cohorts: multinomial over cells by sequential conditional binomials.
    rng = stream(design.seed, tags);
    if (sch.tags_per_cohort > 0) {
        for (std::size_t t = 0; t + sch.last_tag_offset < Y; ++t) {
            obs::TagCohort cohort;
            cohort.id = "tag" + std::to_string(design.first_year + static_cast<int>(t));
            cohort.release_year = design.first_year + static_cast<int>(t);
            cohort.released = sch.tags_per_cohort;
            const auto cells = obs::tag_cell_probabilities(cohort, model, design.maturation);
            long left = cohort.released;
            double mass_left = 1.0;
            for (const auto& cell : cells) {
                const double p = mass_left > 0.0 ? std::clamp(cell.probability / mass_left, 0.0, 1.0) : 0.0;
                const long k = draw_binomial(left, p, rng);
                if (k > 0) cohort.recoveries.push_back({design.fisheries[cell.fishery].id, cell.year, k});
                left -= k;
                mass_left -= cell.probability;
            }
            out.data.tags.push_back(cohort);
        }
    }

    // Rivers, smolt traps and electrofishing.
    out.truth.river_survival.resize(I);
    out.truth.log_parr.assign(I, std::vector<double>(Y, std::numeric_limits<double>::quiet_NaN()));
    auto parr_rng = stream(design.seed, parr);
    for (std::size_t i = 0; i < I; ++i) {
        out.rivers.push_back({design.stocks[i], design.habitat_area[i]});
        out.truth.river_survival[i] = sch.survival_mean + sch.survival_sd * z(parr_rng);
    }
    rng = stream(design.seed, traps);
    for (std::size_t i = 0; i < I; ++i) {
        if (std::find(sch.trap_stocks.begin(), sch.trap_stocks.end(), design.stocks[i]) == sch.trap_stocks.end())
            continue;
        for (std::size_t t = 0; t < Y; ++t) {
            const long run = std::max(static_cast<long>(std::llround(traj.R(i, t))), sch.trap_marked);
            const long r = draw_binomial(sch.trap_marked, sch.trap_capture_prob, rng);
            const long unmarked = draw_binomial(run - sch.trap_marked, sch.trap_capture_prob, rng);
            out.traps.push_back({design.stocks[i], design.first_year + static_cast<int>(t), sch.trap_marked,
                                 r + unmarked, r});
        }
    }
    if (sch.sites_per_river > 0) {
        const double mean_area = 200.0;
        for (std::size_t i = 0; i < I; ++i) {
            for (std::size_t ts = static_cast<std::size_t>(sch.parr_lag); ts < Y; ++ts) {
                const std::size_t tp = ts - static_cast<std::size_t>(sch.parr_lag);
                const double log_parr = std::log(traj.R(i, ts)) - out.truth.river_survival[i] -
                                        sch.survival_process_sd * z(parr_rng);
                out.truth.log_parr[i][tp] = log_parr;
                const double log_density = log_parr - std::log(design.habitat_area[i] / 100.0);
                for (std::size_t k = 0; k < sch.sites_per_river; ++k) {
                    const double area = 100.0 + 100.0 * static_cast<double>(k % 3);
                    const double w = area / mean_area;
                    out.sites.push_back({design.stocks[i], design.first_year + static_cast<int>(tp),
                                         "site" + std::to_string(k + 1), area,
                                         std::exp(log_density + sch.site_sd / std::sqrt(w) * z(parr_rng))});
                }
            }
        }
    }

    rng = stream(design.seed, m74);
    if (sch.m74_families > 0)
        for (std::size_t t = 0; t < Y; ++t)
            out.m74.push_back({design.first_year + static_cast<int>(t), sch.m74_families,
                               draw_binomial(sch.m74_families, 1.0 - design.m74_survival[t], rng)});

    rng = stream(design.seed, expert);
    for (std::size_t i = 0; i < I; ++i) {
        const double median = std::log(design.stock_params[i].pspc()) + sch.expert_bias_sd * z(rng);
        priors::LognormalPrior stated{median, sch.expert_log_sd};
        priors::ExpertQuantiles e{design.stocks[i], {}};
        for (double p : {0.1, 0.5, 0.9}) e.pairs.push_back({p, std::round(stated.quantile(p))});
        out.expert.push_back(e);
    }

    rng = stream(design.seed, external);
    std::uniform_real_distribution<double> spread(std::log(0.05), std::log(20.0));
    const auto& pop = sch.external_population;
    for (std::size_t j = 0; j < sch.external_stocks; ++j) {
        const double z1 = z(rng), z2 = z(rng);
        const double la = pop.mean[0] + pop.sd[0] * z1;
        const double lb = pop.mean[1] + pop.sd[1] * (pop.corr * z1 + std::sqrt(1.0 - pop.corr * pop.corr) * z2);
        priors::ExternalSRDataset ext{"ext" + std::to_string(j + 1), {}};
        for (std::size_t k = 0; k < sch.external_obs; ++k) {
            const double o = std::exp(spread(rng) + la - lb);
            const double r = draw_lognormal_obs(dynamics::bh_recruitment(o, std::exp(la), std::exp(lb)),
                                                sch.external_obs_sd, rng);
            ext.pairs.push_back({o, r});
        }
        out.external.push_back(ext);
    }
    return out;
}

SimulationDesign make_demo(const std::string& scale, std::uint64_t seed) {
    SimulationDesign d;
    d.seed = seed;
    if (scale == "small") {
        d.name = "small";
        d.n_years = 15;
        d.ages = {3, 2};
        d.stocks = {"north", "south"};
        d.stock_params = {{250.0, 1.0 / 3e5, {4000, 9000, 13000}, 0.5}, {300.0, 1.0 / 1e5, {4000, 9000, 13000}, 0.5}};
        d.habitat_area = {6e6, 2e6};
        d.natural_mortality = {1.5, 0.1, 0.1, 0.1};
        d.maturation = {{0.2, 0.6, 1.0}};
        d.fisheries = {{"offshore", 1.2e-4, {0.0, 0.4, 1.0, 1.0}, 0.6, 0.2},
                       {"coastal", 1.0e-4, {0.0, 0.3, 0.8, 1.0}, 0.6, 0.2}};
        d.initial_sea = {{6e4, 2.5e4, 8e3}, {2e4, 8e3, 2.5e3}};
        d.initial_smolts = {{1.6e5, 1.6e5}, {5e4, 5e4}};
        d.schedule.spawner_stocks = {"north"};
        d.schedule.trap_stocks = {"north"};
        d.schedule.reared_at_sea = {0.0, 2e4, 8e3, 2e3};
    } else if (scale == "medium") {
        d.name = "medium";
        d.n_years = 25;
        d.ages = {4, 3};
        d.stocks = {"north", "east", "south", "west"};
        const std::vector<double> fec{3000, 8000, 12000, 15000};
        d.stock_params = {{250.0, 1.0 / 4e5, fec, 0.5},
                          {220.0, 1.0 / 1e5, fec, 0.5},
                          {280.0, 1.0 / 2e5, fec, 0.5},
                          {300.0, 1.0 / 5e4, fec, 0.5}};
        d.habitat_area = {8e6, 2e6, 4e6, 1e6};
        d.natural_mortality = {1.5, 0.1, 0.1, 0.1, 0.1};
        d.maturation = {{0.1, 0.5, 0.8, 1.0}};
        d.fisheries = {{"offshore", 1.0e-4, {0.0, 0.3, 1.0, 1.0, 1.0}, 0.6, 0.2},
                       {"coastal", 0.8e-4, {0.0, 0.2, 0.6, 1.0, 1.0}, 0.6, 0.2}};
        d.initial_sea = {{7e4, 5e4, 2e4, 4e3}, {1.8e4, 1.2e4, 5e3, 1e3}, {3.5e4, 2.5e4, 1e4, 2e3},
                         {9e3, 6e3, 2.5e3, 5e2}};
        d.initial_smolts = {{2e5, 2e5, 2e5}, {5e4, 5e4, 5e4}, {1e5, 1e5, 1e5}, {2.5e4, 2.5e4, 2.5e4}};
        d.schedule.spawner_stocks = {"north", "south"};
        d.schedule.trap_stocks = {"north"};
        d.schedule.reared_at_sea = {0.0, 5e4, 2e4, 6e3, 1e3};
    } else {
        throw ValidationError("unknown demo scale '" + scale + "' (expected small or medium)");
    }
    d.noise = {0.3, 0.0, 0.0};
    // Effort declines through the series, which separates catchability from abundance.
    for (std::size_t f = 0; f < d.fisheries.size(); ++f) {
        std::vector<double> e;
        for (std::size_t t = 0; t < d.n_years; ++t) {
            const double x = static_cast<double>(t) / static_cast<double>(d.n_years - 1);
            e.push_back(std::round((f == 0 ? 3000.0 : 2500.0) * (1.0 - 0.6 * x)));
        }
        d.effort.push_back(e);
    }
    // M74 outbreaks in a few years of otherwise high survival.
    d.m74_survival.assign(d.n_years, 0.9);
    for (std::size_t t = 2; t < d.n_years; t += 7) d.m74_survival[t] = 0.4;
    if (d.n_years > 5) d.m74_survival[5] = 0.6;
    d.validate();
    return d;
}

void write_simulation(const std::filesystem::path& dir, const SimulationResult& result) {
    const auto& d = result.design;
    io::DataBundle bundle{result.data, result.rivers, result.traps, result.sites, result.m74, result.expert, result.external};
    io::write_bundle(dir / "data", bundle);

    const auto truth = dir / "truth";
    io::write_text(truth / "SYNTHETIC",
                   "Simulated from design '" + d.name + "' with seed " + std::to_string(d.seed) +
                       ". These are not real observations.\n");
    const auto& tr = result.truth.trajectory;
    io::CsvTable smolts{{"stock", "year", "smolts"}, {}};
    for (std::size_t i = 0; i < d.stocks.size(); ++i)
        for (std::size_t t = 0; t < d.n_years + static_cast<std::size_t>(d.ages.smolt_delay); ++t)
            smolts.rows.push_back({d.stocks[i], std::to_string(d.first_year + static_cast<int>(t)), io::format_double(tr.R(i, t))});
    io::write_csv(truth / "smolts.csv", smolts);

    nlohmann::json stocks = nlohmann::json::array();
    for (std::size_t i = 0; i < d.stocks.size(); ++i)
        stocks.push_back({{"stock", d.stocks[i]},
                          {"alpha", d.stock_params[i].alpha},
                          {"beta", d.stock_params[i].beta},
                          {"pspc", d.stock_params[i].pspc()},
                          {"river_log_survival", result.truth.river_survival[i]}});
    nlohmann::json q = nlohmann::json::object();
    for (const auto& f : d.fisheries) q[f.id] = f.q;
    const nlohmann::json params = {{"synthetic", true},
                                   {"design", d.name},
                                   {"seed", d.seed},
                                   {"stocks", stocks},
                                   {"q", q},
                                   {"maturation", d.maturation.L},
                                   {"sigma_R", d.noise.sigma_R},
                                   {"sigma_N", d.noise.sigma_N},
                                   {"sigma_S", d.noise.sigma_S},
                                   {"m74_survival", d.m74_survival}};
    io::write_text(truth / "parameters.json", params.dump(2) + "\n");
}

}  // namespace salmon::sim
