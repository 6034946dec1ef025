#include "salmon/decision.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "salmon/dynamics.hpp"
#include "salmon/errors.hpp"
#include "salmon/io.hpp"
#include "salmon/mcmc.hpp"

namespace salmon::decision {

namespace {

/// Random numbers consumed by one draw, fixed before any policy is applied.
struct DrawNoise {
    std::vector<double> s74;                                     // [year]
    std::vector<std::vector<dynamics::StepInnovations>> steps;   // [year][stock]
};

DrawNoise draw_noise(std::uint64_t seed, std::size_t draw_id, const post::PosteriorModel& m, std::size_t H) {
    std::mt19937_64 rng(mcmc::chain_seed(seed, draw_id));
    std::normal_distribution<double> z(0.0, 1.0);
    const auto A = static_cast<std::size_t>(m.ages.max_sea_age);
    DrawNoise n;
    for (std::size_t h = 0; h < H; ++h) n.s74.push_back(priors::sample_m74_predictive(m.m74, rng));
    n.steps.resize(H);
    for (std::size_t h = 0; h < H; ++h)
        for (std::size_t i = 0; i < m.stocks.size(); ++i) {
            dynamics::StepInnovations s;
            s.recruit = z(rng);
            for (std::size_t a = 0; a < A; ++a) s.sea.push_back(z(rng));
            for (std::size_t a = 0; a < A; ++a) s.spawn.push_back(z(rng));
            n.steps[h].push_back(std::move(s));
        }
    return n;
}

dynamics::MortalitySchedule history_rates(const post::PosteriorModel& m, std::span<const double> q) {
    dynamics::MortalitySchedule rates(m.n_years, m.ages);
    for (std::size_t t = 0; t < m.n_years; ++t)
        for (std::size_t a = 0; a < rates.n_rates(); ++a) {
            double F = 0.0;
            for (std::size_t f = 0; f < m.fisheries.size(); ++f)
                F += q[f] * m.effort[f][t] * m.fisheries[f].selectivity[a];
            rates.F(t, a) = F;
            rates.M(t, a) = m.natural_mortality[a];
        }
    return rates;
}

struct DrawPath {
    std::vector<std::vector<double>> smolts;  // [stock][year]
    std::vector<std::vector<double>> ratio;
    double catch_total = 0.0;
};

DrawPath project_draw(const post::PosteriorModel& m, const lh::Parameters& p, const DrawNoise& noise,
                      const Policy& policy) {
    const std::size_t I = m.stocks.size(), H = policy.horizon, Y = m.n_years;
    const int A = m.ages.max_sea_age;
    const auto history = dynamics::reconstruct_trajectory(
        p.initial_sea, p.smolts, p.stocks, m.ages, p.maturation, history_rates(m, p.q), dynamics::M74Series{p.s74},
        {0.0, m.sigma_N, m.sigma_S}, p.z_sea, p.z_spawn);
    auto state = history.state_at(Y);
    state.year = 0;
    const dynamics::ProcessNoise process{p.sigma_R, m.sigma_N, m.sigma_S};

    DrawPath out;
    out.smolts.assign(I, std::vector<double>(H));
    out.ratio.assign(I, std::vector<double>(H));
    for (std::size_t h = 0; h < H; ++h) {
        dynamics::YearRates rates;
        for (int a = 0; a <= A; ++a) {
            const auto k = static_cast<std::size_t>(a);
            double F = 0.0;
            for (std::size_t f = 0; f < m.fisheries.size(); ++f)
                F += p.q[f] * policy.multipliers[f][h] * m.effort[f][Y - 1] * m.fisheries[f].selectivity[k];
            rates.F.push_back(F);
            rates.M.push_back(m.natural_mortality[k]);
        }
        for (std::size_t i = 0; i < I; ++i) {
            const auto& st = state.stocks[i];
            out.smolts[i][h] = st.smolts[0];
            out.ratio[i][h] = dynamics::depletion_ratio(st.smolts[0], p.stocks[i].pspc());
            out.catch_total += obs::expected_catch(st.smolts[0], rates.F[0], rates.M[0]);
            for (int a = 1; a <= A; ++a) {
                const auto k = static_cast<std::size_t>(a);
                out.catch_total += obs::expected_catch(st.sea[k - 1], rates.F[k], rates.M[k]);
            }
        }
        state = dynamics::step_population(state, p.stocks, m.ages, p.maturation, rates, noise.s74[h], process,
                                          noise.steps[h], static_cast<int>(H))
                    .next;
    }
    return out;
}

template <class Fn>
void parallel_for(std::size_t n, Fn fn) {
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(n, std::thread::hardware_concurrency()));
    if (workers <= 1) {
        for (std::size_t k = 0; k < n; ++k) fn(k);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t k = w; k < n; k += workers) fn(k);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::array<double, 5> quantiles(const std::vector<double>& v) {
    std::array<double, 5> q{};
    for (std::size_t k = 0; k < q.size(); ++k) q[k] = post::quantile(v, kQuantileLevels[k]);
    return q;
}

}  // namespace

void Policy::validate(std::size_t n_fisheries) const {
    if (name.empty()) throw ValidationError("policy.name: must not be empty");
    if (horizon < 1) throw ValidationError("policy.horizon: must be >= 1");
    if (multipliers.size() != n_fisheries)
        throw ValidationError("policy.multipliers: expected one entry per fishery");
    for (const auto& m : multipliers) {
        if (m.size() != horizon) throw ValidationError("policy.multipliers: expected one value per future year");
        for (double v : m)
            if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("policy.multipliers: values must be finite and >= 0");
    }
}

Policy Policy::uniform(std::string name, double multiplier, std::size_t n_fisheries, std::size_t horizon) {
    Policy p{std::move(name), horizon, std::vector<std::vector<double>>(n_fisheries, std::vector<double>(horizon, multiplier))};
    p.validate(n_fisheries);
    return p;
}

Policy policy_from_json(const json& j, std::span<const obs::FisheryDef> fisheries) {
    if (!j.is_object()) throw ValidationError("policy: expected a JSON object");
    Policy p;
    if (!j.contains("name") || !j["name"].is_string()) throw ValidationError("policy.name: required string");
    p.name = j["name"].get<std::string>();
    if (j.contains("horizon")) {
        if (!j["horizon"].is_number_integer() || j["horizon"].get<long>() < 1)
            throw ValidationError("policy.horizon: must be an integer >= 1");
        p.horizon = j["horizon"].get<std::size_t>();
    }
    p.multipliers.assign(fisheries.size(), std::vector<double>(p.horizon, 1.0));
    if (j.contains("multipliers")) {
        const auto& m = j["multipliers"];
        if (!m.is_object()) throw ValidationError("policy.multipliers: expected an object keyed by fishery");
        for (auto it = m.begin(); it != m.end(); ++it) {
            const std::string field = "policy.multipliers." + it.key();
            const auto f = std::find_if(fisheries.begin(), fisheries.end(), [&](const auto& d) { return d.id == it.key(); });
            if (f == fisheries.end()) throw ValidationError(field + ": unknown fishery");
            auto& row = p.multipliers[static_cast<std::size_t>(f - fisheries.begin())];
            if (it->is_number()) {
                row.assign(p.horizon, it->get<double>());
            } else if (it->is_array()) {
                if (it->size() != p.horizon)
                    throw ValidationError(field + ": expected " + std::to_string(p.horizon) + " values");
                for (std::size_t h = 0; h < p.horizon; ++h) {
                    if (!(*it)[h].is_number()) throw ValidationError(field + ": values must be numbers");
                    row[h] = (*it)[h].get<double>();
                }
            } else {
                throw ValidationError(field + ": expected a number or an array");
            }
        }
    }
    for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "name" && it.key() != "horizon" && it.key() != "multipliers")
            throw ValidationError("policy." + it.key() + ": unknown field");
    p.validate(fisheries.size());
    return p;
}

json to_json(const Policy& p, std::span<const obs::FisheryDef> fisheries) {
    json m = json::object();
    for (std::size_t f = 0; f < fisheries.size(); ++f) m[fisheries[f].id] = p.multipliers[f];
    return {{"name", p.name}, {"horizon", p.horizon}, {"multipliers", m}};
}

std::vector<std::size_t> select_draws(std::size_t n_rows, std::size_t n, std::uint64_t seed, bool full) {
    std::vector<std::size_t> ids(n_rows);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    if (full || n >= n_rows) return ids;
    // partial Fisher-Yates with an explicit integer draw, independent of library shuffles
    std::mt19937_64 rng(seed);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = k + static_cast<std::size_t>(rng() % (n_rows - k));
        std::swap(ids[k], ids[j]);
    }
    ids.resize(n);
    std::sort(ids.begin(), ids.end());
    return ids;
}

ProjectionResult project(const post::PosteriorModel& model, std::span<const lh::Parameters> draws,
                         std::span<const std::size_t> draw_ids, const Policy& policy, std::uint64_t seed,
                         const ProjectionSettings& settings) {
    if (draws.empty()) throw ValidationError("projection needs at least one posterior draw");
    if (draw_ids.size() != draws.size()) throw InternalError("draw ids must match draws");
    policy.validate(model.fisheries.size());
    if (model.m74.empty()) throw ValidationError("projection needs fitted M74 years");
    if (settings.window_first < 1 || settings.window_first > settings.window_last)
        throw ValidationError("projection window must satisfy 1 <= first <= last");
    const std::size_t I = model.stocks.size(), H = policy.horizon, n = draws.size();
    const std::size_t w_last = std::min(settings.window_last, H);
    const std::size_t w_first = std::min(settings.window_first, w_last);

    std::vector<DrawPath> paths(n);
    parallel_for(n, [&](std::size_t k) {
        paths[k] = project_draw(model, draws[k], draw_noise(seed, draw_ids[k], model, H), policy);
    });

    ProjectionResult r;
    r.policy = policy.name;
    r.horizon = H;
    r.n_draws = n;
    r.seed = seed;
    r.window_first = w_first;
    r.window_last = w_last;
    r.collapse_ratio = settings.collapse_ratio;
    std::vector<bool> collapsed(n, false);
    for (std::size_t i = 0; i < I; ++i) {
        StockProjection s;
        s.stock = model.stocks[i];
        std::size_t half = 0, three_q = 0;
        for (std::size_t k = 0; k < n; ++k) {
            bool h50 = false, h75 = false;
            for (std::size_t h = w_first - 1; h < w_last; ++h) {
                const double x = paths[k].ratio[i][h];
                h50 = h50 || x >= 0.5;
                h75 = h75 || x >= 0.75;
                if (x < settings.collapse_ratio) collapsed[k] = true;
            }
            half += h50;
            three_q += h75;
        }
        s.p_half = static_cast<double>(half) / static_cast<double>(n);
        s.p_three_quarters = static_cast<double>(three_q) / static_cast<double>(n);
        for (std::size_t h = 0; h < H; ++h) {
            s.years.push_back(model.first_year + static_cast<int>(model.n_years + h));
            std::vector<double> sm(n), ra(n);
            for (std::size_t k = 0; k < n; ++k) {
                sm[k] = paths[k].smolts[i][h];
                ra[k] = paths[k].ratio[i][h];
            }
            s.smolts.push_back(quantiles(sm));
            s.ratio.push_back(quantiles(ra));
        }
        r.stocks.push_back(std::move(s));
    }
    double catch_sum = 0.0;
    for (const auto& p : paths) catch_sum += p.catch_total;
    r.expected_catch = catch_sum / static_cast<double>(n);
    r.p_collapse = static_cast<double>(std::count(collapsed.begin(), collapsed.end(), true)) / static_cast<double>(n);
    return r;
}

std::vector<ProjectionResult> compare_policies(const post::PosteriorModel& model,
                                               std::span<const lh::Parameters> draws,
                                               std::span<const std::size_t> draw_ids,
                                               std::span<const Policy> policies, std::uint64_t seed,
                                               const ProjectionSettings& settings) {
    std::set<std::string> seen;
    for (const auto& p : policies)
        if (!seen.insert(p.name).second) throw ValidationError("duplicate policy name '" + p.name + "'");
    std::vector<ProjectionResult> out;
    for (const auto& p : policies) out.push_back(project(model, draws, draw_ids, p, seed, settings));
    return out;
}

json to_json(const ProjectionResult& r) {
    json stocks = json::array();
    for (const auto& s : r.stocks) {
        json years = json::array();
        for (std::size_t h = 0; h < s.years.size(); ++h)
            years.push_back({{"year", s.years[h]}, {"smolts", s.smolts[h]}, {"ratio", s.ratio[h]}});
        stocks.push_back({{"stock", s.stock},
                          {"p_reach_0.5", s.p_half},
                          {"p_reach_0.75", s.p_three_quarters},
                          {"years", years}});
    }
    return {{"schema", post::kSchema},
            {"policy", r.policy},
            {"horizon", r.horizon},
            {"n_draws", r.n_draws},
            {"seed", r.seed},
            {"window", {r.window_first, r.window_last}},
            {"quantile_levels", kQuantileLevels},
            {"expected_catch", r.expected_catch},
            {"p_collapse", r.p_collapse},
            {"collapse_ratio", r.collapse_ratio},
            {"stocks", stocks}};
}

json to_json(const std::vector<ProjectionResult>& table) {
    json rows = json::array();
    for (const auto& r : table) {
        json probs = json::object();
        for (const auto& s : r.stocks) probs[s.stock] = {{"p_reach_0.5", s.p_half}, {"p_reach_0.75", s.p_three_quarters}};
        rows.push_back({{"policy", r.policy},
                        {"stocks", probs},
                        {"expected_catch", r.expected_catch},
                        {"p_collapse", r.p_collapse}});
    }
    return {{"schema", post::kSchema}, {"rows", rows}};
}

std::string decision_table_csv(const std::vector<ProjectionResult>& table) {
    io::CsvTable t{{"policy", "stock", "p_reach_0.5", "p_reach_0.75", "expected_catch", "p_collapse"}, {}};
    for (const auto& r : table)
        for (const auto& s : r.stocks)
            t.rows.push_back({r.policy, s.stock, io::format_double(s.p_half), io::format_double(s.p_three_quarters),
                              io::format_double(r.expected_catch), io::format_double(r.p_collapse)});
    std::ostringstream out;
    for (std::size_t c = 0; c < t.header.size(); ++c) out << (c ? "," : "") << t.header[c];
    out << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
        out << '\n';
    }
    return out.str();
}

}  // namespace salmon::decision
