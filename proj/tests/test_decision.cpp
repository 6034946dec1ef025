#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "salmon/decision.hpp"
#include "salmon/errors.hpp"

using namespace salmon;

namespace {

struct Posterior {
    sim::SimulationResult sim;
    std::unique_ptr<lh::LifeHistoryModel> model;
    post::PosteriorModel pm;
    std::vector<lh::Parameters> draws;
    std::vector<std::size_t> ids;
};

// Draws scattered around the generating values, standing in for a fitted posterior.
Posterior make_posterior(std::size_t n, double spread = 0.05) {
    Posterior p;
    p.sim = sim::simulate(sim::make_demo("small"));
    p.model = std::make_unique<lh::LifeHistoryModel>(fixture::spec_from_simulation(p.sim, 0.1, 7));
    p.pm = post::PosteriorModel::from_spec(
        *p.model, priors::fit_m74_series(p.sim.m74, p.sim.design.first_year, p.sim.design.n_years));
    const auto u0 = fixture::true_point(*p.model, p.sim);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> z(0.0, 1.0);
    for (std::size_t k = 0; k < n; ++k) {
        auto u = u0;
        for (auto& x : u) x += spread * z(rng);
        p.draws.push_back(p.model->unpack(u));
        p.ids.push_back(k);
    }
    return p;
}

const Posterior& shared() {
    static const Posterior p = make_posterior(2000);
    return p;
}

void check_shape(const decision::ProjectionResult& r) {
    for (const auto& s : r.stocks) {
        CHECK(s.p_three_quarters <= s.p_half);
        CHECK(s.p_half >= 0.0);
        CHECK(s.p_half <= 1.0);
        for (std::size_t h = 0; h < s.years.size(); ++h)
            for (std::size_t k = 1; k < decision::kQuantileLevels.size(); ++k) {
                CHECK(s.smolts[h][k - 1] <= s.smolts[h][k]);
                CHECK(s.ratio[h][k - 1] <= s.ratio[h][k]);
            }
    }
}

}  // namespace

TEST_CASE("moratorium dominates status quo on shared noise") {
    const auto& p = shared();
    const std::size_t nf = p.pm.fisheries.size();
    const std::vector<decision::Policy> policies{decision::Policy::uniform("status_quo", 1.0, nf),
                                                 decision::Policy::uniform("moratorium", 0.0, nf)};
    const auto table = decision::compare_policies(p.pm, p.draws, p.ids, policies, 99);
    REQUIRE(table.size() == 2);
    for (std::size_t i = 0; i < p.pm.stocks.size(); ++i) {
        CHECK(table[1].stocks[i].p_half >= table[0].stocks[i].p_half);
        CHECK(table[1].stocks[i].p_three_quarters >= table[0].stocks[i].p_three_quarters);
    }
    CHECK(table[1].expected_catch == 0.0);
    CHECK(table[0].expected_catch > 0.0);
    CHECK(table[1].p_collapse <= table[0].p_collapse);
    for (const auto& r : table) check_shape(r);
}

TEST_CASE("projection is deterministic in draws, policy and seed") {
    const auto& p = shared();
    const auto pol = decision::Policy::uniform("half", 0.5, p.pm.fisheries.size());
    const auto a = decision::to_json(decision::project(p.pm, p.draws, p.ids, pol, 5)).dump();
    const auto b = decision::to_json(decision::project(p.pm, p.draws, p.ids, pol, 5)).dump();
    const auto c = decision::to_json(decision::project(p.pm, p.draws, p.ids, pol, 6)).dump();
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("single draw without process noise follows the deterministic path") {
    auto p = make_posterior(1, 0.0);
    p.draws[0].sigma_R = 0.0;
    // near-degenerate M74 posterior at survival 0.8
    for (auto& y : p.pm.m74) y.survival = {0.8e12, 0.2e12};
    const std::size_t H = 6, nf = p.pm.fisheries.size();
    const auto pol = decision::Policy::uniform("sq", 1.0, nf, H);
    const auto r = decision::project(p.pm, p.draws, p.ids, pol, 3);

    // Independent route: whole-horizon simulation from the reconstructed final state.
    const auto& d = p.draws[0];
    const auto& m = p.pm;
    dynamics::MortalitySchedule hist(m.n_years, m.ages), future(H, m.ages);
    for (std::size_t t = 0; t < m.n_years; ++t)
        for (std::size_t a = 0; a < hist.n_rates(); ++a) {
            double F = 0.0;
            for (std::size_t f = 0; f < nf; ++f) F += d.q[f] * m.effort[f][t] * m.fisheries[f].selectivity[a];
            hist.F(t, a) = F;
            hist.M(t, a) = m.natural_mortality[a];
        }
    for (std::size_t t = 0; t < H; ++t)
        for (std::size_t a = 0; a < future.n_rates(); ++a) {
            double F = 0.0;
            for (std::size_t f = 0; f < nf; ++f)
                F += d.q[f] * m.effort[f][m.n_years - 1] * m.fisheries[f].selectivity[a];
            future.F(t, a) = F;
            future.M(t, a) = m.natural_mortality[a];
        }
    const auto history = dynamics::reconstruct_trajectory(d.initial_sea, d.smolts, d.stocks, m.ages, d.maturation,
                                                          hist, dynamics::M74Series{d.s74}, {});
    auto start = history.state_at(m.n_years);
    start.year = 0;
    const auto zero = dynamics::StepInnovations::zeros(m.ages);
    const std::vector<std::vector<dynamics::StepInnovations>> innov(H, std::vector<dynamics::StepInnovations>(m.stocks.size(), zero));
    const auto path = dynamics::simulate_trajectory(start, d.stocks, m.ages, d.maturation, future,
                                                    dynamics::M74Series{std::vector<double>(H, 0.8)}, {}, innov);
    for (std::size_t i = 0; i < m.stocks.size(); ++i)
        for (std::size_t h = 0; h < H; ++h) {
            const auto& q = r.stocks[i].smolts[h];
            for (double v : q) CHECK(v == doctest::Approx(path.R(i, h)).epsilon(1e-5));
            CHECK(q.front() == q.back());
        }
}

TEST_CASE("identical policies give identical rows") {
    const auto& p = shared();
    const std::size_t nf = p.pm.fisheries.size();
    const std::span<const lh::Parameters> draws(p.draws.data(), 300);
    const std::span<const std::size_t> ids(p.ids.data(), 300);
    const std::vector<decision::Policy> policies{decision::Policy::uniform("a", 0.7, nf),
                                                 decision::Policy::uniform("b", 0.7, nf)};
    const auto t = decision::compare_policies(p.pm, draws, ids, policies, 17);
    auto ja = decision::to_json(t[0]), jb = decision::to_json(t[1]);
    ja.erase("policy");
    jb.erase("policy");
    CHECK(ja == jb);
}

TEST_CASE("expected catch is non-decreasing in a uniform effort multiplier") {
    const auto& p = shared();
    const std::size_t nf = p.pm.fisheries.size();
    const std::span<const lh::Parameters> draws(p.draws.data(), 300);
    const std::span<const std::size_t> ids(p.ids.data(), 300);
    std::vector<decision::Policy> policies;
    for (int k = 0; k <= 10; ++k) policies.push_back(decision::Policy::uniform("m" + std::to_string(k), k / 10.0, nf));
    const auto t = decision::compare_policies(p.pm, draws, ids, policies, 23);
    for (std::size_t k = 1; k < t.size(); ++k) CHECK(t[k].expected_catch >= t[k - 1].expected_catch);
}

TEST_CASE("policy lists and validation") {
    const auto& p = shared();
    const std::size_t nf = p.pm.fisheries.size();
    const std::span<const lh::Parameters> draws(p.draws.data(), 50);
    const std::span<const std::size_t> ids(p.ids.data(), 50);
    CHECK(decision::compare_policies(p.pm, draws, ids, {}, 1).empty());
    const std::vector<decision::Policy> dup{decision::Policy::uniform("x", 1.0, nf), decision::Policy::uniform("x", 0.0, nf)};
    CHECK_THROWS_AS(decision::compare_policies(p.pm, draws, ids, dup, 1), ValidationError);
    CHECK_THROWS_AS(decision::project(p.pm, {}, {}, dup[0], 1), ValidationError);
    CHECK_THROWS_AS(decision::Policy::uniform("neg", -0.1, nf), ValidationError);
    CHECK_THROWS_AS(decision::Policy::uniform("h0", 1.0, nf, 0), ValidationError);

    const auto& f = p.pm.fisheries;
    const auto ok = decision::policy_from_json(
        nlohmann::json{{"name", "mix"}, {"horizon", 3}, {"multipliers", {{f[0].id, {0.0, 0.5, 1.0}}}}}, f);
    CHECK(ok.multipliers[0] == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(ok.multipliers[1] == std::vector<double>{1.0, 1.0, 1.0});
    const auto field_of = [&](const nlohmann::json& j) {
        try {
            decision::policy_from_json(j, f);
        } catch (const ValidationError& e) {
            return std::string(e.what()).substr(0, std::string(e.what()).find(':'));
        }
        return std::string("accepted");
    };
    CHECK(field_of({{"multipliers", {}}}) == "policy.name");
    CHECK(field_of({{"name", "x"}, {"multipliers", {{"trawl", 1}}}}) == "policy.multipliers.trawl");
    CHECK(field_of({{"name", "x"}, {"multipliers", {{f[0].id, {1, 2}}}}}) == "policy.multipliers." + f[0].id);
    CHECK(field_of({{"name", "x"}, {"horizon", 0}}) == "policy.horizon");
    CHECK(field_of({{"name", "x"}, {"extra", 1}}) == "policy.extra");
    CHECK(field_of({{"name", "x"}, {"multipliers", {{f[0].id, -1}}}}) == "policy.multipliers");
    CHECK(field_of(nlohmann::json::array()) == "policy");
}

TEST_CASE("best policy is stable under half-draw subsampling") {
    const auto& p = shared();
    const std::size_t nf = p.pm.fisheries.size();
    const std::vector<decision::Policy> policies{decision::Policy::uniform("status_quo", 1.0, nf),
                                                 decision::Policy::uniform("half", 0.5, nf),
                                                 decision::Policy::uniform("moratorium", 0.0, nf)};
    const auto best = [&](std::span<const lh::Parameters> d, std::span<const std::size_t> id) {
        const auto t = decision::compare_policies(p.pm, d, id, policies, 31);
        std::size_t arg = 0;
        double top = -1.0;
        for (std::size_t k = 0; k < t.size(); ++k) {
            double total = 0.0;
            for (const auto& s : t[k].stocks) total += s.p_half;
            if (total > top) {
                top = total;
                arg = k;
            }
        }
        return arg;
    };
    const auto full = best(p.draws, p.ids);
    int same = 0;
    for (std::uint64_t rep = 0; rep < 50; ++rep) {
        const auto rows = decision::select_draws(p.draws.size(), p.draws.size() / 2, 1000 + rep, false);
        std::vector<lh::Parameters> d;
        for (auto r : rows) d.push_back(p.draws[r]);
        same += best(d, rows) == full ? 1 : 0;
    }
    CHECK(same >= 45);
}

TEST_CASE("draw selection") {
    const auto a = decision::select_draws(5000, 1000, 4, false);
    CHECK(a.size() == 1000);
    CHECK(std::is_sorted(a.begin(), a.end()));
    CHECK(std::adjacent_find(a.begin(), a.end()) == a.end());
    CHECK(a == decision::select_draws(5000, 1000, 4, false));
    CHECK(a != decision::select_draws(5000, 1000, 5, false));
    CHECK(decision::select_draws(300, 1000, 4, false).size() == 300);
    CHECK(decision::select_draws(5000, 1000, 4, true).size() == 5000);
}

TEST_CASE("decision table exports") {
    const auto& p = shared();
    const std::size_t nf = p.pm.fisheries.size();
    const std::span<const lh::Parameters> draws(p.draws.data(), 100);
    const std::span<const std::size_t> ids(p.ids.data(), 100);
    const std::vector<decision::Policy> policies{decision::Policy::uniform("status_quo", 1.0, nf)};
    const auto t = decision::compare_policies(p.pm, draws, ids, policies, 1);
    const auto csv = decision::decision_table_csv(t);
    CHECK(csv.rfind("policy,stock,p_reach_0.5,p_reach_0.75,expected_catch,p_collapse\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + static_cast<long>(p.pm.stocks.size()));
    const auto j = decision::to_json(t);
    CHECK(j["schema"] == "v1");
    CHECK(j["rows"].size() == 1);
    CHECK(decision::to_json(t[0])["collapse_ratio"] == 0.1);
}
