#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "salmon/errors.hpp"
#include "salmon/observation.hpp"

using namespace salmon;
using namespace salmon::obs;
using salmon::dynamics::AgeStructure;

namespace {

double normal_pdf_log(double x, double m, double s) {
    // direct density then log, independent of the library's closed form
    return std::log(std::exp(-(x - m) * (x - m) / (2 * s * s)) / (s * std::sqrt(2 * std::numbers::pi)));
}

double factorial(int n) {
    double f = 1.0;
    for (int k = 2; k <= n; ++k) f *= k;
    return f;
}

}  // namespace

TEST_CASE("fishing_mortality") {
    CHECK(fishing_mortality(1e-4, 0.0, 1.0) == 0.0);
    CHECK(fishing_mortality(1e-4, 5000.0, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(fishing_mortality(1e-4, 5000.0, 1.0) + fishing_mortality(2e-4, 1000.0, 0.5) ==
          doctest::Approx(0.6).epsilon(1e-15));
    CHECK_THROWS_AS(fishing_mortality(1e-4, -1.0, 1.0), DomainError);
}

TEST_CASE("expected_catch") {
    CHECK(expected_catch(1000.0, 0.0, 0.2) == 0.0);
    CHECK(expected_catch(1000.0, 0.0, 0.0) == 0.0);
    CHECK(expected_catch(1000.0, 0.2, 0.2) == doctest::Approx(164.83997698218033).epsilon(1e-14));
    CHECK(expected_catch(1000.0, 50.0, 0.5) / 1000.0 == doctest::Approx(50.0 / 50.5).epsilon(1e-12));
    for (double F : {0.01, 0.5, 3.0, 20.0}) CHECK(expected_catch(1000.0, F, 0.1) < 1000.0);
}

TEST_CASE("loglik_catch") {
    const double sd = 0.3, C = 120.0;
    CHECK(loglik_catch(100.0, C, sd) == doctest::Approx(0.18027199356395696).epsilon(1e-12));
    CHECK(loglik_catch(100.0, C, sd) == doctest::Approx(normal_pdf_log(std::log(100.0), std::log(C) - sd * sd / 2, sd)));
    const double mode = C * std::exp(-sd * sd / 2);
    CHECK(loglik_catch(mode, C, sd) > loglik_catch(mode * 1.01, C, sd));
    CHECK(loglik_catch(mode, C, sd) > loglik_catch(mode * 0.99, C, sd));
    CHECK(loglik_catch(mode * std::exp(0.2), C, sd) == doctest::Approx(loglik_catch(mode * std::exp(-0.2), C, sd)));
    CHECK(loglik_catch(5.0, 0.0, sd) == -std::numeric_limits<double>::infinity());
    CHECK(loglik_catch(0.0, C, sd, 0.5) == doctest::Approx(loglik_catch(0.5, C, sd)));
    CHECK_THROWS_AS(loglik_catch(-1.0, C, sd), DomainError);
}

TEST_CASE("spawner and smolt terms") {
    const double sd = std::sqrt(std::log(1 + 0.2 * 0.2));
    CHECK(loglik_spawner_count(900.0, 1000.0, 0.2) ==
          doctest::Approx(normal_pdf_log(std::log(900.0), std::log(1000.0) - sd * sd / 2, sd)));
    SmoltLikelihoodApprox s{"r", 2000, std::log(5e4), 0.2};
    CHECK(loglik_smolt_approx(5e4, s) == doctest::Approx(normal_pdf_log(std::log(5e4), std::log(5e4), 0.2)));
    CHECK(loglik_smolt_approx(0.0, s) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("loglik_tags") {
    std::unordered_map<std::string, std::size_t> fidx{{"off", 0}, {"coast", 1}};
    TagCohort cohort{"c1", 2000, 10, "reared", {{"off", 2001, 2}, {"coast", 2002, 1}}};
    std::vector<TagCell> cells{{0, 2001, 0.15}, {1, 2002, 0.05}};
    // direct multinomial pmf with cells (2, 1, 7)
    const double pmf = factorial(10) / (factorial(2) * factorial(1) * factorial(7)) * std::pow(0.15, 2) * 0.05 *
                       std::pow(0.8, 7);
    CHECK(loglik_tags(cohort, cells, fidx) == doctest::Approx(std::log(pmf)).epsilon(1e-12));

    // enumerating every outcome of a 3-release, 2-cell multinomial sums to one
    double total = 0.0;
    for (int a = 0; a <= 3; ++a)
        for (int b = 0; a + b <= 3; ++b) {
            TagCohort c{"e", 2000, 3, "reared", {{"off", 2001, a}, {"coast", 2002, b}}};
            total += std::exp(loglik_tags(c, cells, fidx));
        }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    TagCohort none{"n", 2000, 50, "reared", {}};
    CHECK(loglik_tags(none, std::vector<TagCell>{}, fidx) == 0.0);

    std::vector<TagCell> unreported{{0, 2001, 0.0}};
    TagCohort one{"o", 2000, 50, "reared", {{"off", 2001, 1}}};
    CHECK(loglik_tags(one, unreported, fidx) == -std::numeric_limits<double>::infinity());

    std::vector<TagCell> broken{{0, 2001, 0.7}, {1, 2002, 0.6}};
    CHECK_THROWS_AS(loglik_tags(one, broken, fidx), InternalError);
}

namespace {

struct Fixture {
    AgeStructure ages{2, 1};
    std::vector<FisheryDef> fisheries{{"off", 2e-4, {0.0, 0.5, 1.0}, 0.6, 0.25},
                                      {"coast", 1e-4, {0.0, 0.1, 1.0}, 0.8, 0.3}};
    Dataset data;
    dynamics::MaturationSchedule mat{{0.3, 1.0}};

    Fixture() {
        data.catches = {{"off", 2000, 1000, 900.0}, {"off", 2001, 1500, 1100.0}, {"off", 2002, 800, std::nullopt},
                        {"coast", 2000, 2000, 500.0}, {"coast", 2001, 2500, 650.0}, {"coast", 2002, 1000, 0.0}};
        data.spawners = {{"s1", 2001, 1800.0, 0.2}, {"s2", 2002, 700.0, 0.3}};
        data.smolts = {{"s1", 2000, std::log(2e4), 0.2}, {"s2", 2001, std::log(1e4), 0.3}};
        data.tags = {{"t0", 2000, 500, "reared", {{"off", 2001, 4}, {"coast", 2002, 2}}}};
        data.reared = {{2001, 1, 300.0}};
    }

    ObservationModel model() const {
        return ObservationModel(2000, 3, ages, fisheries, ObservationModel::effort_table(data, fisheries, 2000, 3),
                                {1.2, 0.1, 0.1}, {"s1", "s2"});
    }

    dynamics::Trajectory trajectory() const {
        dynamics::Trajectory traj(2, 3, ages);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t t = 0; t < 4; ++t) traj.R(i, t) = 2e4 / (i + 1) + 1000.0 * t;
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t t = 0; t <= 3; ++t)
                for (int a = 1; a <= 2; ++a) traj.N(i, t, a) = 3000.0 / (a + i) + 200.0 * t;
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t t = 0; t < 3; ++t)
                for (int a = 1; a <= 2; ++a) traj.S(i, t, a) = 500.0 * a + 100.0 * t + 50.0 * i;
        return traj;
    }
};

}  // namespace

TEST_CASE("total_loglik against a flat reimplementation") {
    Fixture fx;
    const auto model = fx.model();
    const auto traj = fx.trajectory();
    const auto terms = total_loglik(fx.data, traj, model, fx.mat);

    const double E[2][3] = {{1000, 1500, 800}, {2000, 2500, 1000}};
    const double q[2] = {2e-4, 1e-4}, sel[2][3] = {{0, 0.5, 1}, {0, 0.1, 1}}, M[3] = {1.2, 0.1, 0.1};
    auto Ff = [&](int f, int t, int a) { return q[f] * E[f][t] * sel[f][a]; };
    auto Ft = [&](int t, int a) { return Ff(0, t, a) + Ff(1, t, a); };
    auto at_sea = [&](int t, int a) {
        double n = 0;
        for (int i = 0; i < 2; ++i) n += a == 0 ? traj.R(i, t) : traj.N(i, t, a);
        if (t == 1 && a == 1) n += 300.0;
        return n;
    };
    auto catch_exp = [&](int f, int t) {
        double c = 0;
        for (int a = 0; a <= 2; ++a) {
            const double Z = Ft(t, a) + M[a];
            if (Ff(f, t, a) > 0) c += Ff(f, t, a) / Z * (1 - std::exp(-Z)) * at_sea(t, a);
        }
        return c;
    };
    const double obs[2][3] = {{900, 1100, -1}, {500, 650, 0.0}};
    const double sdc[2] = {0.25, 0.3};
    double ll_catch = 0;
    for (int f = 0; f < 2; ++f)
        for (int t = 0; t < 3; ++t) {
            if (obs[f][t] < 0) continue;
            const double y = obs[f][t] > 0 ? obs[f][t] : 0.5;
            ll_catch += normal_pdf_log(std::log(y), std::log(catch_exp(f, t)) - sdc[f] * sdc[f] / 2, sdc[f]);
        }
    CHECK(terms.catches == doctest::Approx(ll_catch).epsilon(1e-12));

    auto sp_sd = [](double cv) { return std::sqrt(std::log(1 + cv * cv)); };
    const double s1 = traj.S(0, 1, 1) + traj.S(0, 1, 2), s2 = traj.S(1, 2, 1) + traj.S(1, 2, 2);
    const double ll_sp = normal_pdf_log(std::log(1800.0), std::log(s1) - sp_sd(0.2) * sp_sd(0.2) / 2, sp_sd(0.2)) +
                         normal_pdf_log(std::log(700.0), std::log(s2) - sp_sd(0.3) * sp_sd(0.3) / 2, sp_sd(0.3));
    CHECK(terms.spawners == doctest::Approx(ll_sp).epsilon(1e-12));

    const double ll_sm = normal_pdf_log(std::log(traj.R(0, 0)), std::log(2e4), 0.2) +
                         normal_pdf_log(std::log(traj.R(1, 1)), std::log(1e4), 0.3);
    CHECK(terms.smolts == doctest::Approx(ll_sm).epsilon(1e-12));

    // tags released 2000 as smolts: cells (f, 2000+a) for a = 0,1,2; only a>=1 fished
    const double lam[2] = {0.6, 0.8};
    double alive = std::exp(-(Ft(0, 0) + M[0]));
    double p[2][3] = {{0, 0, 0}, {0, 0, 0}};
    for (int a = 1; a <= 2; ++a) {
        const double Z = Ft(a, a) + M[a];
        for (int f = 0; f < 2; ++f) p[f][a] = alive * Ff(f, a, a) / Z * (1 - std::exp(-Z)) * lam[f];
        alive *= std::exp(-Z) * (1 - fx.mat.L[a - 1]);
    }
    const double p_never = 1 - (p[0][1] + p[0][2] + p[1][1] + p[1][2]);
    const double ll_tag = std::log(495.0 * 496 * 497 * 498 * 499 * 500 / (factorial(4) * factorial(2))) + 4 * std::log(p[0][1]) +
                          2 * std::log(p[1][2]) + 494 * std::log(p_never);
    CHECK(terms.tags == doctest::Approx(ll_tag).epsilon(1e-9));
    CHECK(terms.total == doctest::Approx(ll_catch + ll_sp + ll_sm + ll_tag).epsilon(1e-12));
}

TEST_CASE("total_loglik is additive and empty data scores zero") {
    Fixture fx;
    const auto model = fx.model();
    const auto traj = fx.trajectory();
    Dataset empty;
    CHECK(total_loglik(empty, traj, model, fx.mat).total == 0.0);

    const auto all = total_loglik(fx.data, traj, model, fx.mat);
    double parts = 0.0;
    for (std::size_t k = 0; k < fx.data.spawners.size(); ++k) {
        Dataset one;
        one.spawners = {fx.data.spawners[k]};
        parts += total_loglik(one, traj, model, fx.mat).total;
    }
    for (std::size_t k = 0; k < fx.data.smolts.size(); ++k) {
        Dataset one;
        one.smolts = {fx.data.smolts[k]};
        parts += total_loglik(one, traj, model, fx.mat).total;
    }
    Dataset tags_only;
    tags_only.tags = fx.data.tags;
    parts += total_loglik(tags_only, traj, model, fx.mat).total;
    CHECK(all.spawners + all.smolts + all.tags == parts);
}

TEST_CASE("data validation") {
    Fixture fx;
    auto model = fx.model();
    Dataset bad;
    bad.spawners = {{"nope", 2001, 10.0, 0.2}};
    CHECK_THROWS_AS(index_dataset(bad, model), ValidationError);
    bad.spawners = {{"s1", 1990, 10.0, 0.2}};
    CHECK_THROWS_AS(index_dataset(bad, model), ValidationError);
    Dataset gap = fx.data;
    gap.catches.pop_back();
    CHECK_THROWS_AS(ObservationModel::effort_table(gap, fx.fisheries, 2000, 3), ValidationError);
    TagCohort over{"x", 2000, 2, "reared", {{"off", 2001, 3}}};
    CHECK_THROWS_AS(over.validate(), ValidationError);
}
