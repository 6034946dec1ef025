#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "salmon/dynamics.hpp"
#include "salmon/errors.hpp"

using namespace salmon;
using namespace salmon::dynamics;

TEST_CASE("bh_recruitment") {
    CHECK(bh_recruitment(0.0, 2000.0, 0.0005) == 0.0);
    CHECK(bh_recruitment(1e6, 2000.0, 0.0005) == doctest::Approx(400.0).epsilon(1e-14));
    CHECK(bh_recruitment(1e30, 2000.0, 0.0005) == doctest::Approx(2000.0).epsilon(1e-9));
    // low-density slope 1/alpha within 1% when beta*O < 0.01*alpha
    const double alpha = 150.0, beta = 1e-5;
    const double O = 0.009 * alpha / beta;
    CHECK(std::abs(bh_recruitment(O, alpha, beta) / (O / alpha) - 1.0) < 0.01);
    CHECK_THROWS_AS(bh_recruitment(-1.0, 1.0, 1.0), DomainError);
    CHECK_THROWS_AS(bh_recruitment(NAN, 1.0, 1.0), DomainError);
    CHECK_THROWS_AS(bh_recruitment(1.0, 0.0, 1.0), DomainError);
}

TEST_CASE("bh_recruitment is increasing and bounded") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 1000; ++k) {
        const double alpha = 10.0 + 1000.0 * u(rng), beta = 1e-6 + 1e-3 * u(rng);
        const double o1 = 1e7 * u(rng), o2 = o1 * (1.0 + u(rng)) + 1.0;
        const double r1 = bh_recruitment(o1, alpha, beta), r2 = bh_recruitment(o2, alpha, beta);
        CHECK(r2 > r1);
        CHECK(r2 < 1.0 / beta);
    }
}

TEST_CASE("survival_kernel") {
    CHECK(survival_kernel(1000.0, 0.0, 0.0, 1.0) == 1000.0);
    CHECK(survival_kernel(1000.0, 0.2, 0.1, 1.0) == doctest::Approx(740.8182206817179).epsilon(1e-14));
    CHECK(survival_kernel(0.0, 0.7, 0.4, 1.3) == 0.0);
    CHECK(survival_kernel(10.0, 0.01, 0.0, 1.0) < 10.0);
    CHECK_THROWS_AS(survival_kernel(1.0, -0.1, 0.0, 1.0), DomainError);
    CHECK_THROWS_AS(survival_kernel(1.0, 0.0, -0.1, 1.0), DomainError);
    CHECK_THROWS_AS(survival_kernel(1.0, 0.0, 0.0, 0.0), DomainError);
}

TEST_CASE("spawners_from_sea") {
    CHECK(spawners_from_sea(500.0, 1.0, 0.0, 0.0, 1.0) == 500.0);
    CHECK(spawners_from_sea(500.0, 0.0, 0.3, 0.1, 1.0) == 0.0);
    CHECK(spawners_from_sea(1000.0, 0.4, 0.1, 0.1, 1.0) == doctest::Approx(327.49230123119276).epsilon(1e-14));
    CHECK_THROWS_AS(spawners_from_sea(1.0, 1.5, 0.0, 0.0, 1.0), DomainError);
}

TEST_CASE("eggs_from_spawners") {
    const std::vector<double> f{8000.0};
    CHECK(eggs_from_spawners(std::vector<double>{0.0}, f, 0.5) == 0.0);
    CHECK(eggs_from_spawners(std::vector<double>{100.0}, f, 0.5) == 400000.0);
    const std::vector<double> s{10.0, 20.0, 5.0}, s2{20.0, 40.0, 10.0}, fec{3000.0, 9000.0, 12000.0};
    CHECK(eggs_from_spawners(s2, fec, 0.45) == doctest::Approx(2.0 * eggs_from_spawners(s, fec, 0.45)).epsilon(1e-15));
    CHECK_THROWS_AS(eggs_from_spawners(s, std::vector<double>{1.0, -1.0, 1.0}, 0.5), DomainError);
}

TEST_CASE("depletion_ratio") {
    CHECK(depletion_ratio(1500.0, 1500.0) == 1.0);
    CHECK(depletion_ratio(0.0, 1500.0) == 0.0);
    CHECK(depletion_ratio(600.0, 1500.0) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(depletion_ratio(3000.0, 1500.0) == 2.0);
    CHECK_THROWS_AS(depletion_ratio(1.0, 0.0), DomainError);
}

TEST_CASE("process error has mean one") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    double s = 0.0;
    const int reps = 200000;
    for (int k = 0; k < reps; ++k) s += process_error(0.4, n(rng));
    CHECK(s / reps == doctest::Approx(1.0).epsilon(0.01));
    CHECK(process_error(0.0, 3.0) == 1.0);
}

TEST_CASE("step_population conserves fish without mortality") {
    AgeStructure ages{4, 2};
    StockParams sp{100.0, 1e-5, {3000, 8000, 10000, 12000}, 0.0};  // no eggs: isolates one cohort
    MaturationSchedule mat{{0.2, 0.5, 0.7, 1.0}};
    YearRates rates{std::vector<double>(5, 0.0), std::vector<double>(5, 0.0)};
    ProcessNoise noise;
    PopulationState st;
    st.stocks.push_back({{1000.0, 0.0}, {0.0, 0.0, 0.0, 0.0}});
    std::vector<StepInnovations> z{StepInnovations::zeros(ages)};
    double matured = 0.0;
    const std::vector<StockParams> params{sp};
    for (int t = 0; t < 6; ++t) {
        auto res = step_population(st, params, ages, mat, rates, 1.0, noise, z, 10);
        for (double s : res.spawners[0]) matured += s;
        st = res.next;
        double at_sea = 0.0;
        for (double n : st.stocks[0].sea) at_sea += n;
        // cohort of 1000 smolts in year 0: at sea plus matured equals the initial count
        if (t >= 0 && t < 5) CHECK(std::abs(at_sea + matured - 1000.0) <= 1e-9 * 1000.0);
    }
    CHECK(std::abs(matured - 1000.0) <= 1e-9 * 1000.0);
}

TEST_CASE("step_population errors") {
    AgeStructure ages{2, 1};
    std::vector<StockParams> params{{100.0, 1e-5, {3000, 8000}, 0.5}};
    MaturationSchedule mat{{0.3, 1.0}};
    YearRates rates{std::vector<double>(3, 0.1), std::vector<double>(3, 0.1)};
    PopulationState st;
    st.stocks.push_back({{10.0}, {5.0, 5.0}});
    std::vector<StepInnovations> z{StepInnovations::zeros(ages)};
    CHECK_THROWS_AS(step_population(st, params, ages, mat, rates, 1.0, {}, z, 0), ValidationError);
    std::vector<StepInnovations> z2(2, StepInnovations::zeros(ages));
    CHECK_THROWS_AS(step_population(st, params, ages, mat, rates, 1.0, {}, z2, 5), ValidationError);
    YearRates bad{std::vector<double>(2, 0.1), std::vector<double>(2, 0.1)};
    CHECK_THROWS_AS(step_population(st, params, ages, mat, bad, 1.0, {}, z, 5), ValidationError);
}

TEST_CASE("trajectory matches the stepwise oracle, is nonnegative and deterministic") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 50; ++rep) {
        auto problem = oracle::random_problem(rng, 3, 20);
        const Trajectory traj = simulate_trajectory(problem.initial, problem.stocks, problem.ages, problem.maturation,
                                                    problem.rates, problem.m74, problem.noise, problem.innovations);
        const auto naive = oracle::naive_trajectory(problem);
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t t = 0; t < 20; ++t) {
                CHECK(oracle::rel_close(traj.R(i, t), naive.R[i][t], 1e-12));
                CHECK(oracle::rel_close(traj.O(i, t), naive.O[i][t], 1e-12));
                CHECK(traj.R(i, t) >= 0.0);
                for (int a = 1; a <= problem.ages.max_sea_age; ++a) {
                    CHECK(oracle::rel_close(traj.N(i, t, a), naive.N[i][t][a - 1], 1e-12));
                    CHECK(oracle::rel_close(traj.S(i, t, a), naive.S[i][t][a - 1], 1e-12));
                    CHECK(traj.S(i, t, a) >= 0.0);
                    CHECK(traj.S(i, t, a) <= traj.N(i, t, a));
                }
            }
        }
        const Trajectory again = simulate_trajectory(problem.initial, problem.stocks, problem.ages,
                                                     problem.maturation, problem.rates, problem.m74, problem.noise,
                                                     problem.innovations);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t t = 0; t < 20; ++t) CHECK(again.O(i, t) == traj.O(i, t));
    }
}

TEST_CASE("identical stocks with identical noise follow identical trajectories") {
    std::mt19937_64 rng(5);
    auto problem = oracle::random_problem(rng, 2, 15);
    problem.stocks[1] = problem.stocks[0];
    problem.initial.stocks[1] = problem.initial.stocks[0];
    for (auto& year : problem.innovations) year[1] = year[0];
    const Trajectory traj = simulate_trajectory(problem.initial, problem.stocks, problem.ages, problem.maturation,
                                                problem.rates, problem.m74, problem.noise, problem.innovations);
    for (std::size_t t = 0; t < 15; ++t) {
        CHECK(traj.R(0, t) == traj.R(1, t));
        CHECK(traj.O(0, t) == traj.O(1, t));
    }
}

TEST_CASE("reconstruct_trajectory from given smolts reproduces the simulated history") {
    std::mt19937_64 rng(19);
    for (int rep = 0; rep < 20; ++rep) {
        auto p = oracle::random_problem(rng, 3, 12);
        const Trajectory traj = simulate_trajectory(p.initial, p.stocks, p.ages, p.maturation, p.rates, p.m74,
                                                    p.noise, p.innovations);
        std::vector<std::vector<double>> sea0, smolts(3);
        std::vector<std::vector<std::vector<double>>> zsea(12), zspawn(12);
        for (std::size_t i = 0; i < 3; ++i) {
            sea0.push_back(p.initial.stocks[i].sea);
            for (std::size_t t = 0; t < 12 + static_cast<std::size_t>(p.ages.smolt_delay); ++t)
                smolts[i].push_back(traj.R(i, t));
        }
        for (std::size_t t = 0; t < 12; ++t)
            for (std::size_t i = 0; i < 3; ++i) {
                zsea[t].push_back(p.innovations[t][i].sea);
                zspawn[t].push_back(p.innovations[t][i].spawn);
            }
        const Trajectory back = reconstruct_trajectory(sea0, smolts, p.stocks, p.ages, p.maturation, p.rates, p.m74,
                                                       p.noise, zsea, zspawn);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t t = 0; t < 12; ++t) {
                CHECK(back.O(i, t) == traj.O(i, t));
                for (int a = 1; a <= p.ages.max_sea_age; ++a) {
                    CHECK(back.N(i, t + 1, a) == traj.N(i, t + 1, a));
                    CHECK(back.S(i, t, a) == traj.S(i, t, a));
                }
            }
    }
}
