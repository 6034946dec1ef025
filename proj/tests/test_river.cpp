#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "salmon/errors.hpp"
#include "salmon/river.hpp"

using namespace salmon;
using namespace salmon::river;

namespace {

double median(std::vector<double> x) {
    std::sort(x.begin(), x.end());
    return x[x.size() / 2];
}

double log_sd(const std::vector<double>& x) {
    double m = 0.0;
    for (double v : x) m += std::log(v);
    m /= x.size();
    double s = 0.0;
    for (double v : x) s += (std::log(v) - m) * (std::log(v) - m);
    return std::sqrt(s / (x.size() - 1));
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return d;
}

SmoltPosterior lognormal_posterior(const std::string& river, int year, double mu, double sd, std::mt19937_64& rng,
                                   std::size_t n = 4000) {
    SmoltPosterior p{river, year, {}, {}};
    std::normal_distribution<double> z(0.0, 1.0);
    for (std::size_t k = 0; k < n; ++k) p.draws.push_back(std::exp(mu + sd * z(rng)));
    return p;
}

struct Synthetic {
    std::vector<RiverInfo> rivers;
    std::vector<ElectrofishingSite> sites;
    std::vector<SmoltPosterior> traps;
    std::vector<std::vector<double>> log_smolts;  // [river][year], smolt years 1..n_years
};

// Rivers with survival drawn from N(mu, tau); parr surveyed in years 0..n-1, smolts in 1..n.
Synthetic synthetic_rivers(std::mt19937_64& rng, std::size_t n_rivers, std::size_t n_years,
                           std::size_t n_trap_rivers, double mu, double tau, double site_sd, double trap_sd) {
    std::normal_distribution<double> z(0.0, 1.0);
    Synthetic s;
    s.log_smolts.assign(n_rivers, {});
    for (std::size_t r = 0; r < n_rivers; ++r) {
        const std::string id = "r" + std::to_string(r);
        const double area = 1e6 * (1.0 + r);
        s.rivers.push_back({id, area});
        const double log_surv = mu + tau * z(rng);
        for (std::size_t t = 0; t < n_years; ++t) {
            const double log_density = std::log(20.0) + 0.5 * z(rng);
            for (int k = 0; k < 6; ++k) {
                const double site_area = 100.0 + 200.0 * (k % 3);
                const double w = site_area / 200.0;
                s.sites.push_back({id, static_cast<int>(t), "s" + std::to_string(k), site_area,
                                   std::exp(log_density + site_sd / std::sqrt(w) * z(rng))});
            }
            const double log_smolt = log_density + std::log(area / 100.0) + log_surv + 0.1 * z(rng);
            s.log_smolts[r].push_back(log_smolt);
            if (r < n_trap_rivers)
                s.traps.push_back(lognormal_posterior(id, static_cast<int>(t) + 1, log_smolt + trap_sd * z(rng),
                                                      trap_sd, rng, 1000));
        }
    }
    return s;
}

}  // namespace

TEST_CASE("markrecapture_posterior near the Petersen estimate") {
    const SmoltTrapData d{"tornio", 2000, 100, 50, 10};
    const auto post = markrecapture_posterior(d, {}, 20000, 1);
    CHECK(post.draws.size() == 20000);
    CHECK(std::abs(median(post.draws) / 500.0 - 1.0) < 0.15);
    CHECK(post.warning.empty());
    for (double u : post.draws) CHECK(u >= 140.0);

    RunSizePrior flat;
    flat.kind = RunSizePrior::Kind::uniform;
    CHECK(std::abs(median(markrecapture_posterior(d, flat, 20000, 1).draws) / 500.0 - 1.0) < 0.15);
}

TEST_CASE("markrecapture_posterior degenerate and truncated cases") {
    const auto census = markrecapture_posterior({"a", 1, 100, 100, 100}, {}, 2000, 2);
    CHECK(median(census.draws) == 100.0);

    RunSizePrior box;
    box.kind = RunSizePrior::Kind::uniform;
    box.lower = 400.0;
    box.upper = 600.0;
    const auto trunc = markrecapture_posterior({"a", 1, 100, 50, 10}, box, 5000, 3);
    for (double u : trunc.draws) {
        CHECK(u >= 400.0);
        CHECK(u <= 600.0);
    }

    const auto none = markrecapture_posterior({"a", 1, 100, 50, 0}, {}, 2000, 4);
    CHECK_FALSE(none.warning.empty());
    CHECK(median(none.draws) > 5000.0);

    CHECK_THROWS_AS(markrecapture_posterior({"a", 1, 10, 5, 6}, {}, 10, 1), ValidationError);
    CHECK_THROWS_AS(markrecapture_posterior({"a", 1, 0, 5, 0}, {}, 10, 1), ValidationError);
}

TEST_CASE("markrecapture_posterior on a large run uses the coarse grid") {
    // m = 500, capture probability about 0.04, run of 500000
    const auto post = markrecapture_posterior({"big", 1, 500, 20000, 20}, {}, 20000, 5);
    CHECK(std::abs(median(post.draws) / 485169.0 - 1.0) < 0.02);
    const auto again = markrecapture_posterior({"big", 1, 500, 20000, 20}, {}, 20000, 5);
    CHECK(again.draws == post.draws);
}

TEST_CASE("approximate_smolt_likelihood") {
    std::mt19937_64 rng(6);
    const auto p = lognormal_posterior("a", 1, 3.0, 0.5, rng, 100000);
    const auto a = approximate_smolt_likelihood(p);
    CHECK(a.mu == doctest::Approx(3.0).epsilon(0.01));
    CHECK(a.sd == doctest::Approx(0.5).epsilon(0.01));

    auto scaled = p;
    for (auto& d : scaled.draws) d *= 10.0;
    const auto b = approximate_smolt_likelihood(scaled);
    CHECK(b.mu == doctest::Approx(a.mu + std::log(10.0)).epsilon(1e-12));
    CHECK(b.sd == doctest::Approx(a.sd).epsilon(1e-9));

    SmoltPosterior flat{"a", 1, std::vector<double>(200, 42.0), {}};
    const auto c = approximate_smolt_likelihood(flat);
    CHECK(c.mu == doctest::Approx(std::log(42.0)).epsilon(1e-14));
    CHECK(c.sd == 0.01);

    CHECK_THROWS_AS(approximate_smolt_likelihood({"a", 1, std::vector<double>(50, 1.0), {}}), ValidationError);
    auto bad = flat;
    bad.draws[3] = 0.0;
    CHECK_THROWS_AS(approximate_smolt_likelihood(bad), ValidationError);
}

TEST_CASE("parr_index") {
    const std::vector<ElectrofishingSite> s{{"a", 1, "x", 100.0, 10.0}, {"a", 1, "y", 300.0, 30.0}};
    CHECK(parr_index(s, 1e6, 0.1) == doctest::Approx(25.0 * 1e4).epsilon(1e-14));
    const std::vector<ElectrofishingSite> z{{"a", 1, "x", 100.0, 0.0}};
    CHECK(parr_index(z, 100.0, 0.1) == doctest::Approx(0.1).epsilon(1e-14));
}

TEST_CASE("fit_river_model recovers survival of a noiseless single river") {
    std::vector<RiverInfo> rivers{{"solo", 1e6}};
    std::vector<ElectrofishingSite> sites;
    std::vector<SmoltPosterior> traps;
    std::mt19937_64 rng(7);
    for (int t = 0; t < 10; ++t) {
        const double density = 10.0 + 3.0 * t;
        for (int k = 0; k < 4; ++k) sites.push_back({"solo", t, "s" + std::to_string(k), 200.0, density});
        const double smolts = density * 1e6 / 100.0 * 0.2;
        traps.push_back(lognormal_posterior("solo", t + 1, std::log(smolts), 0.1, rng, 1000));
    }
    RiverModelSettings s;
    s.seed = 3;
    const auto fit = fit_river_model(rivers, sites, traps, s);
    const auto& surv = fit.survival_draws[0];
    double m = 0.0, m2 = 0.0;
    for (double v : surv) {
        m += v;
        m2 += v * v;
    }
    m /= surv.size();
    const double sd = std::sqrt(m2 / surv.size() - m * m);
    CHECK(std::abs(m - 0.2) < 3.0 * sd);
    CHECK(fit.find("solo", 10) != nullptr);
    CHECK(fit.find("solo", 11) == nullptr);
    CHECK(fit.find("solo", 0) == nullptr);
}

TEST_CASE("fit_river_model treats identical rivers identically") {
    std::mt19937_64 rng(8);
    auto syn = synthetic_rivers(rng, 1, 8, 1, std::log(0.2), 0.0, 0.2, 0.15);
    std::vector<RiverInfo> rivers{{"a", 1e6}, {"b", 1e6}};
    std::vector<ElectrofishingSite> sites;
    std::vector<SmoltPosterior> traps;
    for (const std::string id : {"a", "b"}) {
        for (auto s : syn.sites) {
            s.river = id;
            sites.push_back(s);
        }
        for (auto p : syn.traps) {
            p.river = id;
            traps.push_back(p);
        }
    }
    RiverModelSettings s;
    s.seed = 4;
    s.n_iter = 20000;
    s.thin = 2;
    const auto fit = fit_river_model(rivers, sites, traps, s);
    REQUIRE(fit.survival_draws[0].size() == 40000);
    CHECK(ks_distance(fit.survival_draws[0], fit.survival_draws[1]) < 0.1);
    for (int year = 1; year <= 8; ++year)
        CHECK(ks_distance(fit.find("a", year)->draws, fit.find("b", year)->draws) < 0.1);
}

TEST_CASE("fit_river_model predictive for a river without trap data") {
    const double mu = std::log(0.2);
    int covered = 0;
    const int reps = 50;
    for (int rep = 0; rep < reps; ++rep) {
        std::mt19937_64 rng(100 + rep);
        auto syn = synthetic_rivers(rng, 4, 6, 3, mu, 0.2, 0.2, 0.15);
        RiverModelSettings s;
        s.seed = 10 + rep;
        s.n_warmup = 1000;
        s.n_iter = 2000;
        const auto fit = fit_river_model(syn.rivers, syn.sites, syn.traps, s);
        // value implied by the population mean survival and the observed parr index of the no-trap river
        std::vector<ElectrofishingSite> year0;
        for (const auto& site : syn.sites)
            if (site.river == "r3" && site.year == 2) year0.push_back(site);
        double lw = 0.0, ly = 0.0;
        for (const auto& site : year0) {
            lw += site.area;
            ly += site.area * std::log(site.density);
        }
        const double implied = ly / lw + std::log(syn.rivers[3].habitat_area / 100.0) + mu;
        auto draws = fit.find("r3", 3)->draws;
        std::sort(draws.begin(), draws.end());
        const double lo = std::log(draws[draws.size() / 20]), hi = std::log(draws[draws.size() * 19 / 20]);
        if (implied >= lo && implied <= hi) ++covered;
    }
    CHECK(covered >= 45);
}

TEST_CASE("hierarchical pooling shrinks the posterior of a weakly observed river") {
    std::mt19937_64 rng(9);
    auto syn = synthetic_rivers(rng, 5, 8, 5, std::log(0.2), 0.15, 0.2, 0.1);
    // river r4 keeps a single, very noisy trap year
    std::vector<SmoltPosterior> traps;
    for (const auto& p : syn.traps) {
        if (p.river != "r4") traps.push_back(p);
        else if (p.year == 4) traps.push_back(lognormal_posterior("r4", 4, syn.log_smolts[4][3], 1.5, rng, 2000));
    }
    RiverModelSettings s;
    s.seed = 5;
    const auto hier = fit_river_model(syn.rivers, syn.sites, traps, s);
    s.pooling = Pooling::independent;
    const auto indep = fit_river_model(syn.rivers, syn.sites, traps, s);
    CHECK(log_sd(hier.survival_draws[4]) < log_sd(indep.survival_draws[4]));
    int smaller = 0;
    for (int year = 1; year <= 8; ++year)
        if (log_sd(hier.find("r4", year)->draws) < log_sd(indep.find("r4", year)->draws)) ++smaller;
    CHECK(smaller == 8);
}

TEST_CASE("fit_river_model validation") {
    std::vector<RiverInfo> rivers{{"a", 1e6}};
    std::vector<ElectrofishingSite> sites{{"a", 0, "s", 100.0, 10.0}, {"a", 0, "t", 100.0, 12.0}};
    std::mt19937_64 rng(1);
    std::vector<SmoltPosterior> far{lognormal_posterior("a", 5, 8.0, 0.2, rng, 200)};
    RiverModelSettings s;
    CHECK_THROWS_AS(fit_river_model(rivers, sites, far, s), ValidationError);
    CHECK_THROWS_AS(fit_river_model(rivers, sites, {}, s), ValidationError);
    std::vector<SmoltPosterior> unknown{lognormal_posterior("zz", 1, 8.0, 0.2, rng, 200)};
    CHECK_THROWS_AS(fit_river_model(rivers, sites, unknown, s), ValidationError);
}
