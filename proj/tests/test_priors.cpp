#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/math/distributions/beta.hpp>
#include <cmath>
#include <random>

#include "salmon/errors.hpp"
#include "salmon/priors.hpp"

using namespace salmon;
using namespace salmon::priors;

namespace {

std::vector<ExternalSRDataset> simulate_external(std::mt19937_64& rng, std::size_t n_stocks, std::size_t n_obs,
                                                 const SRHyperDraw& truth, double obs_sd) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(std::log(0.05), std::log(20.0));
    std::vector<ExternalSRDataset> out;
    for (std::size_t j = 0; j < n_stocks; ++j) {
        const double z1 = z(rng), z2 = z(rng);
        const double la = truth.mean[0] + truth.sd[0] * z1;
        const double lb = truth.mean[1] + truth.sd[1] * (truth.corr * z1 + std::sqrt(1 - truth.corr * truth.corr) * z2);
        const double alpha = std::exp(la), beta = std::exp(lb);
        ExternalSRDataset d;
        d.stock = "ext" + std::to_string(j);
        for (std::size_t k = 0; k < n_obs; ++k) {
            // eggs spanning both sides of the asymptote: beta*O/alpha in (0.05, 20)
            const double o = std::exp(u(rng)) * alpha / beta;
            const double r = o / (alpha + beta * o) * std::exp(obs_sd * z(rng) - obs_sd * obs_sd / 2);
            d.pairs.push_back({o, r});
        }
        out.push_back(d);
    }
    return out;
}

}  // namespace

TEST_CASE("fit_quantile_prior") {
    const auto p = fit_quantile_prior({"s", {{0.5, 1000.0}, {0.975, 2718.3}}});
    CHECK(p.mu == doctest::Approx(std::log(1000.0)).epsilon(1e-12));
    CHECK(p.sd == doctest::Approx(0.5102168676577289).epsilon(1e-9));

    // symmetric in log space around the median
    const auto sym = fit_quantile_prior({"s", {{0.1, 1000.0 / 3.0}, {0.5, 1000.0}, {0.9, 3000.0}}});
    CHECK(sym.mu == doctest::Approx(std::log(1000.0)).epsilon(1e-12));

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 200; ++k) {
        const LognormalPrior truth{2.0 + 10.0 * u(rng), 0.05 + 2.0 * u(rng)};
        ExpertQuantiles e{"s", {}};
        for (double prob : {0.05, 0.25, 0.5, 0.8, 0.99}) e.pairs.push_back({prob, truth.quantile(prob)});
        const auto back = fit_quantile_prior(e);
        CHECK(std::abs(back.mu - truth.mu) < 1e-9);
        CHECK(std::abs(back.sd - truth.sd) < 1e-9);
    }

    CHECK_THROWS_AS(fit_quantile_prior({"s", {{0.5, 1000.0}}}), ValidationError);
    CHECK_THROWS_AS(fit_quantile_prior({"s", {{0.5, 1000.0}, {0.9, 900.0}}}), ValidationError);
    CHECK_THROWS_AS(fit_quantile_prior({"s", {{0.5, 1000.0}, {0.4, 2000.0}}}), ValidationError);
    CHECK_THROWS_AS(fit_quantile_prior({"s", {{0.0, 1000.0}, {0.4, 2000.0}}}), ValidationError);
}

TEST_CASE("fit_m74_series conjugate update") {
    const std::vector<M74Observation> obs{{2001, 10, 0}, {2002, 10, 10}, {2004, 0, 0}};
    const auto post = fit_m74_series(obs, 2000, 5);
    REQUIRE(post.size() == 5);
    CHECK(post[0].year == 2000);
    CHECK(post[0].survival.a == 1.0);
    CHECK(post[0].survival.b == 1.0);
    CHECK(post[1].mortality.a == 1.0);
    CHECK(post[1].mortality.b == 11.0);
    CHECK(post[1].mortality.mean() == doctest::Approx(1.0 / 12.0).epsilon(1e-15));
    CHECK(post[2].survival.mean() == doctest::Approx(1.0 / 12.0).epsilon(1e-15));
    CHECK(post[4].mortality.a == 1.0);
    CHECK(post[4].mortality.b == 1.0);

    CHECK_THROWS_AS(fit_m74_series(std::vector<M74Observation>{{2000, 5, 6}}, 2000, 1), ValidationError);
    CHECK_THROWS_AS(fit_m74_series(std::vector<M74Observation>{{2000, 5, 1}, {2000, 5, 1}}, 2000, 1),
                    ValidationError);
    CHECK_THROWS_AS(fit_m74_series(std::vector<M74Observation>{{1999, 5, 1}}, 2000, 1), ValidationError);

    // closed-form Beta-binomial posterior density
    std::mt19937_64 rng(2);
    for (int k = 0; k < 100; ++k) {
        const long n = static_cast<long>(rng() % 50), y = n == 0 ? 0 : static_cast<long>(rng() % (n + 1));
        const auto p = fit_m74_series(std::vector<M74Observation>{{0, n, y}}, 0, 1)[0];
        const boost::math::beta_distribution<double> ref(1.0 + n - y, 1.0 + y);
        for (double x : {0.1, 0.37, 0.5, 0.9})
            CHECK(std::exp(p.survival.log_density(x)) == doctest::Approx(boost::math::pdf(ref, x)).epsilon(1e-10));
    }
}

TEST_CASE("Beta sampling and M74 predictive") {
    std::mt19937_64 rng(3);
    const BetaParams b{3.0, 7.0};
    double s = 0.0, s2 = 0.0;
    const int n = 100000;
    for (int k = 0; k < n; ++k) {
        const double x = b.sample(rng);
        s += x;
        s2 += x * x;
    }
    const double m = s / n, v = s2 / n - m * m;
    CHECK(m == doctest::Approx(b.mean()).epsilon(0.01));
    CHECK(v == doctest::Approx(b.variance()).epsilon(0.03));

    const auto fitted = fit_m74_series(std::vector<M74Observation>{{0, 30, 3}, {1, 30, 15}}, 0, 3);
    double sum = 0.0;
    for (int k = 0; k < n; ++k) sum += sample_m74_predictive(fitted, rng);
    const double expected = 0.5 * (fitted[0].survival.mean() + fitted[1].survival.mean());
    CHECK(sum / n == doctest::Approx(expected).epsilon(0.01));
}

TEST_CASE("fit_sr_hyperprior input validation") {
    SRHyperpriorSettings s;
    CHECK_THROWS_AS(fit_sr_hyperprior({}, s), ValidationError);
    std::vector<ExternalSRDataset> one{{"a", {{1e5, 1e3}, {2e5, 1.5e3}}}};
    CHECK_THROWS_AS(fit_sr_hyperprior(one, s), ValidationError);
    std::vector<ExternalSRDataset> bad{{"a", {{1e5, 1e3}, {2e5, 1.5e3}}}, {"b", {{1e5, -1.0}, {2e5, 1.5e3}}}};
    CHECK_THROWS_AS(fit_sr_hyperprior(bad, s), ValidationError);
}

TEST_CASE("fit_sr_hyperprior recovers simulated hyper-parameters") {
    std::mt19937_64 rng(17);
    const SRHyperDraw truth{{std::log(100.0), std::log(1e-5)}, {0.3, 0.3}, 0.3};
    const auto data = simulate_external(rng, 8, 20, truth, 0.3);
    SRHyperpriorSettings s;
    s.seed = 5;
    const auto fit = fit_sr_hyperprior(data, s);
    CHECK(fit.diagnostics.passed());

    double m = 0.0, m2 = 0.0;
    for (const auto& h : fit.hyper_draws) {
        m += h.mean[1];
        m2 += h.mean[1] * h.mean[1];
    }
    m /= fit.hyper_draws.size();
    const double post_sd = std::sqrt(m2 / fit.hyper_draws.size() - m * m);
    CHECK(std::abs(fit.predictive.mean[1] - truth.mean[1]) < 3.0 * post_sd);
    CHECK(std::abs(fit.predictive.mean[0] - truth.mean[0]) < 1.0);

    // law of large numbers on the predictive sampler against the moment summary
    std::mt19937_64 prng(8);
    const int n = 100000;
    std::array<double, 2> s1{0, 0}, s2{0, 0};
    for (int k = 0; k < n; ++k) {
        const auto d = fit.sample(prng);
        for (int c = 0; c < 2; ++c) {
            s1[c] += d[c];
            s2[c] += d[c] * d[c];
        }
    }
    for (int c = 0; c < 2; ++c) {
        const double mean = s1[c] / n, var = s2[c] / n - mean * mean;
        CHECK(mean == doctest::Approx(fit.predictive.mean[c]).epsilon(0.02));
        CHECK(var == doctest::Approx(fit.predictive.sd[c] * fit.predictive.sd[c]).epsilon(0.02));
    }
    CHECK(fit.predictive.draws.size() == s.n_predictive);
}

TEST_CASE("fit_sr_hyperprior symmetry") {
    std::mt19937_64 rng(23);
    const SRHyperDraw truth{{std::log(100.0), std::log(1e-5)}, {0.4, 0.4}, 0.0};
    auto data = simulate_external(rng, 4, 15, truth, 0.25);
    data[1].pairs = data[0].pairs;  // duplicate stock
    SRHyperpriorSettings s;
    s.seed = 9;
    const auto fit = fit_sr_hyperprior(data, s);
    // identical data give matching stock posteriors up to Monte Carlo error
    CHECK(std::abs(fit.stock_means[0][0] - fit.stock_means[1][0]) < 0.1);
    CHECK(std::abs(fit.stock_means[0][1] - fit.stock_means[1][1]) < 0.1);
    // the predictive mean is a compromise between the stocks
    for (int c = 0; c < 2; ++c) {
        double lo = 1e300, hi = -1e300;
        for (const auto& sm : fit.stock_means) {
            lo = std::min(lo, sm[c]);
            hi = std::max(hi, sm[c]);
        }
        CHECK(fit.predictive.mean[c] > lo);
        CHECK(fit.predictive.mean[c] < hi);
    }
}
