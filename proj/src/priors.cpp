#include "salmon/priors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "salmon/errors.hpp"
#include "salmon/parameters.hpp"

namespace salmon::priors {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double normal_lpdf(double x, double mu, double sd) {
    const double z = (x - mu) / sd;
    return -0.5 * z * z - std::log(sd) - kLogSqrt2Pi;
}

double standard_normal_quantile(double p) {
    return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), p);
}

}  // namespace

void ExpertQuantiles::validate() const {
    if (pairs.size() < 2) throw ValidationError("expert quantiles for '" + stock + "' need at least 2 pairs");
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto& q = pairs[k];
        if (!(q.prob > 0.0 && q.prob < 1.0))
            throw ValidationError("expert quantile probability outside (0,1) for '" + stock + "'");
        if (!(q.value > 0.0) || !std::isfinite(q.value))
            throw ValidationError("expert quantile value must be positive for '" + stock + "'");
        if (k > 0 && !(q.prob > pairs[k - 1].prob && q.value > pairs[k - 1].value))
            throw ValidationError("expert quantiles for '" + stock + "' are not strictly increasing");
    }
}

double LognormalPrior::quantile(double prob) const {
    return std::exp(mu + sd * standard_normal_quantile(prob));
}

double LognormalPrior::log_density_of_log(double log_x) const { return normal_lpdf(log_x, mu, sd); }

LognormalPrior fit_quantile_prior(const ExpertQuantiles& expert) {
    expert.validate();
    // log v_k = mu + sd * z_k, ordinary least squares in (mu, sd)
    const std::size_t n = expert.pairs.size();
    std::vector<double> z(n), y(n);
    for (std::size_t k = 0; k < n; ++k) {
        z[k] = standard_normal_quantile(expert.pairs[k].prob);
        y[k] = std::log(expert.pairs[k].value);
    }
    const double zbar = std::accumulate(z.begin(), z.end(), 0.0) / n;
    const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double szz = 0.0, szy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        szz += (z[k] - zbar) * (z[k] - zbar);
        szy += (z[k] - zbar) * (y[k] - ybar);
    }
    const double sd = szy / szz;
    if (!(sd > 0.0)) throw ValidationError("expert quantiles for '" + expert.stock + "' imply a nonpositive spread");
    return {ybar - sd * zbar, sd};
}

void ExternalSRDataset::validate() const {
    if (pairs.size() < 2) throw ValidationError("external stock '" + stock + "' needs at least 2 observations");
    for (const auto& p : pairs)
        if (!(p.eggs > 0.0 && p.recruits > 0.0) || !std::isfinite(p.eggs) || !std::isfinite(p.recruits))
            throw ValidationError("external stock '" + stock + "' has nonpositive values");
}

namespace {

struct SRLayout {
    ParameterRegistry reg;
    std::size_t mean = 0, sd = 0, corr = 0, obs = 0, la = 0, lb = 0;
};

SRLayout sr_layout(std::span<const ExternalSRDataset> stocks) {
    SRLayout l;
    std::vector<std::string> ids;
    for (const auto& s : stocks) ids.push_back(s.stock);
    l.mean = l.reg.add("pop_mean", {"log_alpha", "log_beta"}, Transform::identity);
    l.sd = l.reg.add("pop_sd", {"log_alpha", "log_beta"}, Transform::log);
    l.corr = l.reg.add("pop_corr", {""}, Transform::tanh);
    l.obs = l.reg.add("obs_sd", {""}, Transform::log);
    l.la = l.reg.add("log_alpha", ids, Transform::identity);
    l.lb = l.reg.add("log_beta", ids, Transform::identity);
    l.reg.add_block({l.mean, l.mean + 1});
    l.reg.add_block({l.sd, l.sd + 1, l.corr});
    l.reg.add_block({l.obs});
    for (std::size_t j = 0; j < stocks.size(); ++j) l.reg.add_block({l.la + j, l.lb + j});
    l.reg.validate_blocks();
    return l;
}

double bvn_lpdf(double x, double y, const std::array<double, 2>& mean, const std::array<double, 2>& sd, double corr) {
    const double zx = (x - mean[0]) / sd[0], zy = (y - mean[1]) / sd[1];
    const double one_minus = 1.0 - corr * corr;
    return -(zx * zx - 2.0 * corr * zx * zy + zy * zy) / (2.0 * one_minus) - std::log(sd[0]) - std::log(sd[1]) -
           0.5 * std::log(one_minus) - 2.0 * kLogSqrt2Pi;
}

// Starting values from the linearized relation 1/R = alpha/O + beta.
std::array<double, 2> crude_sr_fit(const ExternalSRDataset& s) {
    const double n = static_cast<double>(s.pairs.size());
    double mx = 0.0, my = 0.0;
    for (const auto& p : s.pairs) {
        mx += 1.0 / p.eggs;
        my += 1.0 / p.recruits;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& p : s.pairs) {
        sxx += (1.0 / p.eggs - mx) * (1.0 / p.eggs - mx);
        sxy += (1.0 / p.eggs - mx) * (1.0 / p.recruits - my);
    }
    double alpha = sxx > 0.0 ? sxy / sxx : 0.0;
    double beta = my - alpha * mx;
    double max_r = 0.0;
    std::vector<double> ratio;
    for (const auto& p : s.pairs) {
        max_r = std::max(max_r, p.recruits);
        ratio.push_back(p.eggs / p.recruits);
    }
    std::sort(ratio.begin(), ratio.end());
    if (!(beta > 0.0)) beta = 1.0 / (1.5 * max_r);
    if (!(alpha > 0.0)) alpha = ratio.front();
    return {std::log(alpha), std::log(beta)};
}

SRHyperDraw hyper_from(std::span<const double> x, const SRLayout& l) {
    SRHyperDraw h;
    h.mean = {x[l.mean], x[l.mean + 1]};
    h.sd = {x[l.sd], x[l.sd + 1]};
    h.corr = x[l.corr];
    return h;
}

std::array<double, 2> draw_bvn(const SRHyperDraw& h, std::mt19937_64& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    const double z1 = z(rng), z2 = z(rng);
    return {h.mean[0] + h.sd[0] * z1, h.mean[1] + h.sd[1] * (h.corr * z1 + std::sqrt(1.0 - h.corr * h.corr) * z2)};
}

}  // namespace

std::array<double, 2> SRHyperpriorFit::sample(std::mt19937_64& rng) const {
    if (hyper_draws.empty()) throw ValidationError("SR hyperprior fit has no draws");
    std::uniform_int_distribution<std::size_t> pick(0, hyper_draws.size() - 1);
    return draw_bvn(hyper_draws[pick(rng)], rng);
}

SRHyperpriorFit fit_sr_hyperprior(std::span<const ExternalSRDataset> stocks, const SRHyperpriorSettings& settings) {
    if (stocks.size() < 2) throw ValidationError("SR hyperprior needs at least 2 external stocks");
    for (const auto& s : stocks) s.validate();
    const SRLayout layout = sr_layout(stocks);
    const auto& reg = layout.reg;
    const std::size_t J = stocks.size();

    std::vector<std::vector<double>> log_o(J), log_r(J);
    for (std::size_t j = 0; j < J; ++j)
        for (const auto& p : stocks[j].pairs) {
            log_o[j].push_back(std::log(p.eggs));
            log_r[j].push_back(std::log(p.recruits));
        }

    auto log_post = [&](std::span<const double> u) {
        thread_local std::vector<double> x;
        x.resize(u.size());
        reg.to_constrained(u, x);
        const SRHyperDraw h = hyper_from(x, layout);
        if (!(std::abs(h.corr) < 1.0)) return -std::numeric_limits<double>::infinity();
        double lp = 0.0;
        for (int k = 0; k < 2; ++k) {
            lp += normal_lpdf(h.mean[k], settings.mean_center[k], settings.mean_sd);
            // half-normal scale with log Jacobian
            lp += -0.5 * (h.sd[k] / settings.scale_sd) * (h.sd[k] / settings.scale_sd) + u[layout.sd + k];
        }
        lp += std::log1p(-h.corr * h.corr);  // uniform correlation through tanh
        const double sigma = x[layout.obs];
        lp += -0.5 * (sigma / settings.obs_sd_scale) * (sigma / settings.obs_sd_scale) + u[layout.obs];
        for (std::size_t j = 0; j < J; ++j) {
            const double la = x[layout.la + j], lb = x[layout.lb + j];
            lp += bvn_lpdf(la, lb, h.mean, h.sd, h.corr);
            const double alpha = std::exp(la), beta = std::exp(lb);
            for (std::size_t k = 0; k < log_o[j].size(); ++k) {
                const double o = std::exp(log_o[j][k]);
                const double mu = log_o[j][k] - std::log(alpha + beta * o) - 0.5 * sigma * sigma;
                lp += normal_lpdf(log_r[j][k], mu, sigma);
            }
        }
        return std::isnan(lp) ? -std::numeric_limits<double>::infinity() : lp;
    };

    std::vector<std::array<double, 2>> crude(J);
    for (std::size_t j = 0; j < J; ++j) crude[j] = crude_sr_fit(stocks[j]);
    std::array<double, 2> m{0.0, 0.0};
    for (const auto& c : crude) {
        m[0] += c[0] / J;
        m[1] += c[1] / J;
    }
    std::vector<std::vector<double>> inits;
    std::mt19937_64 init_rng(mcmc::chain_seed(settings.seed, 1000));
    std::normal_distribution<double> jitter(0.0, 0.1);
    for (std::size_t c = 0; c < settings.n_chains; ++c) {
        std::vector<double> x(reg.size());
        x[layout.mean] = m[0] + jitter(init_rng);
        x[layout.mean + 1] = m[1] + jitter(init_rng);
        x[layout.sd] = 0.5 * std::exp(jitter(init_rng));
        x[layout.sd + 1] = 0.5 * std::exp(jitter(init_rng));
        x[layout.corr] = 0.0;
        x[layout.obs] = 0.3 * std::exp(jitter(init_rng));
        for (std::size_t j = 0; j < J; ++j) {
            x[layout.la + j] = crude[j][0] + jitter(init_rng);
            x[layout.lb + j] = crude[j][1] + jitter(init_rng);
        }
        inits.push_back(reg.to_unconstrained(x));
    }

    mcmc::ChainSettings cs;
    cs.seed = settings.seed;
    cs.n_warmup = settings.n_warmup;
    cs.n_iter = settings.n_iter;
    cs.thin = settings.thin;
    cs.blocks = reg.blocks();

    SRHyperpriorFit fit;
    fit.names = reg.names();
    fit.chains = mcmc::run_chains(log_post, inits, cs, fit.names);
    std::vector<mcmc::DrawMatrix> mats;
    for (const auto& c : fit.chains) mats.push_back(c.draws);
    fit.diagnostics = mcmc::diagnostics(mats, fit.names, settings.rhat_threshold);
    if (!fit.diagnostics.passed()) {
        std::ostringstream msg;
        msg << "SR hyperprior did not converge (max R-hat " << fit.diagnostics.max_rhat() << "); flagged:";
        for (const auto& n : fit.diagnostics.flagged()) msg << ' ' << n;
        throw ConvergenceError(msg.str());
    }

    fit.stock_means.assign(J, {0.0, 0.0});
    std::size_t total = 0;
    for (const auto& c : fit.chains) {
        for (std::size_t r = 0; r < c.n_draws(); ++r) {
            const auto x = reg.to_constrained(c.draws.row(r));
            fit.hyper_draws.push_back(hyper_from(x, layout));
            for (std::size_t j = 0; j < J; ++j) {
                fit.stock_means[j][0] += x[layout.la + j];
                fit.stock_means[j][1] += x[layout.lb + j];
            }
            ++total;
        }
    }
    for (auto& sm : fit.stock_means) {
        sm[0] /= static_cast<double>(total);
        sm[1] /= static_cast<double>(total);
    }

    // Moments by total expectation and variance over the hyper draws.
    auto& pred = fit.predictive;
    double cov = 0.0;
    std::array<double, 2> var{0.0, 0.0};
    for (const auto& h : fit.hyper_draws) {
        pred.mean[0] += h.mean[0];
        pred.mean[1] += h.mean[1];
    }
    const double nd = static_cast<double>(fit.hyper_draws.size());
    pred.mean[0] /= nd;
    pred.mean[1] /= nd;
    for (const auto& h : fit.hyper_draws) {
        const double d0 = h.mean[0] - pred.mean[0], d1 = h.mean[1] - pred.mean[1];
        var[0] += h.sd[0] * h.sd[0] + d0 * d0;
        var[1] += h.sd[1] * h.sd[1] + d1 * d1;
        cov += h.corr * h.sd[0] * h.sd[1] + d0 * d1;
    }
    pred.sd = {std::sqrt(var[0] / nd), std::sqrt(var[1] / nd)};
    pred.corr = cov / nd / (pred.sd[0] * pred.sd[1]);
    std::mt19937_64 rng(mcmc::chain_seed(settings.seed, 2000));
    pred.draws.reserve(settings.n_predictive);
    for (std::size_t k = 0; k < settings.n_predictive; ++k) pred.draws.push_back(fit.sample(rng));
    return fit;
}

double BetaParams::log_density(double x) const {
    if (!(x > 0.0 && x < 1.0)) return -std::numeric_limits<double>::infinity();
    return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - std::log(boost::math::beta(a, b));
}

double BetaParams::sample(std::mt19937_64& rng) const {
    std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
    const double x = ga(rng), y = gb(rng);
    return x / (x + y);
}

std::vector<M74YearPosterior> fit_m74_series(std::span<const M74Observation> observations, int first_year,
                                             std::size_t n_years) {
    std::vector<M74YearPosterior> out(n_years);
    std::vector<bool> seen(n_years, false);
    for (std::size_t t = 0; t < n_years; ++t) out[t].year = first_year + static_cast<int>(t);
    for (const auto& o : observations) {
        if (o.families < 0 || o.affected < 0 || o.affected > o.families)
            throw ValidationError("M74 counts for year " + std::to_string(o.year) + " need 0 <= affected <= families");
        if (o.year < first_year || o.year >= first_year + static_cast<int>(n_years))
            throw ValidationError("M74 year " + std::to_string(o.year) + " outside the modeled years");
        const auto t = static_cast<std::size_t>(o.year - first_year);
        if (seen[t]) throw ValidationError("duplicate M74 year " + std::to_string(o.year));
        seen[t] = true;
        const double n = static_cast<double>(o.families), y = static_cast<double>(o.affected);
        out[t].mortality = {1.0 + y, 1.0 + n - y};
        out[t].survival = {1.0 + n - y, 1.0 + y};
    }
    return out;
}

double sample_m74_predictive(std::span<const M74YearPosterior> fitted, std::mt19937_64& rng) {
    std::vector<const M74YearPosterior*> informed;
    for (const auto& f : fitted)
        if (f.survival.a != 1.0 || f.survival.b != 1.0) informed.push_back(&f);
    if (informed.empty()) return BetaParams{}.sample(rng);
    std::uniform_int_distribution<std::size_t> pick(0, informed.size() - 1);
    return informed[pick(rng)]->survival.sample(rng);
}

}  // namespace salmon::priors
