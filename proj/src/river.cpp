#include "salmon/river.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "salmon/errors.hpp"
#include "salmon/parameters.hpp"

namespace salmon::river {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr std::size_t kExactGridLimit = 200000;
constexpr std::size_t kCoarseGridPoints = 20000;

double normal_lpdf(double x, double mu, double var) {
    return -0.5 * (x - mu) * (x - mu) / var - 0.5 * std::log(var) - kLogSqrt2Pi;
}

double log_choose(double n, double k) { return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1); }
double log_beta_fn(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

}  // namespace

void SmoltTrapData::validate() const {
    if (marked <= 0) throw ValidationError("trap " + river + " " + std::to_string(year) + ": marked must be positive");
    if (captured < 0 || recaptured < 0)
        throw ValidationError("trap " + river + " " + std::to_string(year) + ": negative counts");
    if (recaptured > std::min(marked, captured))
        throw ValidationError("trap " + river + " " + std::to_string(year) +
                              ": recaptured exceeds marked or captured");
}

RunSizePrior::Kind run_size_prior_kind(const std::string& name) {
    if (name == "uniform") return RunSizePrior::Kind::uniform;
    if (name == "log_uniform") return RunSizePrior::Kind::log_uniform;
    if (name == "lognormal") return RunSizePrior::Kind::lognormal;
    throw ValidationError("unknown run-size prior '" + name + "'");
}

SmoltPosterior markrecapture_posterior(const SmoltTrapData& data, const RunSizePrior& prior, std::size_t n_draws,
                                       std::uint64_t seed) {
    data.validate();
    const double m = static_cast<double>(data.marked), c = static_cast<double>(data.captured),
                 r = static_cast<double>(data.recaptured);
    const double known = m + c - r;
    const double petersen = m * (c + 1.0) / (r + 1.0);
    double lo = std::max(known, prior.lower.value_or(known));
    double hi = prior.upper.value_or(std::max(10.0 * known, 50.0 * petersen));
    lo = std::ceil(lo);
    hi = std::floor(hi);
    if (!(hi >= lo))
        throw ValidationError("run-size prior for " + data.river + " " + std::to_string(data.year) +
                              " excludes every run size consistent with the counts");
    if (prior.kind == RunSizePrior::Kind::log_uniform && lo <= 0.0) lo = 1.0;
    if (prior.kind == RunSizePrior::Kind::lognormal && !(prior.log_sd > 0.0))
        throw ValidationError("lognormal run-size prior needs a positive log_sd");

    // Grid points with cell widths; integers when the range is small enough.
    std::vector<double> points, widths;
    const double span = hi - lo + 1.0;
    if (span <= static_cast<double>(kExactGridLimit)) {
        for (double u = lo; u <= hi; u += 1.0) points.push_back(u);
        widths.assign(points.size(), 1.0);
    } else {
        const double step = std::log(hi / lo) / static_cast<double>(kCoarseGridPoints - 1);
        for (std::size_t k = 0; k < kCoarseGridPoints; ++k) points.push_back(lo * std::exp(step * k));
        points.back() = hi;
        widths.resize(points.size());
        for (std::size_t k = 0; k < points.size(); ++k) {
            const double left = k == 0 ? points[0] : 0.5 * (points[k - 1] + points[k]);
            const double right = k + 1 == points.size() ? points[k] : 0.5 * (points[k] + points[k + 1]);
            widths[k] = std::max(right - left, 1e-12);
        }
    }

    std::vector<double> logw(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        const double u = points[k];
        double lp = 0.0;
        switch (prior.kind) {
            case RunSizePrior::Kind::uniform: break;
            case RunSizePrior::Kind::log_uniform: lp = -std::log(u); break;
            case RunSizePrior::Kind::lognormal: lp = normal_lpdf(std::log(u), prior.log_mean, prior.log_sd * prior.log_sd) - std::log(u); break;
        }
        logw[k] = lp + log_choose(u - m, c - r) + log_beta_fn(c + 1.0, u - c + 1.0) + std::log(widths[k]);
    }
    const double top = *std::max_element(logw.begin(), logw.end());
    std::vector<double> cdf(points.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < points.size(); ++k) {
        acc += std::exp(logw[k] - top);
        cdf[k] = acc;
    }

    SmoltPosterior out;
    out.river = data.river;
    out.year = data.year;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const bool exact = span <= static_cast<double>(kExactGridLimit);
    out.draws.reserve(n_draws);
    for (std::size_t d = 0; d < n_draws; ++d) {
        const double target = unif(rng) * acc;
        const auto k = static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), target) - cdf.begin());
        const std::size_t kk = std::min(k, points.size() - 1);
        double u = points[kk];
        if (!exact) {
            const double left = kk == 0 ? points[0] : 0.5 * (points[kk - 1] + points[kk]);
            u = std::clamp(left + unif(rng) * widths[kk], lo, hi);
        }
        out.draws.push_back(u);
    }
    if (data.recaptured == 0)
        out.warning = "no recaptures: run size for " + data.river + " " + std::to_string(data.year) +
                      " is driven by the prior upper range";
    return out;
}

double parr_index(std::span<const ElectrofishingSite> sites, double habitat_area, double zero_density) {
    if (sites.empty()) throw ValidationError("parr index needs at least one site");
    double wsum = 0.0, dsum = 0.0;
    for (const auto& s : sites) {
        if (!(s.area > 0.0) || !(s.density >= 0.0))
            throw ValidationError("electrofishing site " + s.site + " has invalid area or density");
        wsum += s.area;
        dsum += s.area * std::max(s.density, zero_density);
    }
    return dsum / wsum * habitat_area / 100.0;
}

obs::SmoltLikelihoodApprox approximate_smolt_likelihood(const SmoltPosterior& posterior, double sd_floor) {
    if (posterior.draws.size() < 100)
        throw ValidationError("smolt posterior " + posterior.river + " " + std::to_string(posterior.year) +
                              " has fewer than 100 draws");
    double s = 0.0;
    for (double d : posterior.draws) {
        if (!(d > 0.0) || !std::isfinite(d))
            throw ValidationError("smolt posterior " + posterior.river + " " + std::to_string(posterior.year) +
                                  " has nonpositive draws");
        s += std::log(d);
    }
    const double n = static_cast<double>(posterior.draws.size());
    const double mu = s / n;
    double ss = 0.0;
    for (double d : posterior.draws) ss += (std::log(d) - mu) * (std::log(d) - mu);
    return {posterior.river, posterior.year, mu, std::max(std::sqrt(ss / (n - 1.0)), sd_floor)};
}

const SmoltPosterior* RiverModelFit::find(const std::string& river, int year) const {
    for (const auto& s : smolts)
        if (s.river == river && s.year == year) return &s;
    return nullptr;
}

namespace {

// Site data for one river-year reduced to weighted log-scale sufficient statistics.
struct SiteSummary {
    double xhat = 0.0;  // weighted mean log density
    double wsum = 0.0;  // sum of relative area weights
    double ss = 0.0;    // weighted residual sum of squares
    double n = 0.0;
};

struct RiverYear {
    int smolt_year = 0;
    std::optional<SiteSummary> parr;        // parr survey in smolt_year - lag
    std::optional<double> trap_mu, trap_var;  // lognormal approximation of the trap posterior
    double log_area = 0.0;                   // log(habitat_area / 100)
};

struct RiverData {
    std::string id;
    std::vector<RiverYear> years;
    bool has_trap_link = false;  // some year has both parr and trap information
};

struct Hyper {
    double mu = 0.0, tau = 0.0, sigma_p = 0.0, sigma_e2 = 0.0;
};

}  // namespace

RiverModelFit fit_river_model(std::span<const RiverInfo> rivers, std::span<const ElectrofishingSite> sites,
                              std::span<const SmoltPosterior> trap_posteriors, const RiverModelSettings& settings) {
    if (rivers.empty()) throw ValidationError("river model needs at least one river");
    if (trap_posteriors.empty()) throw ValidationError("river model needs at least one river with trap data");
    if (settings.lag < 0) throw ValidationError("parr-to-smolt lag must be nonnegative");
    std::map<std::string, std::size_t> river_index;
    for (std::size_t r = 0; r < rivers.size(); ++r) {
        if (!(rivers[r].habitat_area > 0.0))
            throw ValidationError("river " + rivers[r].river + " needs a positive habitat area");
        if (!river_index.emplace(rivers[r].river, r).second)
            throw ValidationError("duplicate river " + rivers[r].river);
    }

    // Relative site weights use the mean fished area over all sites.
    double mean_area = 0.0;
    for (const auto& s : sites) {
        if (!river_index.count(s.river)) throw ValidationError("electrofishing river " + s.river + " is not declared");
        if (!(s.area > 0.0) || !(s.density >= 0.0) || !std::isfinite(s.density))
            throw ValidationError("electrofishing site " + s.site + " has invalid area or density");
        mean_area += s.area;
    }
    if (!sites.empty()) mean_area /= static_cast<double>(sites.size());

    std::vector<std::map<int, SiteSummary>> parr(rivers.size());
    for (const auto& s : sites) {
        auto& ss = parr[river_index[s.river]][s.year];
        const double w = s.area / mean_area, y = std::log(std::max(s.density, settings.zero_density));
        ss.xhat += w * y;
        ss.wsum += w;
        ss.n += 1.0;
    }
    for (auto& per_river : parr)
        for (auto& [year, ss] : per_river) ss.xhat /= ss.wsum;
    for (const auto& s : sites) {
        auto& ss = parr[river_index[s.river]][s.year];
        const double y = std::log(std::max(s.density, settings.zero_density));
        ss.ss += s.area / mean_area * (y - ss.xhat) * (y - ss.xhat);
    }

    std::vector<std::map<int, obs::SmoltLikelihoodApprox>> trap(rivers.size());
    for (const auto& p : trap_posteriors) {
        auto it = river_index.find(p.river);
        if (it == river_index.end()) throw ValidationError("trap river " + p.river + " is not declared");
        if (!trap[it->second].emplace(p.year, approximate_smolt_likelihood(p)).second)
            throw ValidationError("duplicate trap posterior for " + p.river + " " + std::to_string(p.year));
    }

    std::vector<RiverData> data(rivers.size());
    bool any_link = false;
    for (std::size_t r = 0; r < rivers.size(); ++r) {
        data[r].id = rivers[r].river;
        std::map<int, RiverYear> years;
        for (const auto& [year, ss] : parr[r]) {
            auto& ry = years[year + settings.lag];
            ry.parr = ss;
        }
        for (const auto& [year, approx] : trap[r]) {
            auto& ry = years[year];
            ry.trap_mu = approx.mu;
            ry.trap_var = approx.sd * approx.sd;
        }
        for (auto& [year, ry] : years) {
            ry.smolt_year = year;
            ry.log_area = std::log(rivers[r].habitat_area / 100.0);
            if (ry.parr && ry.trap_mu) data[r].has_trap_link = true;
            data[r].years.push_back(ry);
        }
        any_link = any_link || data[r].has_trap_link;
    }
    if (!any_link)
        throw ValidationError("no trap year overlaps an electrofishing year (lag " + std::to_string(settings.lag) +
                              ") in any river");

    const bool hier = settings.pooling == Pooling::hierarchical;
    ParameterRegistry reg;
    std::size_t i_mu = 0, i_tau = 0;
    if (hier) {
        i_mu = reg.add("survival_mean", {""}, Transform::identity);
        i_tau = reg.add("survival_sd", {""}, Transform::log);
    }
    const std::size_t i_p = reg.add("process_sd", {""}, Transform::log);
    const std::size_t i_e = reg.add("site_sd", {""}, Transform::log);
    if (hier) reg.add_block({i_mu, i_tau});
    reg.add_block({i_p, i_e});

    const double floor2 = settings.site_sd_floor * settings.site_sd_floor;
    auto hyper_of = [&](std::span<const double> u) {
        Hyper h;
        h.mu = hier ? u[i_mu] : settings.survival_prior_mean;
        h.tau = hier ? std::exp(u[i_tau]) : settings.survival_prior_sd;
        h.sigma_p = std::exp(u[i_p]);
        const double se = std::exp(u[i_e]);
        h.sigma_e2 = se * se + floor2;
        return h;
    };

    auto log_post = [&](std::span<const double> u) {
        const Hyper h = hyper_of(u);
        double lp = 0.0;
        auto half_normal = [&](double s, double log_s) {
            return -0.5 * (s / settings.scale_sd) * (s / settings.scale_sd) + log_s;
        };
        if (hier) {
            lp += normal_lpdf(h.mu, settings.survival_prior_mean, settings.survival_prior_sd * settings.survival_prior_sd);
            lp += half_normal(h.tau, u[i_tau]);
        }
        lp += half_normal(h.sigma_p, u[i_p]);
        lp += half_normal(std::exp(u[i_e]), u[i_e]);
        const double tau2 = h.tau * h.tau;
        for (const auto& rd : data) {
            // Marginal of the linked residuals g_t ~ N(mu 1, diag(V) + tau^2 1 1') via Sherman-Morrison.
            double sum_inv = 0.0, sum_g = 0.0, quad = 0.0, logdet = 0.0, n = 0.0;
            for (const auto& ry : rd.years) {
                if (ry.parr) {
                    // site scatter around the latent river density, flat prior on log density
                    lp += -0.5 * (ry.parr->n - 1.0) * std::log(h.sigma_e2) - 0.5 * ry.parr->ss / h.sigma_e2 -
                          0.5 * std::log(ry.parr->wsum);
                }
                if (!(ry.parr && ry.trap_mu)) continue;
                const double v = h.sigma_e2 / ry.parr->wsum + h.sigma_p * h.sigma_p + *ry.trap_var;
                const double g = *ry.trap_mu - ry.parr->xhat - ry.log_area - h.mu;
                sum_inv += 1.0 / v;
                sum_g += g / v;
                quad += g * g / v;
                logdet += std::log(v);
                n += 1.0;
            }
            if (n == 0.0) continue;
            const double denom = 1.0 + tau2 * sum_inv;
            lp += -0.5 * (quad - tau2 * sum_g * sum_g / denom) - 0.5 * (logdet + std::log(denom)) - n * kLogSqrt2Pi;
        }
        return std::isnan(lp) ? -std::numeric_limits<double>::infinity() : lp;
    };

    std::vector<std::vector<double>> inits;
    std::mt19937_64 init_rng(mcmc::chain_seed(settings.seed, 1000));
    std::normal_distribution<double> jitter(0.0, 0.2);
    for (std::size_t c = 0; c < settings.n_chains; ++c) {
        std::vector<double> u(reg.size());
        if (hier) {
            u[i_mu] = settings.survival_prior_mean + jitter(init_rng);
            u[i_tau] = std::log(0.3) + jitter(init_rng);
        }
        u[i_p] = std::log(0.2) + jitter(init_rng);
        u[i_e] = std::log(0.3) + jitter(init_rng);
        inits.push_back(u);
    }
    mcmc::ChainSettings cs;
    cs.seed = settings.seed;
    cs.n_warmup = settings.n_warmup;
    cs.n_iter = settings.n_iter;
    cs.thin = settings.thin;
    cs.blocks = reg.blocks();

    RiverModelFit fit;
    fit.names = reg.names();
    for (const auto& r : rivers) fit.rivers.push_back(r.river);
    fit.chains = mcmc::run_chains(log_post, inits, cs, fit.names);
    std::vector<mcmc::DrawMatrix> mats;
    for (const auto& c : fit.chains) mats.push_back(c.draws);
    fit.diagnostics = mcmc::diagnostics(mats, fit.names, settings.rhat_threshold);
    if (!fit.diagnostics.passed()) {
        std::ostringstream msg;
        msg << "river model did not converge (max R-hat " << fit.diagnostics.max_rhat() << "); flagged:";
        for (const auto& n : fit.diagnostics.flagged()) msg << ' ' << n;
        throw ConvergenceError(msg.str());
    }

    // Exact conditional draws of river survival, then log smolts, per hyper draw.
    std::vector<std::vector<std::size_t>> slot(rivers.size());
    for (std::size_t r = 0; r < rivers.size(); ++r)
        for (const auto& ry : data[r].years) {
            slot[r].push_back(fit.smolts.size());
            fit.smolts.push_back({data[r].id, ry.smolt_year, {}, {}});
        }
    fit.survival_draws.assign(rivers.size(), {});
    std::mt19937_64 rng(mcmc::chain_seed(settings.seed, 2000));
    std::normal_distribution<double> z(0.0, 1.0);
    for (const auto& chain : fit.chains) {
        for (std::size_t d = 0; d < chain.n_draws(); ++d) {
            const Hyper h = hyper_of(chain.draws.row(d));
            const double tau2 = h.tau * h.tau, p2 = h.sigma_p * h.sigma_p;
            for (std::size_t r = 0; r < rivers.size(); ++r) {
                double prec = 1.0 / tau2, num = h.mu / tau2;
                for (const auto& ry : data[r].years) {
                    if (!(ry.parr && ry.trap_mu)) continue;
                    const double v = h.sigma_e2 / ry.parr->wsum + p2 + *ry.trap_var;
                    prec += 1.0 / v;
                    num += (*ry.trap_mu - ry.parr->xhat - ry.log_area) / v;
                }
                const double surv = num / prec + z(rng) / std::sqrt(prec);
                fit.survival_draws[r].push_back(std::exp(surv));
                for (std::size_t k = 0; k < data[r].years.size(); ++k) {
                    const auto& ry = data[r].years[k];
                    double mean = 0.0, var = 0.0;
                    if (ry.parr) {
                        mean = ry.parr->xhat + ry.log_area + surv;
                        var = h.sigma_e2 / ry.parr->wsum + p2;
                        if (ry.trap_mu) {
                            const double post_prec = 1.0 / var + 1.0 / *ry.trap_var;
                            mean = (mean / var + *ry.trap_mu / *ry.trap_var) / post_prec;
                            var = 1.0 / post_prec;
                        }
                    } else {
                        mean = *ry.trap_mu;
                        var = *ry.trap_var;
                    }
                    fit.smolts[slot[r][k]].draws.push_back(std::exp(mean + std::sqrt(var) * z(rng)));
                }
            }
        }
    }
    return fit;
}

}  // namespace salmon::river
