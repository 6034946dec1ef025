#include "salmon/lifehistory.hpp"

#include <atomic>
#include <cmath>
#include <optional>
#include <random>

#include "salmon/errors.hpp"
#include "salmon/mcmc.hpp"

namespace salmon::lh {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::atomic<std::uint64_t> g_instance{0};

std::vector<std::string> stock_year_labels(const std::vector<std::string>& stocks, int first_year,
                                           std::size_t n_years) {
    std::vector<std::string> out;
    for (const auto& s : stocks)
        for (std::size_t t = 0; t < n_years; ++t) out.push_back(s + ":" + std::to_string(first_year + static_cast<int>(t)));
    return out;
}

double logit_beta_lpdf(double u, const priors::BetaParams& b) {
    // Beta density of x = inverse-logit(u) times dx/du = x (1 - x)
    const double log_x = u >= 0.0 ? -std::log1p(std::exp(-u)) : u - std::log1p(std::exp(u));
    const double log_1mx = u >= 0.0 ? -u - std::log1p(std::exp(-u)) : -std::log1p(std::exp(u));
    return b.a * log_x + b.b * log_1mx - (std::lgamma(b.a) + std::lgamma(b.b) - std::lgamma(b.a + b.b));
}

}  // namespace

double NormalPrior::log_density(double x) const {
    const double z = (x - mean) / sd;
    return -0.5 * z * z - std::log(sd) - kLogSqrt2Pi;
}

void LifeHistorySpec::validate() const {
    ages.validate();
    const std::size_t I = stocks.size(), A = static_cast<std::size_t>(ages.max_sea_age);
    const auto T = static_cast<std::size_t>(ages.smolt_delay);
    if (I == 0) throw ValidationError("life-history model needs at least one stock");
    if (n_years == 0) throw ValidationError("life-history model needs at least one year");
    if (fecundity.size() != I || female_prop.size() != I || sr.size() != I || log_initial_sea.size() != I ||
        log_initial_smolts.size() != I)
        throw ValidationError("per-stock settings must list every stock");
    for (std::size_t i = 0; i < I; ++i) {
        if (fecundity[i].size() != A) throw ValidationError("fecundity of " + stocks[i] + " needs one value per sea-age");
        if (log_initial_sea[i].size() != A || log_initial_smolts[i].size() != T)
            throw ValidationError("initial-state priors of " + stocks[i] + " have the wrong length");
        dynamics::StockParams{1.0, 1.0, fecundity[i], female_prop[i]}.validate(ages);
    }
    if (natural_mortality.size() != A + 1) throw ValidationError("natural mortality needs one rate per sea-age 0..A");
    for (double m : natural_mortality)
        if (!(m >= 0.0) || !std::isfinite(m)) throw ValidationError("natural mortality must be finite and >= 0");
    if (fisheries.empty()) throw ValidationError("life-history model needs at least one fishery");
    if (log_q.size() != fisheries.size()) throw ValidationError("every fishery needs a catchability prior");
    for (const auto& f : fisheries) f.validate(ages);
    if (maturation.size() + 1 != A) throw ValidationError("maturation priors needed for sea-ages 1..A-1");
    if (m74.size() != n_years) throw ValidationError("M74 priors needed for every modeled year");
    auto check_sd = [](const NormalPrior& p, const std::string& what) {
        if (!(p.sd > 0.0) || !std::isfinite(p.mean)) throw ValidationError(what + " prior needs a positive sd");
    };
    check_sd(log_sigma_R, "sigma_R");
    for (const auto& p : log_q) check_sd(p, "catchability");
    for (const auto& p : sr) {
        check_sd(p.log_alpha, "alpha");
        check_sd(p.log_beta, "beta");
        if (!(std::abs(p.corr) < 1.0)) throw ValidationError("SR prior correlation must be in (-1, 1)");
    }
    for (const auto& b : maturation)
        if (!(b.a > 0.0 && b.b > 0.0)) throw ValidationError("maturation Beta prior needs positive parameters");
    for (const auto& b : m74)
        if (!(b.a > 0.0 && b.b > 0.0)) throw ValidationError("M74 Beta prior needs positive parameters");
    if (!(sigma_N >= 0.0 && sigma_S >= 0.0)) throw ValidationError("process sds must be >= 0");
}

LifeHistoryModel::LifeHistoryModel(LifeHistorySpec spec)
        : spec_(std::move(spec)),
          obs_model_((spec_.validate(), spec_.first_year), spec_.n_years, spec_.ages, spec_.fisheries,
                     obs::ObservationModel::effort_table(spec_.data, spec_.fisheries, spec_.first_year, spec_.n_years),
                     spec_.natural_mortality, spec_.stocks),
          instance_(++g_instance) {
    obs_model_.catch_floor = spec_.catch_floor;
    indexed_ = obs::index_dataset(spec_.data, obs_model_);

    const std::size_t I = spec_.stocks.size(), Y = spec_.n_years;
    const int A = spec_.ages.max_sea_age;
    std::vector<std::string> fisheries, ages_lab, sea0, years, zsea, zspawn;
    for (const auto& f : spec_.fisheries) fisheries.push_back(f.id);
    for (int a = 1; a < A; ++a) ages_lab.push_back(std::to_string(a));
    for (const auto& s : spec_.stocks)
        for (int a = 1; a <= A; ++a) sea0.push_back(s + ":" + std::to_string(a));
    for (std::size_t t = 0; t < Y; ++t) years.push_back(std::to_string(spec_.first_year + static_cast<int>(t)));

    off_alpha_ = registry_.add("alpha", spec_.stocks, Transform::log);
    off_beta_ = registry_.add("beta", spec_.stocks, Transform::log);
    off_q_ = registry_.add("q", fisheries, Transform::log);
    off_mat_ = registry_.add("maturation", ages_lab, Transform::logit);
    off_sigma_ = registry_.add("sigma_R", {""}, Transform::log);
    off_sea0_ = registry_.add("initial_sea", sea0, Transform::log);
    off_smolts_ = registry_.add("smolts", stock_year_labels(spec_.stocks, spec_.first_year, n_smolt_years()),
                                Transform::log);
    off_s74_ = registry_.add("s74", years, Transform::logit);
    const auto nA = static_cast<std::size_t>(A);
    if (spec_.sigma_N > 0.0) {
        for (std::size_t t = 0; t < Y; ++t)
            for (const auto& s : spec_.stocks)
                for (std::size_t k = 0; k < nA; ++k) zsea.push_back(s + ":" + years[t] + ":" + std::to_string(k));
        off_zsea_ = registry_.add("z_sea", zsea, Transform::identity);
    }
    if (spec_.sigma_S > 0.0) {
        for (std::size_t t = 0; t < Y; ++t)
            for (const auto& s : spec_.stocks)
                for (std::size_t k = 0; k < nA; ++k) zspawn.push_back(s + ":" + years[t] + ":" + std::to_string(k + 1));
        off_zspawn_ = registry_.add("z_spawn", zspawn, Transform::identity);
    }

    for (std::size_t i = 0; i < I; ++i) registry_.add_block({off_alpha_ + i, off_beta_ + i});
    {
        std::vector<std::size_t> b;
        for (std::size_t f = 0; f < fisheries.size(); ++f) b.push_back(off_q_ + f);
        registry_.add_block(b);
    }
    if (A > 1) {
        std::vector<std::size_t> b;
        for (std::size_t a = 0; a + 1 < nA; ++a) b.push_back(off_mat_ + a);
        registry_.add_block(b);
    }
    registry_.add_block({off_sigma_});
    for (std::size_t i = 0; i < I; ++i) {
        std::vector<std::size_t> b;
        for (std::size_t a = 0; a < nA; ++a) b.push_back(off_sea0_ + i * nA + a);
        registry_.add_block(b);
    }
    for (std::size_t t = 0; t < n_smolt_years(); ++t) {
        std::vector<std::size_t> b;
        for (std::size_t i = 0; i < I; ++i) b.push_back(smolt_index(i, t));
        if (t < Y) {
            b.push_back(off_s74_ + t);
            if (spec_.sigma_N > 0.0)
                for (std::size_t k = 0; k < I * nA; ++k) b.push_back(off_zsea_ + t * I * nA + k);
            if (spec_.sigma_S > 0.0)
                for (std::size_t k = 0; k < I * nA; ++k) b.push_back(off_zspawn_ + t * I * nA + k);
        }
        registry_.add_block(b);
    }
    registry_.validate_blocks();
}

std::size_t LifeHistoryModel::smolt_index(std::size_t stock, std::size_t t) const {
    return off_smolts_ + stock * n_smolt_years() + t;
}

Parameters LifeHistoryModel::unpack(std::span<const double> u) const {
    if (u.size() != registry_.size()) throw InternalError("parameter vector does not match the registry");
    const std::size_t I = spec_.stocks.size(), Y = spec_.n_years;
    const auto nA = static_cast<std::size_t>(spec_.ages.max_sea_age);
    Parameters p;
    for (std::size_t i = 0; i < I; ++i)
        p.stocks.push_back({std::exp(u[off_alpha_ + i]), std::exp(u[off_beta_ + i]), spec_.fecundity[i],
                            spec_.female_prop[i]});
    for (std::size_t f = 0; f < spec_.fisheries.size(); ++f) p.q.push_back(std::exp(u[off_q_ + f]));
    for (std::size_t a = 0; a + 1 < nA; ++a) p.maturation.L.push_back(constrain(Transform::logit, u[off_mat_ + a]));
    p.maturation.L.push_back(1.0);
    p.sigma_R = std::exp(u[off_sigma_]);
    p.initial_sea.assign(I, std::vector<double>(nA));
    p.smolts.assign(I, std::vector<double>(n_smolt_years()));
    for (std::size_t i = 0; i < I; ++i) {
        for (std::size_t a = 0; a < nA; ++a) p.initial_sea[i][a] = std::exp(u[off_sea0_ + i * nA + a]);
        for (std::size_t t = 0; t < n_smolt_years(); ++t) p.smolts[i][t] = std::exp(u[smolt_index(i, t)]);
    }
    for (std::size_t t = 0; t < Y; ++t) p.s74.push_back(constrain(Transform::logit, u[off_s74_ + t]));
    auto unpack_z = [&](std::size_t off) {
        std::vector<std::vector<std::vector<double>>> z(Y, std::vector<std::vector<double>>(I, std::vector<double>(nA)));
        for (std::size_t t = 0; t < Y; ++t)
            for (std::size_t i = 0; i < I; ++i)
                for (std::size_t k = 0; k < nA; ++k) z[t][i][k] = u[off + (t * I + i) * nA + k];
        return z;
    };
    if (spec_.sigma_N > 0.0) p.z_sea = unpack_z(off_zsea_);
    if (spec_.sigma_S > 0.0) p.z_spawn = unpack_z(off_zspawn_);
    return p;
}

dynamics::MortalitySchedule LifeHistoryModel::mortality(std::span<const double> q) const {
    dynamics::MortalitySchedule rates(spec_.n_years, spec_.ages);
    const auto& effort = obs_model_.effort();
    for (std::size_t t = 0; t < spec_.n_years; ++t)
        for (std::size_t a = 0; a < rates.n_rates(); ++a) {
            double F = 0.0;
            for (std::size_t f = 0; f < spec_.fisheries.size(); ++f)
                F += q[f] * effort[f][t] * spec_.fisheries[f].selectivity[a];
            rates.F(t, a) = F;
            rates.M(t, a) = spec_.natural_mortality[a];
        }
    return rates;
}

dynamics::Trajectory LifeHistoryModel::trajectory(const Parameters& p) const {
    return dynamics::reconstruct_trajectory(p.initial_sea, p.smolts, p.stocks, spec_.ages, p.maturation,
                                            mortality(p.q), dynamics::M74Series{p.s74},
                                            {0.0, spec_.sigma_N, spec_.sigma_S}, p.z_sea, p.z_spawn);
}

double LifeHistoryModel::evaluate(std::span<const double> u, bool with_likelihood, obs::LoglikTerms* terms) const {
    const Parameters p = unpack(u);
    const std::size_t I = spec_.stocks.size(), Y = spec_.n_years;
    const auto nA = static_cast<std::size_t>(spec_.ages.max_sea_age);
    const auto T = static_cast<std::size_t>(spec_.ages.smolt_delay);

    double lp = 0.0;
    for (std::size_t i = 0; i < I; ++i) {
        const auto& pr = spec_.sr[i];
        const double za = (u[off_alpha_ + i] - pr.log_alpha.mean) / pr.log_alpha.sd;
        const double zb = (u[off_beta_ + i] - pr.log_beta.mean) / pr.log_beta.sd;
        const double om = 1.0 - pr.corr * pr.corr;
        lp += -(za * za - 2.0 * pr.corr * za * zb + zb * zb) / (2.0 * om) - std::log(pr.log_alpha.sd) -
              std::log(pr.log_beta.sd) - 0.5 * std::log(om) - 2.0 * kLogSqrt2Pi;
        for (std::size_t a = 0; a < nA; ++a) lp += spec_.log_initial_sea[i][a].log_density(u[off_sea0_ + i * nA + a]);
        for (std::size_t k = 0; k < T; ++k) lp += spec_.log_initial_smolts[i][k].log_density(u[smolt_index(i, k)]);
    }
    for (std::size_t f = 0; f < spec_.fisheries.size(); ++f) lp += spec_.log_q[f].log_density(u[off_q_ + f]);
    for (std::size_t a = 0; a + 1 < nA; ++a) lp += logit_beta_lpdf(u[off_mat_ + a], spec_.maturation[a]);
    lp += spec_.log_sigma_R.log_density(u[off_sigma_]);
    for (std::size_t t = 0; t < Y; ++t) lp += logit_beta_lpdf(u[off_s74_ + t], spec_.m74[t]);
    auto std_normal = [&](std::size_t off, std::size_t n) {
        for (std::size_t k = 0; k < n; ++k) lp += -0.5 * u[off + k] * u[off + k] - kLogSqrt2Pi;
    };
    if (spec_.sigma_N > 0.0) std_normal(off_zsea_, Y * I * nA);
    if (spec_.sigma_S > 0.0) std_normal(off_zspawn_, Y * I * nA);
    if (!std::isfinite(lp)) return kNegInf;

    dynamics::Trajectory traj;
    try {
        traj = trajectory(p);
    } catch (const DomainError&) {
        return kNegInf;
    }

    // Recruitment: log R_{t+T} ~ N(log BH(O_t) - sigma^2/2, sigma)
    const double sigma = p.sigma_R;
    for (std::size_t i = 0; i < I; ++i)
        for (std::size_t t = 0; t < Y; ++t) {
            const double expected = dynamics::bh_recruitment(traj.O(i, t), p.stocks[i].alpha, p.stocks[i].beta);
            if (!(expected > 0.0)) return kNegInf;
            const double z = (u[smolt_index(i, t + T)] - std::log(expected) + 0.5 * sigma * sigma) / sigma;
            lp += -0.5 * z * z - std::log(sigma) - kLogSqrt2Pi;
        }
    if (!with_likelihood) return std::isnan(lp) ? kNegInf : lp;

    struct Scratch {
        std::uint64_t owner = 0;
        std::optional<obs::ObservationModel> model;
    };
    thread_local Scratch scratch;
    if (scratch.owner != instance_ || !scratch.model) {
        scratch.model.emplace(obs_model_);
        scratch.owner = instance_;
    }
    for (std::size_t f = 0; f < p.q.size(); ++f) scratch.model->fisheries()[f].q = p.q[f];
    const obs::LoglikTerms ll = obs::total_loglik(indexed_, traj, *scratch.model, p.maturation);
    if (terms) *terms = ll;
    const double total = lp + ll.total;
    return std::isnan(total) ? kNegInf : total;
}

double LifeHistoryModel::log_prior(std::span<const double> u) const { return evaluate(u, false, nullptr); }

obs::LoglikTerms LifeHistoryModel::loglik(std::span<const double> u) const {
    obs::LoglikTerms terms;
    terms.total = kNegInf;
    evaluate(u, true, &terms);
    return terms;
}

double LifeHistoryModel::log_posterior(std::span<const double> u) const {
    try {
        return evaluate(u, true, nullptr);
    } catch (const DomainError&) {
        return kNegInf;
    }
}

std::vector<std::vector<double>> LifeHistoryModel::initial_points(std::size_t n_chains, std::uint64_t seed,
                                                                  double jitter) const {
    const std::size_t I = spec_.stocks.size(), Y = spec_.n_years;
    const auto nA = static_cast<std::size_t>(spec_.ages.max_sea_age);
    const auto T = static_cast<std::size_t>(spec_.ages.smolt_delay);
    std::vector<double> centre(registry_.size(), 0.0);
    for (std::size_t i = 0; i < I; ++i) {
        centre[off_alpha_ + i] = spec_.sr[i].log_alpha.mean;
        centre[off_beta_ + i] = spec_.sr[i].log_beta.mean;
        for (std::size_t a = 0; a < nA; ++a) centre[off_sea0_ + i * nA + a] = spec_.log_initial_sea[i][a].mean;
        // smolts: the approximation where available, otherwise the mean of the stock's approximations
        std::vector<double> known(n_smolt_years(), std::numeric_limits<double>::quiet_NaN());
        double sum = 0.0, n = 0.0;
        for (const auto& s : indexed_.smolts)
            if (s.stock == i) {
                known[s.t] = s.approx.mu;
                sum += s.approx.mu;
                n += 1.0;
            }
        double fallback = 0.0;
        for (std::size_t k = 0; k < T; ++k) fallback += spec_.log_initial_smolts[i][k].mean / static_cast<double>(T);
        if (n > 0.0) fallback = sum / n;
        for (std::size_t t = 0; t < n_smolt_years(); ++t) {
            double v = std::isnan(known[t]) ? fallback : known[t];
            if (t < T && std::isnan(known[t])) v = spec_.log_initial_smolts[i][t].mean;
            centre[smolt_index(i, t)] = v;
        }
    }
    for (std::size_t f = 0; f < spec_.fisheries.size(); ++f) centre[off_q_ + f] = spec_.log_q[f].mean;
    for (std::size_t a = 0; a + 1 < nA; ++a)
        centre[off_mat_ + a] = unconstrain(Transform::logit, spec_.maturation[a].mean());
    centre[off_sigma_] = spec_.log_sigma_R.mean;
    for (std::size_t t = 0; t < Y; ++t) centre[off_s74_ + t] = unconstrain(Transform::logit, spec_.m74[t].mean());

    std::vector<std::vector<double>> out;
    for (std::size_t c = 0; c < n_chains; ++c) {
        std::mt19937_64 rng(mcmc::chain_seed(seed ^ 0x9e3779b97f4a7c15ULL, c));
        std::normal_distribution<double> z(0.0, 1.0);
        std::vector<double> x = centre;
        // shrink the jitter until the start has positive density
        for (double scale = jitter; scale > 1e-6; scale *= 0.5) {
            x = centre;
            for (auto& v : x) v += scale * z(rng);
            if (std::isfinite(log_posterior(x))) break;
            x = centre;
        }
        out.push_back(std::move(x));
    }
    return out;
}

}  // namespace salmon::lh
