#include "salmon/observation.hpp"

#include <cmath>
#include <numbers>

#include "salmon/errors.hpp"

namespace salmon::obs {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double normal_lpdf(double x, double mean, double sd) {
    const double z = (x - mean) / sd;
    return -kLogSqrt2Pi - std::log(sd) - 0.5 * z * z;
}

double lognormal_obs(double observed, double expected, double sd, double zero_floor) {
    if (!(observed >= 0.0) || !std::isfinite(observed)) throw DomainError("observation must be finite and >= 0");
    if (!(sd > 0.0)) throw DomainError("observation sd must be > 0");
    if (!(expected > 0.0)) return observed > 0.0 ? kNegInf : 0.0;
    const double y = std::log(observed > 0.0 ? observed : zero_floor);
    return normal_lpdf(y, std::log(expected) - 0.5 * sd * sd, sd);
}

double log_factorial(long n) { return std::lgamma(static_cast<double>(n) + 1.0); }

}  // namespace

void FisheryDef::validate(const dynamics::AgeStructure& ages) const {
    if (id.empty()) throw ValidationError("fishery id must not be empty");
    if (!(q > 0.0)) throw ValidationError("fishery " + id + ": q must be > 0");
    if (selectivity.size() != static_cast<std::size_t>(ages.n_rates()))
        throw ValidationError("fishery " + id + ": selectivity needs one value per sea-age 0..A");
    for (double s : selectivity)
        if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("fishery " + id + ": selectivity must be in [0,1]");
    if (!(reporting_rate >= 0.0 && reporting_rate <= 1.0))
        throw ValidationError("fishery " + id + ": reporting_rate must be in [0,1]");
    if (!(obs_sd > 0.0)) throw ValidationError("fishery " + id + ": obs_sd must be > 0");
}

void TagCohort::validate() const {
    if (released <= 0) throw ValidationError("tag cohort " + id + ": released must be positive");
    long total = 0;
    for (const auto& r : recoveries) {
        if (r.count < 0) throw ValidationError("tag cohort " + id + ": negative recovery count");
        total += r.count;
    }
    if (total > released) throw ValidationError("tag cohort " + id + ": more recoveries than releases");
}

double fishing_mortality(double q, double effort, double selectivity) {
    if (!(effort >= 0.0) || !std::isfinite(effort)) throw DomainError("effort must be finite and >= 0");
    if (!(q >= 0.0) || !(selectivity >= 0.0)) throw DomainError("q and selectivity must be >= 0");
    return q * effort * selectivity;
}

double expected_catch(double n, double F, double M) {
    if (!(n >= 0.0) || !(F >= 0.0) || !(M >= 0.0)) throw DomainError("catch equation inputs must be >= 0");
    const double Z = F + M;
    if (Z <= 0.0) return 0.0;
    return F / Z * -std::expm1(-Z) * n;
}

double loglik_catch(double observed, double expected, double sd, double zero_floor) {
    return lognormal_obs(observed, expected, sd, zero_floor);
}

double loglik_spawner_count(double observed, double expected_spawners, double cv, double zero_floor) {
    if (!(cv > 0.0)) throw DomainError("spawner count cv must be > 0");
    return lognormal_obs(observed, expected_spawners, std::sqrt(std::log1p(cv * cv)), zero_floor);
}

double loglik_smolt_approx(double smolts, const SmoltLikelihoodApprox& approx) {
    if (!(approx.sd > 0.0)) throw DomainError("smolt approximation sd must be > 0");
    if (!(smolts > 0.0)) return kNegInf;
    return normal_lpdf(std::log(smolts), approx.mu, approx.sd);
}

double loglik_tags(const TagCohort& cohort, std::span<const TagCell> cells,
                   const std::unordered_map<std::string, std::size_t>& fishery_index) {
    double p_seen = 0.0;
    for (const auto& c : cells) {
        if (!(c.probability >= 0.0)) throw InternalError("negative tag cell probability");
        p_seen += c.probability;
    }
    if (p_seen > 1.0 + 1e-9) throw InternalError("tag cell probabilities sum above one");
    const double p_never = std::max(0.0, 1.0 - p_seen);

    std::vector<long> counts(cells.size(), 0);
    long recovered = 0;
    for (const auto& r : cohort.recoveries) {
        if (r.count == 0) continue;
        auto it = fishery_index.find(r.fishery);
        if (it == fishery_index.end()) return kNegInf;
        bool found = false;
        for (std::size_t k = 0; k < cells.size(); ++k) {
            if (cells[k].fishery == it->second && cells[k].year == r.year) {
                counts[k] += r.count;
                found = true;
                break;
            }
        }
        if (!found) return kNegInf;
        recovered += r.count;
    }
    if (recovered > cohort.released) throw ValidationError("tag cohort " + cohort.id + ": more recoveries than releases");
    const long never = cohort.released - recovered;

    double ll = log_factorial(cohort.released) - log_factorial(never);
    for (std::size_t k = 0; k < cells.size(); ++k) {
        if (counts[k] == 0) continue;
        if (cells[k].probability <= 0.0) return kNegInf;
        ll += static_cast<double>(counts[k]) * std::log(cells[k].probability) - log_factorial(counts[k]);
    }
    if (never > 0) {
        if (p_never <= 0.0) return kNegInf;
        ll += static_cast<double>(never) * std::log(p_never);
    }
    return ll;
}

ObservationModel::ObservationModel(int first_year, std::size_t n_years, dynamics::AgeStructure ages,
                                   std::vector<FisheryDef> fisheries, std::vector<std::vector<double>> effort,
                                   std::vector<double> natural_mortality, std::vector<std::string> stocks)
        : first_year_(first_year),
          n_years_(n_years),
          ages_(ages),
          fisheries_(std::move(fisheries)),
          effort_(std::move(effort)),
          M_(std::move(natural_mortality)),
          stocks_(std::move(stocks)) {
    ages_.validate();
    if (M_.size() != static_cast<std::size_t>(ages_.n_rates()))
        throw ValidationError("natural mortality needs one rate per sea-age 0..A");
    for (double m : M_)
        if (!(m >= 0.0) || !std::isfinite(m)) throw ValidationError("natural mortality must be finite and >= 0");
    if (effort_.size() != fisheries_.size()) throw ValidationError("effort table does not match fisheries");
    for (std::size_t f = 0; f < fisheries_.size(); ++f) {
        fisheries_[f].validate(ages_);
        if (effort_[f].size() != n_years_) throw ValidationError("effort table does not cover every year");
        if (!fishery_index_.emplace(fisheries_[f].id, f).second)
            throw ValidationError("duplicate fishery id " + fisheries_[f].id);
    }
    for (std::size_t i = 0; i < stocks_.size(); ++i)
        if (!stock_index_.emplace(stocks_[i], i).second) throw ValidationError("duplicate stock id " + stocks_[i]);
}

std::vector<std::vector<double>> ObservationModel::effort_table(const Dataset& data,
                                                                const std::vector<FisheryDef>& fisheries,
                                                                int first_year, std::size_t n_years) {
    std::vector<std::vector<double>> effort(fisheries.size(), std::vector<double>(n_years, -1.0));
    for (const auto& rec : data.catches) {
        std::size_t f = 0;
        while (f < fisheries.size() && fisheries[f].id != rec.fishery) ++f;
        if (f == fisheries.size()) throw ValidationError("catch record for unknown fishery " + rec.fishery);
        const int t = rec.year - first_year;
        if (t < 0 || static_cast<std::size_t>(t) >= n_years) continue;
        if (!(rec.effort >= 0.0)) throw ValidationError("negative effort for " + rec.fishery);
        effort[f][static_cast<std::size_t>(t)] = rec.effort;
    }
    for (std::size_t f = 0; f < fisheries.size(); ++f)
        for (std::size_t t = 0; t < n_years; ++t)
            if (effort[f][t] < 0.0)
                throw ValidationError("missing effort for fishery " + fisheries[f].id + " in year " +
                                      std::to_string(first_year + static_cast<int>(t)));
    return effort;
}

std::optional<std::size_t> ObservationModel::year_index(int year) const {
    const int t = year - first_year_;
    if (t < 0 || static_cast<std::size_t>(t) >= n_years_) return std::nullopt;
    return static_cast<std::size_t>(t);
}

double ObservationModel::fishery_F(std::size_t f, std::size_t t, int a) const {
    const auto& fd = fisheries_[f];
    return fd.q * effort_[f][t] * fd.selectivity[static_cast<std::size_t>(a)];
}

double ObservationModel::total_F(std::size_t t, int a) const {
    double F = 0.0;
    for (std::size_t f = 0; f < fisheries_.size(); ++f) F += fishery_F(f, t, a);
    return F;
}

dynamics::MortalitySchedule ObservationModel::mortality() const {
    dynamics::MortalitySchedule sched(n_years_, ages_);
    for (std::size_t t = 0; t < n_years_; ++t) {
        for (int a = 0; a <= ages_.max_sea_age; ++a) {
            sched.F(t, static_cast<std::size_t>(a)) = total_F(t, a);
            sched.M(t, static_cast<std::size_t>(a)) = M_[static_cast<std::size_t>(a)];
        }
    }
    return sched;
}

std::vector<TagCell> tag_cell_probabilities(const TagCohort& cohort, const ObservationModel& model,
                                            const dynamics::MaturationSchedule& maturation) {
    std::vector<TagCell> cells;
    const auto start = model.year_index(cohort.release_year);
    if (!start) return cells;
    double alive = 1.0;
    for (int a = 0; a <= model.ages().max_sea_age; ++a) {
        const std::size_t t = *start + static_cast<std::size_t>(a);
        if (t >= model.n_years()) break;
        const double Z = model.total_F(t, a) + model.natural_mortality()[static_cast<std::size_t>(a)];
        const double dying = Z > 0.0 ? -std::expm1(-Z) : 0.0;
        for (std::size_t f = 0; f < model.fisheries().size(); ++f) {
            const double F = model.fishery_F(f, t, a);
            if (F <= 0.0) continue;
            cells.push_back({f, cohort.release_year + a, alive * (F / Z) * dying * model.fisheries()[f].reporting_rate});
        }
        alive *= std::exp(-Z);
        if (a >= 1) alive *= 1.0 - maturation.at(a);
    }
    return cells;
}

double expected_fishery_catch(std::size_t f, std::size_t t, const dynamics::Trajectory& traj,
                              const ObservationModel& model, std::span<const double> reared_at_sea) {
    double c = 0.0;
    const int A = model.ages().max_sea_age;
    for (int a = 0; a <= A; ++a) {
        const double Ff = model.fishery_F(f, t, a);
        if (Ff <= 0.0) continue;
        const double Z = model.total_F(t, a) + model.natural_mortality()[static_cast<std::size_t>(a)];
        const double frac = Ff / Z * -std::expm1(-Z);
        double n = 0.0;
        for (std::size_t i = 0; i < traj.n_stocks(); ++i) n += traj.at_sea(i, t, a);
        if (!reared_at_sea.empty()) n += reared_at_sea[t * static_cast<std::size_t>(A + 1) + static_cast<std::size_t>(a)];
        c += frac * n;
    }
    return c;
}

IndexedDataset index_dataset(const Dataset& data, const ObservationModel& model) {
    IndexedDataset out;
    const auto& fidx = model.fishery_index();
    const auto& sidx = model.stock_index();
    auto year = [&](int y, const std::string& what) {
        auto t = model.year_index(y);
        if (!t) throw ValidationError(what + ": year " + std::to_string(y) + " outside the modeled range");
        return *t;
    };
    for (const auto& rec : data.catches) {
        auto it = fidx.find(rec.fishery);
        if (it == fidx.end()) throw ValidationError("catch record for unknown fishery " + rec.fishery);
        if (!rec.catch_obs) continue;
        out.catches.push_back({it->second, year(rec.year, "catch record"), *rec.catch_obs});
    }
    for (const auto& tag : data.tags) {
        tag.validate();
        year(tag.release_year, "tag cohort " + tag.id);
        out.tags.push_back(&tag);
    }
    for (const auto& sc : data.spawners) {
        auto it = sidx.find(sc.stock);
        if (it == sidx.end()) throw ValidationError("spawner count for unknown stock " + sc.stock);
        out.spawners.push_back({it->second, year(sc.year, "spawner count"), sc.count, sc.cv});
    }
    for (const auto& sm : data.smolts) {
        auto it = sidx.find(sm.stock);
        if (it == sidx.end()) throw ValidationError("smolt approximation for unknown stock " + sm.stock);
        out.smolts.push_back({it->second, year(sm.year, "smolt approximation"), sm});
    }
    if (!data.reared.empty()) {
        const auto A1 = static_cast<std::size_t>(model.ages().n_rates());
        out.reared.assign(model.n_years() * A1, 0.0);
        for (const auto& r : data.reared) {
            if (r.sea_age < 0 || r.sea_age > model.ages().max_sea_age) throw ValidationError("reared sea-age out of range");
            if (!(r.abundance >= 0.0)) throw ValidationError("reared abundance must be >= 0");
            out.reared[year(r.year, "reared abundance") * A1 + static_cast<std::size_t>(r.sea_age)] = r.abundance;
        }
    }
    return out;
}

LoglikTerms total_loglik(const IndexedDataset& data, const dynamics::Trajectory& traj,
                         const ObservationModel& model, const dynamics::MaturationSchedule& maturation) {
    LoglikTerms terms;
    for (const auto& c : data.catches) {
        const double expected = expected_fishery_catch(c.fishery, c.t, traj, model, data.reared);
        terms.catches += loglik_catch(c.observed, expected, model.fisheries()[c.fishery].obs_sd, model.catch_floor);
    }
    for (const TagCohort* tag : data.tags) {
        const auto cells = tag_cell_probabilities(*tag, model, maturation);
        terms.tags += loglik_tags(*tag, cells, model.fishery_index());
    }
    for (const auto& s : data.spawners)
        terms.spawners += loglik_spawner_count(s.count, traj.total_spawners(s.stock, s.t), s.cv, model.catch_floor);
    for (const auto& s : data.smolts) terms.smolts += loglik_smolt_approx(traj.R(s.stock, s.t), s.approx);
    terms.total = terms.catches + terms.tags + terms.spawners + terms.smolts;
    if (std::isnan(terms.total)) terms.total = kNegInf;
    return terms;
}

LoglikTerms total_loglik(const Dataset& data, const dynamics::Trajectory& traj, const ObservationModel& model,
                         const dynamics::MaturationSchedule& maturation) {
    return total_loglik(index_dataset(data, model), traj, model, maturation);
}

}  // namespace salmon::obs
