#include "salmon/posterior.hpp"

#include <algorithm>
#include <cmath>

#include "salmon/errors.hpp"
#include "salmon/io.hpp"

namespace salmon::post {

namespace {

json beta_json(const priors::BetaParams& b) { return {{"a", b.a}, {"b", b.b}}; }
priors::BetaParams beta_from(const json& j) { return {j.at("a").get<double>(), j.at("b").get<double>()}; }

std::string chain_file(std::size_t k) { return "chain_" + std::to_string(k + 1) + ".csv"; }

}  // namespace

PosteriorModel PosteriorModel::from_spec(const lh::LifeHistoryModel& model, std::vector<priors::M74YearPosterior> m74) {
    const auto& s = model.spec();
    PosteriorModel m;
    m.first_year = s.first_year;
    m.n_years = s.n_years;
    m.ages = s.ages;
    m.stocks = s.stocks;
    m.fecundity = s.fecundity;
    m.female_prop = s.female_prop;
    m.natural_mortality = s.natural_mortality;
    m.fisheries = s.fisheries;
    m.effort = model.observation_model().effort();
    m.sigma_N = s.sigma_N;
    m.sigma_S = s.sigma_S;
    m.m74 = std::move(m74);
    m.groups = model.registry().groups();
    return m;
}

std::size_t PosteriorModel::n_params() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.size;
    return n;
}

const ParamGroup& PosteriorModel::group(const std::string& name) const {
    for (const auto& g : groups)
        if (g.name == name) return g;
    throw ValidationError("posterior has no parameter group '" + name + "'");
}

std::size_t PosteriorModel::stock_index(const std::string& stock) const {
    const auto it = std::find(stocks.begin(), stocks.end(), stock);
    if (it == stocks.end()) throw NotFoundError("unknown stock '" + stock + "'");
    return static_cast<std::size_t>(it - stocks.begin());
}

lh::Parameters PosteriorModel::parameters(std::span<const double> row) const {
    if (row.size() != n_params()) throw InternalError("draw row does not match the stored layout");
    const std::size_t I = stocks.size(), A = static_cast<std::size_t>(ages.max_sea_age);
    const std::size_t n_smolt = n_years + static_cast<std::size_t>(ages.smolt_delay);
    const auto at = [&](const char* name, std::size_t k) { return row[group(name).offset + k]; };
    lh::Parameters p;
    for (std::size_t i = 0; i < I; ++i) p.stocks.push_back({at("alpha", i), at("beta", i), fecundity[i], female_prop[i]});
    for (std::size_t f = 0; f < fisheries.size(); ++f) p.q.push_back(at("q", f));
    for (std::size_t a = 0; a + 1 < A; ++a) p.maturation.L.push_back(at("maturation", a));
    p.maturation.L.push_back(1.0);
    p.sigma_R = at("sigma_R", 0);
    p.initial_sea.assign(I, std::vector<double>(A));
    p.smolts.assign(I, std::vector<double>(n_smolt));
    for (std::size_t i = 0; i < I; ++i) {
        for (std::size_t a = 0; a < A; ++a) p.initial_sea[i][a] = at("initial_sea", i * A + a);
        for (std::size_t t = 0; t < n_smolt; ++t) p.smolts[i][t] = at("smolts", i * n_smolt + t);
    }
    for (std::size_t t = 0; t < n_years; ++t) p.s74.push_back(at("s74", t));
    const auto z = [&](const char* name) {
        std::vector<std::vector<std::vector<double>>> out(n_years, std::vector<std::vector<double>>(I, std::vector<double>(A)));
        for (std::size_t t = 0; t < n_years; ++t)
            for (std::size_t i = 0; i < I; ++i)
                for (std::size_t k = 0; k < A; ++k) out[t][i][k] = at(name, (t * I + i) * A + k);
        return out;
    };
    if (sigma_N > 0.0) p.z_sea = z("z_sea");
    if (sigma_S > 0.0) p.z_spawn = z("z_spawn");
    return p;
}

json to_json(const PosteriorModel& m) {
    json fisheries = json::array();
    for (const auto& f : m.fisheries)
        fisheries.push_back({{"id", f.id},
                             {"selectivity", f.selectivity},
                             {"reporting_rate", f.reporting_rate},
                             {"obs_sd", f.obs_sd}});
    json m74 = json::array();
    for (const auto& y : m.m74) m74.push_back({{"year", y.year}, {"survival", beta_json(y.survival)}});
    json groups = json::array();
    for (const auto& g : m.groups)
        groups.push_back({{"name", g.name},
                          {"offset", g.offset},
                          {"size", g.size},
                          {"transform", to_string(g.transform)},
                          {"labels", g.labels}});
    return {{"schema", kSchema},
            {"first_year", m.first_year},
            {"n_years", m.n_years},
            {"max_sea_age", m.ages.max_sea_age},
            {"smolt_delay", m.ages.smolt_delay},
            {"stocks", m.stocks},
            {"fecundity", m.fecundity},
            {"female_prop", m.female_prop},
            {"natural_mortality", m.natural_mortality},
            {"fisheries", fisheries},
            {"effort", m.effort},
            {"sigma_N", m.sigma_N},
            {"sigma_S", m.sigma_S},
            {"m74", m74},
            {"parameters", groups}};
}

PosteriorModel model_from_json(const json& j) {
    try {
        if (j.at("schema") != kSchema) throw ValidationError("model.json: unsupported schema");
        PosteriorModel m;
        m.first_year = j.at("first_year");
        m.n_years = j.at("n_years");
        m.ages = {j.at("max_sea_age").get<int>(), j.at("smolt_delay").get<int>()};
        m.stocks = j.at("stocks").get<std::vector<std::string>>();
        m.fecundity = j.at("fecundity").get<std::vector<std::vector<double>>>();
        m.female_prop = j.at("female_prop").get<std::vector<double>>();
        m.natural_mortality = j.at("natural_mortality").get<std::vector<double>>();
        for (const auto& f : j.at("fisheries")) {
            obs::FisheryDef d;
            d.id = f.at("id");
            d.selectivity = f.at("selectivity").get<std::vector<double>>();
            d.reporting_rate = f.at("reporting_rate");
            d.obs_sd = f.at("obs_sd");
            m.fisheries.push_back(d);
        }
        m.effort = j.at("effort").get<std::vector<std::vector<double>>>();
        m.sigma_N = j.at("sigma_N");
        m.sigma_S = j.at("sigma_S");
        for (const auto& y : j.at("m74")) {
            priors::M74YearPosterior p;
            p.year = y.at("year");
            p.survival = beta_from(y.at("survival"));
            p.mortality = {p.survival.b, p.survival.a};
            m.m74.push_back(p);
        }
        for (const auto& g : j.at("parameters"))
            m.groups.push_back({g.at("name"), g.at("offset"), g.at("size"), transform_from_string(g.at("transform")),
                                g.at("labels").get<std::vector<std::string>>()});
        return m;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("model.json: ") + e.what());
    }
}

json diagnostics_json(const mcmc::DiagnosticsReport& d) {
    json params = json::array();
    for (const auto& p : d.params)
        params.push_back({{"name", p.name},
                          {"mean", p.mean},
                          {"sd", p.sd},
                          {"rhat", p.rhat},
                          {"ess", p.ess},
                          {"flagged", p.flagged}});
    return {{"schema", kSchema},
            {"threshold", d.threshold},
            {"passed", d.passed()},
            {"max_rhat", d.max_rhat()},
            {"min_ess", d.min_ess()},
            {"params", params}};
}

std::vector<std::string> write_posterior(const fs::path& dir, const PosteriorModel& model,
                                         const lh::LifeHistoryModel& lh_model,
                                         const std::vector<mcmc::PosteriorChain>& chains,
                                         const mcmc::DiagnosticsReport& diagnostics) {
    std::vector<std::string> written;
    io::write_text(dir / "model.json", to_json(model).dump(2) + "\n");
    written.push_back("model.json");
    const auto names = lh_model.registry().names();
    for (std::size_t k = 0; k < chains.size(); ++k) {
        io::CsvTable t;
        t.header.push_back("log_posterior");
        t.header.insert(t.header.end(), names.begin(), names.end());
        std::vector<double> x(names.size());
        for (std::size_t r = 0; r < chains[k].n_draws(); ++r) {
            lh_model.registry().to_constrained(chains[k].draws.row(r), x);
            std::vector<std::string> cells{io::format_double(chains[k].log_posterior[r])};
            for (double v : x) cells.push_back(io::format_double(v));
            t.rows.push_back(std::move(cells));
        }
        io::write_csv(dir / chain_file(k), t);
        written.push_back(chain_file(k));
    }
    io::write_text(dir / "diagnostics.json", diagnostics_json(diagnostics).dump(2) + "\n");
    written.push_back("diagnostics.json");
    return written;
}

PosteriorStore PosteriorStore::load(const fs::path& run_dir) {
    PosteriorStore s;
    s.dir_ = run_dir;
    const fs::path lh_dir = run_dir / "life_history";
    if (!fs::exists(lh_dir / "model.json")) throw IoError("no life-history posterior under " + run_dir.string());
    try {
        s.model_ = model_from_json(json::parse(io::read_text(lh_dir / "model.json")));
        s.diagnostics_ = json::parse(io::read_text(lh_dir / "diagnostics.json"));
        if (fs::exists(run_dir / "manifest.json")) s.manifest_ = json::parse(io::read_text(run_dir / "manifest.json"));
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("posterior files: ") + e.what());
    }
    const std::size_t P = s.model_.n_params();
    std::vector<double> data;
    for (std::size_t k = 0; fs::exists(lh_dir / chain_file(k)); ++k) {
        const auto t = io::read_csv(lh_dir / chain_file(k));
        if (t.header.size() != P + 1) throw ValidationError(chain_file(k) + ": column count does not match model.json");
        if (k == 0) s.names_.assign(t.header.begin() + 1, t.header.end());
        for (const auto& r : t.rows)
            for (std::size_t c = 1; c < r.size(); ++c) data.push_back(io::parse_double(r[c], chain_file(k)));
        ++s.n_chains_;
    }
    if (s.n_chains_ == 0 || data.empty()) throw ValidationError("posterior has no draws");
    s.draws_ = mcmc::DrawMatrix(data.size() / P, P);
    s.draws_.data = std::move(data);
    return s;
}

std::vector<double> PosteriorStore::column(const std::string& name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw NotFoundError("unknown parameter '" + name + "'");
    return draws_.column(static_cast<std::size_t>(it - names_.begin()));
}

double quantile(std::vector<double> v, double p) {
    if (v.empty()) throw ValidationError("quantile of an empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("quantile probability must be in [0, 1]");
    std::sort(v.begin(), v.end());
    const double h = static_cast<double>(v.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

}  // namespace salmon::post
