#include "salmon/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "salmon/errors.hpp"
#include "salmon/io.hpp"
#include "salmon/mcmc.hpp"
#include "salmon/posterior.hpp"
#include "salmon/simulator.hpp"

namespace salmon::pipeline {

namespace {

const std::set<std::pair<std::string, std::string>>& allowed_edges() {
    static const std::set<std::pair<std::string, std::string>> edges{
        {"B", "C"},
        {"A", "life_history"},
        {"B", "life_history"},
        {"C", "life_history"},
        {"D", "life_history"},
        {"E", "life_history"}};
    return edges;
}

// ---- json helpers -------------------------------------------------------------------

template <class T>
T get(const json& j, const char* key, const std::string& path) {
    if (!j.contains(key)) throw ValidationError(path + "." + key + ": required");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(path + "." + key + ": wrong type");
    }
}

template <class T>
T get_or(const json& j, const char* key, const std::string& path, T fallback) {
    return j.contains(key) ? get<T>(j, key, path) : fallback;
}

lh::NormalPrior normal_from(const json& j, const std::string& path) {
    return {get<double>(j, "mean", path), get<double>(j, "sd", path)};
}
json normal_json(const lh::NormalPrior& p) { return {{"mean", p.mean}, {"sd", p.sd}}; }

priors::BetaParams beta_from(const json& j, const std::string& path) {
    return {get<double>(j, "a", path), get<double>(j, "b", path)};
}
json beta_json(const priors::BetaParams& b) { return {{"a", b.a}, {"b", b.b}}; }

void read_mcmc(const json& j, const std::string& path, std::size_t& chains, std::size_t& warmup, std::size_t& iter,
               std::size_t& thin, double& rhat) {
    chains = get_or<std::size_t>(j, "chains", path, chains);
    const std::size_t total = get_or<std::size_t>(j, "iterations", path, warmup + iter);
    warmup = get_or<std::size_t>(j, "warmup", path, j.contains("iterations") ? total / 2 : warmup);
    if (warmup >= total) throw ValidationError(path + ".warmup: must be below iterations");
    iter = total - warmup;
    thin = get_or<std::size_t>(j, "thin", path, thin);
    rhat = get_or<double>(j, "rhat_threshold", path, rhat);
}

// ---- stage helpers ------------------------------------------------------------------

std::string label(const std::string& stage, const std::string& what) { return "stage " + stage + ": " + what; }

io::CsvTable smolt_draw_table(const std::vector<river::SmoltPosterior>& posts) {
    io::CsvTable t{{"river", "year", "value"}, {}};
    for (const auto& p : posts)
        for (double v : p.draws) t.rows.push_back({p.river, std::to_string(p.year), io::format_double(v)});
    return t;
}

json approx_json(const std::vector<river::SmoltPosterior>& posts) {
    json out = json::array();
    for (const auto& p : posts) {
        const auto a = river::approximate_smolt_likelihood(p);
        out.push_back({{"river", p.river}, {"year", p.year}, {"log_mean", a.mu}, {"log_sd", a.sd}, {"warning", p.warning}});
    }
    return out;
}

struct StageOutputs {
    std::map<std::string, priors::LognormalPrior> pspc;     // A
    std::vector<river::SmoltPosterior> traps;               // B
    std::optional<river::RiverModelFit> river_fit;          // C
    std::optional<priors::SRPredictive> sr;                 // D
    std::vector<priors::M74YearPosterior> m74;              // E
    std::vector<std::string> files;                         // relative to out_dir
    json fallbacks = json::array();
};

void record(StageOutputs& st, const fs::path& out_dir, const fs::path& rel, const std::string& text) {
    io::write_text(out_dir / rel, text);
    st.files.push_back(rel.generic_string());
}

lh::LifeHistorySpec assemble_spec(const PipelineConfig& c, const io::DataBundle& bundle, StageOutputs& st,
                                  json& prior_report) {
    const auto& lhb = c.stage("life_history");
    const auto bound = [&](const std::string& s) {
        return std::find(lhb.inputs.begin(), lhb.inputs.end(), s) != lhb.inputs.end();
    };
    const std::size_t I = c.stocks.size(), A = static_cast<std::size_t>(c.ages.max_sea_age);
    const auto T = static_cast<std::size_t>(c.ages.smolt_delay);

    lh::LifeHistorySpec s;
    s.first_year = c.first_year;
    s.n_years = c.n_years;
    s.ages = c.ages;
    for (const auto& k : c.stocks) {
        s.stocks.push_back(k.name);
        s.fecundity.push_back(k.fecundity);
        s.female_prop.push_back(k.female_prop);
    }
    s.natural_mortality = c.natural_mortality;
    s.fisheries = c.fisheries;
    s.log_q = c.log_q;
    s.maturation = c.maturation;
    s.log_sigma_R = c.log_sigma_R;
    s.sigma_N = c.sigma_N;
    s.sigma_S = c.sigma_S;
    s.catch_floor = c.catch_floor;
    s.data = bundle.data;
    s.data.smolts.clear();

    // Smolt likelihood approximations: the river model where bound, else the trap posteriors.
    const bool use_c = bound("C") && st.river_fit.has_value();
    const bool use_b = bound("B");
    std::vector<std::size_t> n_approx(I, 0);
    json smolt_sources = json::array();
    for (std::size_t i = 0; i < I; ++i)
        for (std::size_t t = 0; t < c.n_years; ++t) {
            const int year = c.first_year + static_cast<int>(t);
            const river::SmoltPosterior* p = nullptr;
            std::string source;
            if (use_c) {
                p = st.river_fit->find(s.stocks[i], year);
                source = "C";
            }
            if (!p && use_b)
                for (const auto& tp : st.traps)
                    if (tp.river == s.stocks[i] && tp.year == year) {
                        p = &tp;
                        source = "B";
                    }
            if (!p) continue;
            auto approx = river::approximate_smolt_likelihood(*p);
            approx.stock = s.stocks[i];
            approx.year = year;
            s.data.smolts.push_back(approx);
            ++n_approx[i];
            smolt_sources.push_back({{"stock", s.stocks[i]}, {"year", year}, {"source", source},
                                     {"log_mean", approx.mu}, {"log_sd", approx.sd}});
        }

    // Stock-recruit priors: capacity from A, productivity from D, defaults otherwise.
    json sr_report = json::array();
    for (std::size_t i = 0; i < I; ++i) {
        lh::SRPrior p = c.sr_default;
        std::string source = "default";
        if (bound("D") && st.sr) {
            p.log_alpha = {st.sr->mean[0], st.sr->sd[0]};
            p.log_beta = {st.sr->mean[1], st.sr->sd[1]};
            p.corr = st.sr->corr;
            source = "D";
        }
        const auto a = st.pspc.find(s.stocks[i]);
        if (bound("A") && a != st.pspc.end()) {
            // capacity = 1 / beta, so log beta = -log capacity
            p.log_beta = {-a->second.mu, a->second.sd};
            p.corr = 0.0;
            source = source == "D" ? "A+D" : "A+default";
        }
        if (source == "default" || source == "A+default")
            st.fallbacks.push_back({{"stage", "D"}, {"stock", s.stocks[i]}, {"used", "sr_default"}});
        if (bound("A") && a == st.pspc.end())
            st.fallbacks.push_back({{"stage", "A"}, {"stock", s.stocks[i]}, {"used", source}});
        p.source = source;
        s.sr.push_back(p);
        sr_report.push_back({{"stock", s.stocks[i]},
                             {"source", source},
                             {"log_alpha", normal_json(p.log_alpha)},
                             {"log_beta", normal_json(p.log_beta)},
                             {"corr", p.corr}});
    }

    // M74 survival per year.
    if (bound("E") && !st.m74.empty()) {
        for (const auto& y : st.m74) s.m74.push_back(y.survival);
    } else {
        s.m74.assign(c.n_years, c.m74_default);
        st.fallbacks.push_back({{"stage", "E"}, {"used", "m74_default"}});
        st.m74.clear();
        for (std::size_t t = 0; t < c.n_years; ++t)
            st.m74.push_back({c.first_year + static_cast<int>(t), {c.m74_default.b, c.m74_default.a}, c.m74_default});
    }

    // Initial state: smolts near the stock's smolt information, sea-ages by survival.
    double all_sum = 0.0, all_n = 0.0;
    for (const auto& a : s.data.smolts) {
        all_sum += a.mu;
        all_n += 1.0;
    }
    double mean_s74 = 0.0;
    for (const auto& b : s.m74) mean_s74 += b.mean() / static_cast<double>(s.m74.size());
    json init_report = json::array();
    for (std::size_t i = 0; i < I; ++i) {
        double centre = c.initial_log_smolts;
        if (n_approx[i] > 0) {
            double sum = 0.0;
            for (const auto& a : s.data.smolts)
                if (a.stock == s.stocks[i]) sum += a.mu;
            centre = sum / static_cast<double>(n_approx[i]);
        } else if (all_n > 0.0) {
            centre = all_sum / all_n;
            st.fallbacks.push_back({{"stage", "initial_state"}, {"stock", s.stocks[i]}, {"used", "mean of all smolt estimates"}});
        } else {
            st.fallbacks.push_back({{"stage", "initial_state"}, {"stock", s.stocks[i]}, {"used", "initial_log_smolts"}});
        }
        s.log_initial_smolts.push_back(std::vector<lh::NormalPrior>(T, {centre, c.initial_state_sd}));
        std::vector<lh::NormalPrior> sea;
        double n = centre - c.natural_mortality[0] + std::log(mean_s74);
        for (std::size_t a = 0; a < A; ++a) {
            sea.push_back({n, c.initial_state_sd});
            if (a + 1 < A) n += std::log(1.0 - c.maturation[a].mean()) - c.natural_mortality[a + 1];
        }
        s.log_initial_sea.push_back(sea);
        init_report.push_back({{"stock", s.stocks[i]}, {"log_smolts", centre}, {"log_sea_age_1", sea[0].mean},
                               {"sd", c.initial_state_sd}});
    }

    prior_report = {{"schema", post::kSchema},
                    {"stock_recruit", sr_report},
                    {"smolt_likelihoods", smolt_sources},
                    {"initial_state", init_report}};
    return s;
}

}  // namespace

// ---- configuration ------------------------------------------------------------------

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names{"A", "B", "C", "D", "E", "life_history"};
    return names;
}

std::size_t McmcConfig::n_warmup() const {
    return static_cast<std::size_t>(std::floor(static_cast<double>(iterations) * warmup_fraction));
}
std::size_t McmcConfig::n_kept() const { return iterations - n_warmup(); }

bool PipelineConfig::has_stage(const std::string& name) const {
    return std::any_of(stages.begin(), stages.end(), [&](const auto& s) { return s.name == name; });
}

const StageBinding& PipelineConfig::stage(const std::string& name) const {
    for (const auto& s : stages)
        if (s.name == name) return s;
    throw ValidationError("stage " + name + " is not configured");
}

std::uint64_t PipelineConfig::stage_seed(const std::string& name) const {
    const auto& names = stage_names();
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw InternalError("unknown stage " + name);
    return mcmc::chain_seed(seed, static_cast<std::size_t>(it - names.begin()) + 1);
}

std::vector<std::string> PipelineConfig::execution_order() const {
    // Kahn's algorithm; ties broken by canonical stage order
    std::map<std::string, std::size_t> indegree;
    for (const auto& s : stages) indegree[s.name] += 0;
    for (const auto& s : stages)
        for (const auto& in : s.inputs) {
            (void)in;
            ++indegree[s.name];
        }
    std::vector<std::string> order;
    std::set<std::string> done;
    while (order.size() < stages.size()) {
        bool progressed = false;
        for (const auto& name : stage_names()) {
            if (!indegree.count(name) || done.count(name) || indegree[name] != 0) continue;
            order.push_back(name);
            done.insert(name);
            for (const auto& s : stages)
                for (const auto& in : s.inputs)
                    if (in == name) --indegree[s.name];
            progressed = true;
            break;
        }
        if (!progressed) throw ValidationError("stage bindings contain a cycle");
    }
    return order;
}

void PipelineConfig::validate() const {
    ages.validate();
    if (n_years == 0) throw ValidationError("config.n_years: must be positive");
    if (stocks.empty()) throw ValidationError("config.stocks: at least one stock required");
    std::set<std::string> names;
    for (const auto& s : stocks)
        if (!names.insert(s.name).second) throw ValidationError("config.stocks: duplicate stock " + s.name);
    if (log_q.size() != fisheries.size()) throw ValidationError("config.fisheries: every fishery needs log_q_prior");
    if (maturation.size() + 1 != static_cast<std::size_t>(ages.max_sea_age))
        throw ValidationError("config.priors.maturation: one Beta prior per sea-age 1..A-1");
    if (!(initial_state_sd > 0.0)) throw ValidationError("config.priors.initial_state_sd: must be positive");
    if (!(life_history.warmup_fraction > 0.0 && life_history.warmup_fraction < 1.0))
        throw ValidationError("config.settings.life_history.warmup_fraction: must be in (0, 1)");
    if (life_history.chains == 0 || life_history.n_kept() == 0 || life_history.thin == 0)
        throw ValidationError("config.settings.life_history: chains, iterations and thin must be positive");

    std::set<std::string> seen;
    for (const auto& s : stages) {
        if (std::find(stage_names().begin(), stage_names().end(), s.name) == stage_names().end())
            throw ValidationError("config.stages: unknown stage '" + s.name + "'");
        if (!seen.insert(s.name).second) throw ValidationError("config.stages: stage " + s.name + " listed twice");
    }
    if (!seen.count("life_history")) throw ValidationError("config.stages: life_history stage required");
    for (const auto& s : stages)
        for (const auto& in : s.inputs) {
            if (!seen.count(in)) throw ValidationError("config.stages." + s.name + ": input " + in + " is not configured");
            if (!allowed_edges().count({in, s.name}))
                throw ValidationError("config.stages." + s.name + ": " + in + " cannot feed " + s.name);
        }
    if (has_stage("C")) {
        const auto& in = stage("C").inputs;
        if (std::find(in.begin(), in.end(), "B") == in.end())
            throw ValidationError("config.stages.C: the river model needs the trap estimates of B");
    }
    execution_order();
}

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ValidationError("config: expected a JSON object");
    if (j.value("schema", std::string(post::kSchema)) != post::kSchema)
        throw ValidationError("config.schema: unsupported version");
    PipelineConfig c;
    const std::string p = "config";
    c.seed = get<std::uint64_t>(j, "seed", p);
    fs::path data = get<std::string>(j, "data_dir", p);
    c.data_dir = data.is_absolute() ? data : fs::weakly_canonical(base_dir / data);
    c.first_year = get<int>(j, "first_year", p);
    c.n_years = get<std::size_t>(j, "n_years", p);
    const auto& ages = j.at("ages");
    c.ages = {get<int>(ages, "max_sea_age", p + ".ages"), get<int>(ages, "smolt_delay", p + ".ages")};
    for (const auto& s : get<json>(j, "stocks", p))
        c.stocks.push_back({get<std::string>(s, "name", p + ".stocks"), get<std::vector<double>>(s, "fecundity", p + ".stocks"),
                            get_or<double>(s, "female_prop", p + ".stocks", 0.5)});
    c.natural_mortality = get<std::vector<double>>(j, "natural_mortality", p);
    for (const auto& f : get<json>(j, "fisheries", p)) {
        const std::string fp = p + ".fisheries";
        obs::FisheryDef d;
        d.id = get<std::string>(f, "id", fp);
        d.selectivity = get<std::vector<double>>(f, "selectivity", fp);
        d.reporting_rate = get_or<double>(f, "reporting_rate", fp, 1.0);
        d.obs_sd = get_or<double>(f, "obs_sd", fp, 0.2);
        c.fisheries.push_back(d);
        c.log_q.push_back(normal_from(get<json>(f, "log_q_prior", fp), fp + "." + d.id + ".log_q_prior"));
    }
    if (j.contains("process")) {
        c.sigma_N = get_or<double>(j["process"], "sigma_N", p + ".process", 0.0);
        c.sigma_S = get_or<double>(j["process"], "sigma_S", p + ".process", 0.0);
    }
    const json pr = j.value("priors", json::object());
    const std::string pp = p + ".priors";
    if (pr.contains("maturation"))
        for (const auto& b : pr["maturation"]) c.maturation.push_back(beta_from(b, pp + ".maturation"));
    else
        c.maturation.assign(static_cast<std::size_t>(std::max(0, c.ages.max_sea_age - 1)), {2.0, 2.0});
    if (pr.contains("log_sigma_R")) c.log_sigma_R = normal_from(pr["log_sigma_R"], pp + ".log_sigma_R");
    if (pr.contains("sr_default")) {
        const auto& s = pr["sr_default"];
        c.sr_default.log_alpha = normal_from(get<json>(s, "log_alpha", pp + ".sr_default"), pp + ".sr_default.log_alpha");
        c.sr_default.log_beta = normal_from(get<json>(s, "log_beta", pp + ".sr_default"), pp + ".sr_default.log_beta");
        c.sr_default.corr = get_or<double>(s, "corr", pp + ".sr_default", 0.0);
    }
    if (pr.contains("m74_default")) c.m74_default = beta_from(pr["m74_default"], pp + ".m74_default");
    c.initial_state_sd = get_or<double>(pr, "initial_state_sd", pp, c.initial_state_sd);
    c.initial_log_smolts = get_or<double>(pr, "initial_log_smolts", pp, c.initial_log_smolts);
    c.catch_floor = get_or<double>(pr, "catch_floor", pp, c.catch_floor);

    for (const auto& s : get<json>(j, "stages", p))
        c.stages.push_back({get<std::string>(s, "name", p + ".stages"),
                            get_or<std::vector<std::string>>(s, "inputs", p + ".stages", {})});

    const json st = j.value("settings", json::object());
    const std::string sp = p + ".settings";
    if (st.contains("B")) {
        const auto& b = st["B"];
        c.run_size_prior.kind = river::run_size_prior_kind(get_or<std::string>(b, "prior", sp + ".B", "log_uniform"));
        if (b.contains("lower") && !b["lower"].is_null()) c.run_size_prior.lower = get<double>(b, "lower", sp + ".B");
        if (b.contains("upper") && !b["upper"].is_null()) c.run_size_prior.upper = get<double>(b, "upper", sp + ".B");
        c.run_size_prior.log_mean = get_or<double>(b, "log_mean", sp + ".B", 0.0);
        c.run_size_prior.log_sd = get_or<double>(b, "log_sd", sp + ".B", 1.0);
        c.trap_draws = get_or<std::size_t>(b, "draws", sp + ".B", c.trap_draws);
    }
    if (st.contains("C")) {
        const auto& r = st["C"];
        const std::string pooling = get_or<std::string>(r, "pooling", sp + ".C", "hierarchical");
        if (pooling != "hierarchical" && pooling != "independent")
            throw ValidationError(sp + ".C.pooling: expected hierarchical or independent");
        c.river.pooling = pooling == "hierarchical" ? river::Pooling::hierarchical : river::Pooling::independent;
        c.river.lag = get_or<int>(r, "lag", sp + ".C", c.river.lag);
        read_mcmc(r, sp + ".C", c.river.n_chains, c.river.n_warmup, c.river.n_iter, c.river.thin, c.river.rhat_threshold);
        c.river.survival_prior_mean = get_or<double>(r, "survival_prior_mean", sp + ".C", c.river.survival_prior_mean);
        c.river.survival_prior_sd = get_or<double>(r, "survival_prior_sd", sp + ".C", c.river.survival_prior_sd);
        c.river.zero_density = get_or<double>(r, "zero_density", sp + ".C", c.river.zero_density);
        c.river.site_sd_floor = get_or<double>(r, "site_sd_floor", sp + ".C", c.river.site_sd_floor);
    }
    if (st.contains("D")) {
        const auto& d = st["D"];
        read_mcmc(d, sp + ".D", c.sr.n_chains, c.sr.n_warmup, c.sr.n_iter, c.sr.thin, c.sr.rhat_threshold);
        c.sr.n_predictive = get_or<std::size_t>(d, "predictive_draws", sp + ".D", c.sr.n_predictive);
    }
    if (st.contains("life_history")) {
        const auto& l = st["life_history"];
        const std::string lp = sp + ".life_history";
        c.life_history.chains = get_or<std::size_t>(l, "chains", lp, c.life_history.chains);
        c.life_history.iterations = get_or<std::size_t>(l, "iterations", lp, c.life_history.iterations);
        c.life_history.warmup_fraction = get_or<double>(l, "warmup_fraction", lp, c.life_history.warmup_fraction);
        c.life_history.thin = get_or<std::size_t>(l, "thin", lp, c.life_history.thin);
        c.life_history.rhat_threshold = get_or<double>(l, "rhat_threshold", lp, c.life_history.rhat_threshold);
    }
    c.validate();
    return c;
}

PipelineConfig load_config(const fs::path& file) {
    json j;
    try {
        j = json::parse(io::read_text(file));
    } catch (const json::parse_error& e) {
        throw ValidationError(file.filename().string() + ": " + e.what());
    }
    return config_from_json(j, file.parent_path().empty() ? fs::current_path() : file.parent_path());
}

json to_json(const PipelineConfig& c) {
    json stocks = json::array();
    for (const auto& s : c.stocks) stocks.push_back({{"name", s.name}, {"fecundity", s.fecundity}, {"female_prop", s.female_prop}});
    json fisheries = json::array();
    for (std::size_t f = 0; f < c.fisheries.size(); ++f)
        fisheries.push_back({{"id", c.fisheries[f].id},
                             {"selectivity", c.fisheries[f].selectivity},
                             {"reporting_rate", c.fisheries[f].reporting_rate},
                             {"obs_sd", c.fisheries[f].obs_sd},
                             {"log_q_prior", normal_json(c.log_q[f])}});
    json maturation = json::array();
    for (const auto& b : c.maturation) maturation.push_back(beta_json(b));
    json stages = json::array();
    for (const auto& s : c.stages) stages.push_back({{"name", s.name}, {"inputs", s.inputs}});
    const char* kinds[] = {"uniform", "log_uniform", "lognormal"};
    json b = {{"prior", kinds[static_cast<int>(c.run_size_prior.kind)]},
              {"lower", c.run_size_prior.lower ? json(*c.run_size_prior.lower) : json(nullptr)},
              {"upper", c.run_size_prior.upper ? json(*c.run_size_prior.upper) : json(nullptr)},
              {"log_mean", c.run_size_prior.log_mean},
              {"log_sd", c.run_size_prior.log_sd},
              {"draws", c.trap_draws}};
    json river = {{"pooling", c.river.pooling == river::Pooling::hierarchical ? "hierarchical" : "independent"},
                  {"lag", c.river.lag},
                  {"chains", c.river.n_chains},
                  {"iterations", c.river.n_warmup + c.river.n_iter},
                  {"warmup", c.river.n_warmup},
                  {"thin", c.river.thin},
                  {"rhat_threshold", c.river.rhat_threshold},
                  {"survival_prior_mean", c.river.survival_prior_mean},
                  {"survival_prior_sd", c.river.survival_prior_sd},
                  {"zero_density", c.river.zero_density},
                  {"site_sd_floor", c.river.site_sd_floor}};
    json sr = {{"chains", c.sr.n_chains},
               {"iterations", c.sr.n_warmup + c.sr.n_iter},
               {"warmup", c.sr.n_warmup},
               {"thin", c.sr.thin},
               {"rhat_threshold", c.sr.rhat_threshold},
               {"predictive_draws", c.sr.n_predictive}};
    json lhs = {{"chains", c.life_history.chains},
                {"iterations", c.life_history.iterations},
                {"warmup_fraction", c.life_history.warmup_fraction},
                {"thin", c.life_history.thin},
                {"rhat_threshold", c.life_history.rhat_threshold}};
    return {{"schema", post::kSchema},
            {"seed", c.seed},
            {"data_dir", c.data_dir.generic_string()},
            {"first_year", c.first_year},
            {"n_years", c.n_years},
            {"ages", {{"max_sea_age", c.ages.max_sea_age}, {"smolt_delay", c.ages.smolt_delay}}},
            {"stocks", stocks},
            {"natural_mortality", c.natural_mortality},
            {"fisheries", fisheries},
            {"process", {{"sigma_N", c.sigma_N}, {"sigma_S", c.sigma_S}}},
            {"priors",
             {{"maturation", maturation},
              {"log_sigma_R", normal_json(c.log_sigma_R)},
              {"sr_default",
               {{"log_alpha", normal_json(c.sr_default.log_alpha)},
                {"log_beta", normal_json(c.sr_default.log_beta)},
                {"corr", c.sr_default.corr}}},
              {"m74_default", beta_json(c.m74_default)},
              {"initial_state_sd", c.initial_state_sd},
              {"initial_log_smolts", c.initial_log_smolts},
              {"catch_floor", c.catch_floor}}},
            {"stages", stages},
            {"settings", {{"B", b}, {"C", river}, {"D", sr}, {"life_history", lhs}}}};
}

PipelineConfig demo_config(const std::string& scale, const fs::path& data_dir) {
    const auto d = sim::make_demo(scale);
    PipelineConfig c;
    c.seed = d.seed;
    c.data_dir = data_dir;
    c.first_year = d.first_year;
    c.n_years = d.n_years;
    c.ages = d.ages;
    for (std::size_t i = 0; i < d.stocks.size(); ++i)
        c.stocks.push_back({d.stocks[i], d.stock_params[i].fecundity, d.stock_params[i].female_prop});
    c.natural_mortality = d.natural_mortality;
    for (const auto& f : d.fisheries) {
        obs::FisheryDef def = f;
        def.q = 1e-4;
        c.fisheries.push_back(def);
        c.log_q.push_back({std::log(1e-4), 1.0});
    }
    c.maturation.assign(static_cast<std::size_t>(d.ages.max_sea_age - 1), {2.0, 2.0});
    c.sr_default.log_alpha = {std::log(250.0), 1.0};
    c.sr_default.log_beta = {std::log(1e-5), 2.0};
    c.stages = {{"A", {}}, {"B", {}}, {"C", {"B"}}, {"D", {}}, {"E", {}}, {"life_history", {"A", "C", "D", "E"}}};
    c.river.lag = d.schedule.parr_lag;
    c.validate();
    return c;
}

// ---- running ------------------------------------------------------------------------

PipelineResult run_pipeline(const PipelineConfig& config, const fs::path& out_dir) {
    config.validate();
    const auto bundle = io::read_bundle(config.data_dir);
    fs::create_directories(out_dir);
    // earlier runs into the same directory must not leave stale chains behind
    for (const char* owned : {"stages", "life_history", "manifest.json"}) fs::remove_all(out_dir / owned);

    json inputs = json::object();
    for (const auto& name : io::data_file_names())
        if (fs::exists(config.data_dir / name)) inputs[name] = io::sha256_file(config.data_dir / name);

    StageOutputs st;
    const auto order = config.execution_order();
    json seeds = json::object();
    for (const auto& s : order) seeds[s] = config.stage_seed(s);

    for (const auto& stage : order) {
        spdlog::info("stage {} started", stage);
        const fs::path dir = fs::path("stages") / stage;
        if (stage == "A") {
            json out = json::array();
            for (const auto& e : bundle.expert) {
                const auto p = priors::fit_quantile_prior(e);
                st.pspc[e.stock] = p;
                out.push_back({{"stock", e.stock}, {"log_mean", p.mu}, {"log_sd", p.sd}});
            }
            record(st, out_dir, dir / "pspc_priors.json", json{{"schema", post::kSchema}, {"stocks", out}}.dump(2) + "\n");
        } else if (stage == "B") {
            const auto seed = config.stage_seed("B");
            for (std::size_t k = 0; k < bundle.traps.size(); ++k)
                st.traps.push_back(river::markrecapture_posterior(bundle.traps[k], config.run_size_prior,
                                                                  config.trap_draws, mcmc::chain_seed(seed, k)));
            for (const auto& t : st.traps)
                if (!t.warning.empty()) spdlog::warn("stage B: {} {}: {}", t.river, t.year, t.warning);
            io::write_csv(out_dir / dir / "smolt_draws.csv", smolt_draw_table(st.traps));
            st.files.push_back((dir / "smolt_draws.csv").generic_string());
            record(st, out_dir, dir / "summary.json",
                   json{{"schema", post::kSchema}, {"smolts", approx_json(st.traps)}}.dump(2) + "\n");
        } else if (stage == "C") {
            auto settings = config.river;
            settings.seed = config.stage_seed("C");
            try {
                st.river_fit = river::fit_river_model(bundle.rivers, bundle.sites, st.traps, settings);
            } catch (const ConvergenceError& e) {
                throw ConvergenceError(label("C", e.what()));
            } catch (const ValidationError& e) {
                throw ValidationError(label("C", e.what()));
            }
            io::write_csv(out_dir / dir / "smolt_draws.csv", smolt_draw_table(st.river_fit->smolts));
            st.files.push_back((dir / "smolt_draws.csv").generic_string());
            record(st, out_dir, dir / "summary.json",
                   json{{"schema", post::kSchema}, {"smolts", approx_json(st.river_fit->smolts)}}.dump(2) + "\n");
            record(st, out_dir, dir / "diagnostics.json", post::diagnostics_json(st.river_fit->diagnostics).dump(2) + "\n");
        } else if (stage == "D") {
            auto settings = config.sr;
            settings.seed = config.stage_seed("D");
            if (bundle.external.empty()) {
                st.fallbacks.push_back({{"stage", "D"}, {"used", "sr_default"}, {"reason", "no external stock-recruit data"}});
                continue;
            }
            priors::SRHyperpriorFit fit;
            try {
                fit = priors::fit_sr_hyperprior(bundle.external, settings);
            } catch (const ConvergenceError& e) {
                throw ConvergenceError(label("D", e.what()));
            }
            st.sr = fit.predictive;
            const auto& pr = fit.predictive;
            record(st, out_dir, dir / "hyperprior.json",
                   json{{"schema", post::kSchema},
                        {"predictive",
                         {{"log_alpha", {{"mean", pr.mean[0]}, {"sd", pr.sd[0]}}},
                          {"log_beta", {{"mean", pr.mean[1]}, {"sd", pr.sd[1]}}},
                          {"corr", pr.corr}}}}
                           .dump(2) + "\n");
            record(st, out_dir, dir / "diagnostics.json", post::diagnostics_json(fit.diagnostics).dump(2) + "\n");
        } else if (stage == "E") {
            st.m74 = priors::fit_m74_series(bundle.m74, config.first_year, config.n_years);
            json out = json::array();
            for (const auto& y : st.m74)
                out.push_back({{"year", y.year}, {"survival", beta_json(y.survival)}, {"mean_survival", y.survival.mean()}});
            record(st, out_dir, dir / "m74.json", json{{"schema", post::kSchema}, {"years", out}}.dump(2) + "\n");
        } else if (stage == "life_history") {
            json prior_report;
            const lh::LifeHistoryModel model(assemble_spec(config, bundle, st, prior_report));
            record(st, out_dir, "life_history/priors.json", prior_report.dump(2) + "\n");
            const auto& m = config.life_history;
            mcmc::ChainSettings cs;
            cs.seed = config.stage_seed("life_history");
            cs.n_warmup = m.n_warmup();
            cs.n_iter = m.n_kept();
            cs.thin = m.thin;
            cs.blocks = model.registry().blocks();
            const auto lp = [&model](std::span<const double> u) { return model.log_posterior(u); };
            const auto chains = mcmc::run_chains(lp, model.initial_points(m.chains, cs.seed), cs, model.registry().names());
            std::vector<mcmc::DrawMatrix> mats;
            for (const auto& ch : chains) mats.push_back(ch.draws);
            const auto diag = mcmc::diagnostics(mats, model.registry().names(), m.rhat_threshold);
            if (!diag.passed()) {
                io::write_text(out_dir / "life_history/diagnostics.json", post::diagnostics_json(diag).dump(2) + "\n");
                std::string flagged;
                for (const auto& f : diag.flagged()) flagged += (flagged.empty() ? "" : ", ") + f;
                throw ConvergenceError(label("life_history", "R-hat above " + io::format_double(m.rhat_threshold) +
                                                                 " for " + flagged));
            }
            const auto pm = post::PosteriorModel::from_spec(model, st.m74);
            for (const auto& f : post::write_posterior(out_dir / "life_history", pm, model, chains, diag))
                st.files.push_back("life_history/" + f);
        }
        spdlog::info("stage {} finished", stage);
    }

    json outputs = json::object();
    std::sort(st.files.begin(), st.files.end());
    for (const auto& f : st.files) outputs[f] = io::sha256_file(out_dir / f);

    PipelineResult res;
    res.order = order;
    res.manifest = {{"schema", post::kSchema},
                    {"software", {{"name", "salmon"}, {"version", kVersion}}},
                    {"config", to_json(config)},
                    {"seed", config.seed},
                    {"stage_order", order},
                    {"stage_seeds", seeds},
                    {"inputs", inputs},
                    {"inputs_digest", io::sha256_hex(inputs.dump())},
                    {"fallbacks", st.fallbacks},
                    {"outputs", outputs}};
    io::write_text(out_dir / "manifest.json", res.manifest.dump(2) + "\n");
    return res;
}

PipelineResult rerun_from_manifest(const fs::path& manifest_file, const fs::path& out_dir) {
    json m;
    try {
        m = json::parse(io::read_text(manifest_file));
    } catch (const json::parse_error& e) {
        throw ValidationError("manifest: " + std::string(e.what()));
    }
    if (!m.contains("config") || !m.contains("inputs")) throw ValidationError("manifest: missing config or inputs");
    const auto config = config_from_json(m["config"], manifest_file.parent_path());
    json now = json::object();
    for (const auto& name : io::data_file_names())
        if (fs::exists(config.data_dir / name)) now[name] = io::sha256_file(config.data_dir / name);
    if (now != m["inputs"]) {
        std::string changed;
        for (const auto& name : io::data_file_names()) {
            const bool a = now.contains(name), b = m["inputs"].contains(name);
            if (a != b || (a && now[name] != m["inputs"][name])) changed += (changed.empty() ? "" : ", ") + name;
        }
        throw ValidationError("manifest: inputs changed since the recorded run: " + changed);
    }
    return run_pipeline(config, out_dir);
}

}  // namespace salmon::pipeline
