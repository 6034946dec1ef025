#include "salmon/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <set>
#include <sstream>
#include <thread>

#include "salmon/errors.hpp"
#include "salmon/io.hpp"

namespace salmon::service {

namespace {

json quantile_summary(const std::vector<double>& v, std::span<const double> levels) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    json q = json::array();
    for (double p : levels) q.push_back(post::quantile(v, p));
    return {{"mean", mean}, {"sd", v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0}, {"quantiles", q}};
}

bool is_latent(const std::string& name) {
    for (const char* prefix : {"smolts[", "initial_sea[", "z_sea[", "z_spawn["})
        if (name.rfind(prefix, 0) == 0) return true;
    return false;
}

// "policy.multipliers.x: message" -> field "policy.multipliers.x"
json error_from(const Error& e) {
    json out = error_payload(e.code(), e.what());
    const std::string msg = e.what();
    const auto colon = msg.find(": ");
    if (colon != std::string::npos && msg.find(' ') > colon && colon > 0)
        out["error"]["field"] = msg.substr(0, colon);
    return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(text);
    while (std::getline(in, cur, sep))
        if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

std::string render(const json& payload) { return payload.dump(2) + "\n"; }

json error_payload(const std::string& code, const std::string& message) {
    return {{"schema", post::kSchema}, {"error", {{"code", code}, {"message", message}}}};
}

std::vector<double> parse_levels(const std::string& text) {
    if (text.empty()) return {decision::kQuantileLevels.begin(), decision::kQuantileLevels.end()};
    std::vector<double> out;
    for (const auto& s : split(text, ',')) {
        const double p = io::parse_double(s, "quantiles");
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("quantiles: " + s + " is outside [0, 1]");
        out.push_back(p);
    }
    if (out.empty()) throw ValidationError("quantiles: no levels given");
    std::sort(out.begin(), out.end());
    return out;
}

Api::Api(post::PosteriorStore store, ServiceSettings settings)
    : store_(std::move(store)), settings_(std::move(settings)) {
    draw_ids_ = decision::select_draws(store_.n_draws(), settings_.n_draws, settings_.seed, settings_.full_draws);
    draws_.reserve(draw_ids_.size());
    for (auto r : draw_ids_) draws_.push_back(store_.model().parameters(store_.row(r)));
}

json Api::health() const {
    return {{"status", "ok"}, {"schema", post::kSchema}};
}

json Api::stocks() const {
    const auto& m = store_.model();
    const auto pspc_levels = std::span<const double>(decision::kQuantileLevels);
    json out = json::array();
    for (std::size_t i = 0; i < m.stocks.size(); ++i) {
        auto beta = store_.column("beta[" + m.stocks[i] + "]");
        for (auto& b : beta) b = 1.0 / b;
        out.push_back({{"stock", m.stocks[i]}, {"pspc", quantile_summary(beta, pspc_levels)}});
    }
    return {{"schema", post::kSchema},
            {"first_year", m.first_year},
            {"n_years", m.n_years},
            {"fisheries", [&] {
                 json f = json::array();
                 for (const auto& d : m.fisheries) f.push_back(d.id);
                 return f;
             }()},
            {"quantile_levels", decision::kQuantileLevels},
            {"stocks", out}};
}

json Api::summary() const {
    const auto levels = std::span<const double>(decision::kQuantileLevels);
    json params = json::object();
    for (const auto& name : store_.names())
        if (!is_latent(name)) params[name] = quantile_summary(store_.column(name), levels);
    const auto& d = store_.diagnostics();
    return {{"schema", post::kSchema},
            {"n_draws", store_.n_draws()},
            {"n_chains", store_.n_chains()},
            {"projection_draws", draw_ids_.size()},
            {"diagnostics",
             {{"max_rhat", d.value("max_rhat", 0.0)},
              {"min_ess", d.value("min_ess", 0.0)},
              {"threshold", d.value("threshold", 0.0)},
              {"passed", d.value("passed", false)}}},
            {"quantile_levels", decision::kQuantileLevels},
            {"parameters", params}};
}

json Api::smolts(const std::string& stock, const std::vector<double>& levels) const {
    const auto& m = store_.model();
    m.stock_index(stock);
    json years = json::array();
    const std::size_t n_smolt = m.n_years + static_cast<std::size_t>(m.ages.smolt_delay);
    for (std::size_t t = 0; t < n_smolt; ++t) {
        const int year = m.first_year + static_cast<int>(t);
        const auto col = store_.column("smolts[" + stock + ":" + std::to_string(year) + "]");
        json q = json::array();
        for (double p : levels) q.push_back(post::quantile(col, p));
        years.push_back({{"year", year}, {"quantiles", q}});
    }
    return {{"schema", post::kSchema}, {"stock", stock}, {"quantile_levels", levels}, {"years", years}};
}

json Api::project(const json& policy) const {
    const auto p = decision::policy_from_json(policy, store_.model().fisheries);
    return decision::to_json(
        decision::project(store_.model(), draws_, draw_ids_, p, settings_.seed, settings_.projection));
}

std::vector<decision::Policy> Api::builtin_policies() const {
    const std::size_t nf = store_.model().fisheries.size();
    return {decision::Policy::uniform("status_quo", 1.0, nf), decision::Policy::uniform("half_effort", 0.5, nf),
            decision::Policy::uniform("moratorium", 0.0, nf)};
}

json Api::compare(const std::vector<std::string>& ids) const {
    const auto builtin = builtin_policies();
    std::vector<decision::Policy> chosen;
    for (const auto& id : ids) {
        const auto it = std::find_if(builtin.begin(), builtin.end(), [&](const auto& p) { return p.name == id; });
        if (it == builtin.end()) throw NotFoundError("ids: unknown policy '" + id + "'");
        chosen.push_back(*it);
    }
    return decision::to_json(compare(std::span<const decision::Policy>(chosen)));
}

std::vector<decision::ProjectionResult> Api::compare(std::span<const decision::Policy> policies) const {
    return decision::compare_policies(store_.model(), draws_, draw_ids_, policies, settings_.seed, settings_.projection);
}

Response Api::handle(const std::string& method, const std::string& path,
                     const std::multimap<std::string, std::string>& query, const std::string& body) const {
    const auto param = [&](const std::string& key) {
        const auto it = query.find(key);
        return it == query.end() ? std::string() : it->second;
    };
    const auto route = [&](const std::string& want, const std::string& p) { return method == want && path == p; };
    try {
        if (route("GET", "/health")) return {200, render(health())};
        if (route("GET", "/stocks")) return {200, render(stocks())};
        if (route("GET", "/posterior/summary")) return {200, render(summary())};
        if (route("GET", "/posterior/smolts")) {
            const auto stock = param("stock");
            if (stock.empty()) throw ValidationError("stock: required");
            return {200, render(smolts(stock, parse_levels(param("quantiles"))))};
        }
        if (route("POST", "/project")) {
            json policy;
            try {
                policy = json::parse(body);
            } catch (const json::parse_error&) {
                throw ValidationError("policy: body is not valid JSON");
            }
            return {200, render(project(policy))};
        }
        if (route("GET", "/policies/compare")) {
            auto ids = split(param("ids"), ',');
            if (ids.empty())
                for (const auto& p : builtin_policies()) ids.push_back(p.name);
            return {200, render(compare(ids))};
        }
        static const std::set<std::string> known{"/health", "/stocks", "/posterior/summary", "/posterior/smolts",
                                                 "/project", "/policies/compare"};
        if (known.count(path)) return {405, render(error_payload("E_METHOD", method + " not allowed on " + path))};
        return {404, render(error_payload("E_NOT_FOUND", "no route " + path))};
    } catch (const NotFoundError& e) {
        return {404, render(error_from(e))};
    } catch (const ValidationError& e) {
        return {400, render(error_from(e))};
    } catch (const DomainError& e) {
        return {400, render(error_from(e))};
    } catch (const Error& e) {
        return {500, render(error_from(e))};
    } catch (const std::exception& e) {
        return {500, render(error_payload("E_INTERNAL", e.what()))};
    }
}

void serve(const Api& api, const std::string& host, int port, std::size_t workers, std::atomic<bool>& stop,
           const std::function<void(int)>& on_listening) {
    httplib::Server server;
    server.new_task_queue = [workers] { return new httplib::ThreadPool(std::max<std::size_t>(1, workers)); };
    const auto handler = [&api](const httplib::Request& req, httplib::Response& res) {
        std::multimap<std::string, std::string> query(req.params.begin(), req.params.end());
        const auto r = api.handle(req.method, req.path, query, req.body);
        res.status = r.status;
        res.set_content(r.body, "application/json");
    };
    for (const char* p : {"/health", "/stocks", "/posterior/summary", "/posterior/smolts", "/policies/compare", "/project"}) {
        server.Get(p, handler);
        server.Post(p, handler);
    }
    server.set_error_handler([&api](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return;
        const auto r = api.handle(req.method, req.path, {}, "");
        res.set_content(r.body, "application/json");
    });
    if (port == 0) {
        port = server.bind_to_any_port(host);
        if (port <= 0) throw IoError("cannot listen on " + host);
    } else if (!server.bind_to_port(host, port)) {
        throw IoError("cannot listen on " + host + ":" + std::to_string(port));
    }
    std::thread watcher([&] {
        while (!stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
        server.stop();
    });
    spdlog::info("serving {} draws on {}:{}", api.draw_ids().size(), host, port);
    if (on_listening) on_listening(port);
    server.listen_after_bind();
    stop.store(true);
    watcher.join();
}

}  // namespace salmon::service
