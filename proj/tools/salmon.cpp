// salmon: simulate demo data, fit the staged assessment, inspect diagnostics,
// project policies and serve the results over HTTP.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <csignal>
#include <iostream>
#include <thread>

#include "salmon/errors.hpp"
#include "salmon/io.hpp"
#include "salmon/pipeline.hpp"
#include "salmon/service.hpp"
#include "salmon/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace salmon;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

struct Options {
    std::string scale = "small";
    std::string config;
    std::string manifest;
    std::uint64_t seed = 0;
    std::size_t chains = 0;
    std::size_t iters = 0;
    std::string out;
    std::string posterior_dir;
    bool full_draws = false;
    std::string policy;
    std::vector<std::string> policies;
    std::string ids;
    bool csv = false;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::size_t workers = 4;
    std::size_t n_draws = 1000;
    std::string path;
    std::string stock;
    std::string quantiles;
};

void emit(const std::string& text, const std::string& out) {
    if (out.empty())
        std::cout << text;
    else
        io::write_text(out, text);
}

json read_policy(const fs::path& file) {
    const auto text = io::read_text(file);
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw ValidationError("policy: " + file.string() + " is empty");
    try {
        return json::parse(text);
    } catch (const json::parse_error&) {
        throw ValidationError("policy: " + file.string() + " is not valid JSON");
    }
}

service::Api open_api(const Options& o, bool seed_given) {
    if (o.posterior_dir.empty()) throw ValidationError("--posterior-dir: required");
    service::ServiceSettings s;
    if (seed_given) s.seed = o.seed;
    s.full_draws = o.full_draws;
    s.n_draws = o.n_draws;
    return service::Api(post::PosteriorStore::load(o.posterior_dir), s);
}

int cmd_simulate(const Options& o, bool seed_given) {
    if (o.out.empty()) throw ValidationError("--out: required");
    const auto design = seed_given ? sim::make_demo(o.scale, o.seed) : sim::make_demo(o.scale);
    const auto result = sim::simulate(design);
    const fs::path out = o.out;
    sim::write_simulation(out, result);
    auto config = pipeline::to_json(pipeline::demo_config(o.scale, out / "data"));
    config["data_dir"] = "data";
    io::write_text(out / "config.json", config.dump(2) + "\n");
    std::cout << "wrote " << (out / "data").string() << ", " << (out / "truth").string() << " and "
              << (out / "config.json").string() << "\n";
    return 0;
}

int cmd_fit(const Options& o, bool seed_given) {
    if (o.out.empty()) throw ValidationError("--out: required");
    pipeline::PipelineResult res;
    if (!o.manifest.empty()) {
        if (seed_given || o.chains || o.iters) throw ValidationError("--manifest: cannot be combined with overrides");
        res = pipeline::rerun_from_manifest(o.manifest, o.out);
    } else {
        if (o.config.empty()) throw ValidationError("--config: required");
        auto c = pipeline::load_config(o.config);
        if (seed_given) c.seed = o.seed;
        if (o.chains) {
            c.life_history.chains = o.chains;
            c.river.n_chains = o.chains;
            c.sr.n_chains = o.chains;
        }
        if (o.iters) c.life_history.iterations = o.iters;
        c.validate();
        res = pipeline::run_pipeline(c, o.out);
    }
    std::cout << "stages:";
    for (const auto& s : res.order) std::cout << ' ' << s;
    std::cout << "\nmanifest " << (fs::path(o.out) / "manifest.json").string() << "\n";
    return 0;
}

int cmd_diagnose(const Options& o) {
    if (o.posterior_dir.empty()) throw ValidationError("--posterior-dir: required");
    const fs::path file = fs::path(o.posterior_dir) / "life_history" / "diagnostics.json";
    json d;
    try {
        d = json::parse(io::read_text(file));
    } catch (const json::parse_error&) {
        throw ValidationError(file.string() + ": not valid JSON");
    }
    std::printf("%-32s %10s %10s %10s %10s\n", "parameter", "mean_u", "sd_u", "rhat", "ess");
    for (const auto& p : d.at("params"))
        std::printf("%-32s %10.4g %10.4g %10.4f %10.1f%s\n", p.at("name").get<std::string>().c_str(),
                    p.at("mean").get<double>(), p.at("sd").get<double>(), p.at("rhat").get<double>(),
                    p.at("ess").get<double>(), p.at("flagged").get<bool>() ? "  *" : "");
    const double max_rhat = d.at("max_rhat").get<double>(), threshold = d.at("threshold").get<double>();
    std::printf("max rhat %.4f, min ess %.1f, threshold %.3f\n", max_rhat, d.at("min_ess").get<double>(), threshold);
    if (!d.at("passed").get<bool>())
        throw ConvergenceError("R-hat gate failed: max " + io::format_double(max_rhat) + " above " +
                               io::format_double(threshold));
    return 0;
}

int cmd_project(const Options& o, bool seed_given) {
    if (o.policy.empty()) throw ValidationError("--policy: required");
    const auto api = open_api(o, seed_given);
    emit(service::render(api.project(read_policy(o.policy))), o.out);
    return 0;
}

int cmd_compare(const Options& o, bool seed_given) {
    const auto api = open_api(o, seed_given);
    std::vector<decision::Policy> chosen;
    std::vector<std::string> ids;
    for (std::size_t a = 0, b; a < o.ids.size(); a = b + 1) {
        b = o.ids.find(',', a);
        if (b == std::string::npos) b = o.ids.size();
        if (b > a) ids.push_back(o.ids.substr(a, b - a));
    }
    if (ids.empty() && o.policies.empty())
        for (const auto& p : api.builtin_policies()) ids.push_back(p.name);
    const auto builtin = api.builtin_policies();
    for (const auto& id : ids) {
        const auto it = std::find_if(builtin.begin(), builtin.end(), [&](const auto& p) { return p.name == id; });
        if (it == builtin.end()) throw NotFoundError("ids: unknown policy '" + id + "'");
        chosen.push_back(*it);
    }
    for (const auto& f : o.policies)
        chosen.push_back(decision::policy_from_json(read_policy(f), api.store().model().fisheries));
    const auto table = api.compare(std::span<const decision::Policy>(chosen));
    emit(o.csv ? decision::decision_table_csv(table) : service::render(decision::to_json(table)), o.out);
    return 0;
}

int cmd_query(const Options& o, bool seed_given) {
    const auto api = open_api(o, seed_given);
    std::multimap<std::string, std::string> query;
    if (!o.stock.empty()) query.emplace("stock", o.stock);
    if (!o.quantiles.empty()) query.emplace("quantiles", o.quantiles);
    if (!o.ids.empty()) query.emplace("ids", o.ids);
    const bool post = o.path == "/project";
    const std::string body = post ? read_policy(o.policy).dump() : std::string();
    const auto r = api.handle(post ? "POST" : "GET", o.path, query, body);
    emit(r.body, o.out);
    return r.status == 200 ? 0 : 1;
}

int cmd_serve(const Options& o, bool seed_given) {
    const auto api = open_api(o, seed_given);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    service::serve(api, o.host, o.port, o.workers, g_stop,
                   [](int port) { std::cout << "listening on port " << port << std::endl; });
    std::cout << "stopped\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Staged Bayesian assessment of salmon stocks"};
    app.require_subcommand(1);
    app.set_version_flag("--version", pipeline::kVersion);
    Options o;

    const auto seed_opt = [&](CLI::App* c) {
        return c->add_option("--seed", o.seed, "Random seed")->envname("SALMON_SEED");
    };
    const auto posterior_opts = [&](CLI::App* c) {
        c->add_option("--posterior-dir", o.posterior_dir, "Fitted run directory")->envname("SALMON_POSTERIOR_DIR");
        c->add_flag("--full-draws", o.full_draws, "Project every posterior draw")->envname("SALMON_FULL_DRAWS");
        c->add_option("--draws", o.n_draws, "Projection subsample size")->envname("SALMON_DRAWS");
    };

    auto* simulate = app.add_subcommand("simulate", "Write a synthetic demo dataset and its config");
    simulate->add_option("--scale", o.scale, "small or medium")->check(CLI::IsMember({"small", "medium"}));
    auto* simulate_seed = seed_opt(simulate);
    simulate->add_option("--out", o.out, "Output directory")->envname("SALMON_OUT");

    auto* fit = app.add_subcommand("fit", "Run the staged fit");
    fit->add_option("--config", o.config, "Config file")->envname("SALMON_CONFIG");
    fit->add_option("--manifest", o.manifest, "Re-run a recorded manifest");
    auto* fit_seed = seed_opt(fit);
    fit->add_option("--chains", o.chains, "Chains per MCMC stage")->envname("SALMON_CHAINS");
    fit->add_option("--iters", o.iters, "Life-history iterations per chain, warmup included")->envname("SALMON_ITERS");
    fit->add_option("--out", o.out, "Run directory")->envname("SALMON_OUT");

    auto* diagnose = app.add_subcommand(
        "diagnose", "Print R-hat and ESS on sampler coordinates; fails when the gate fails");
    diagnose->add_option("--posterior-dir", o.posterior_dir, "Fitted run directory")->envname("SALMON_POSTERIOR_DIR");

    auto* project = app.add_subcommand("project", "Project one policy");
    posterior_opts(project);
    auto* project_seed = seed_opt(project);
    project->add_option("--policy", o.policy, "Policy file");
    project->add_option("--out", o.out, "Write the result here instead of stdout");

    auto* compare = app.add_subcommand("compare", "Decision table for several policies");
    posterior_opts(compare);
    auto* compare_seed = seed_opt(compare);
    compare->add_option("--ids", o.ids, "Built-in policies: status_quo, half_effort, moratorium");
    compare->add_option("--policy", o.policies, "Policy files");
    compare->add_flag("--csv", o.csv, "Delimited table instead of JSON");
    compare->add_option("--out", o.out, "Write the result here instead of stdout");

    auto* query = app.add_subcommand("query", "Answer one API request without a server");
    query->add_option("path", o.path, "API path, e.g. /stocks")->required();
    posterior_opts(query);
    auto* query_seed = seed_opt(query);
    query->add_option("--stock", o.stock);
    query->add_option("--quantiles", o.quantiles);
    query->add_option("--ids", o.ids);
    query->add_option("--policy", o.policy, "Policy file for /project");
    query->add_option("--out", o.out, "Write the result here instead of stdout");

    auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
    posterior_opts(serve);
    auto* serve_seed = seed_opt(serve);
    serve->add_option("--host", o.host)->envname("SALMON_HOST");
    serve->add_option("--port", o.port, "0 picks a free port")->envname("SALMON_PORT");
    serve->add_option("--workers", o.workers, "Request worker threads")->envname("SALMON_WORKERS");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "ERROR E_USAGE " << e.what() << "\n";
        return 2;
    }

    spdlog::set_level(spdlog::level::info);
    spdlog::set_pattern("[%l] %v");
    spdlog::flush_on(spdlog::level::info);
    try {
        if (*simulate) return cmd_simulate(o, simulate_seed->count() > 0 || std::getenv("SALMON_SEED"));
        if (*fit) return cmd_fit(o, fit_seed->count() > 0 || std::getenv("SALMON_SEED"));
        if (*diagnose) return cmd_diagnose(o);
        if (*project) return cmd_project(o, project_seed->count() > 0 || std::getenv("SALMON_SEED"));
        if (*compare) return cmd_compare(o, compare_seed->count() > 0 || std::getenv("SALMON_SEED"));
        if (*query) return cmd_query(o, query_seed->count() > 0 || std::getenv("SALMON_SEED"));
        if (*serve) return cmd_serve(o, serve_seed->count() > 0 || std::getenv("SALMON_SEED"));
    } catch (const Error& e) {
        std::cerr << "ERROR " << e.code() << " " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "ERROR E_INTERNAL " << e.what() << "\n";
        return 1;
    }
    return 0;
}
