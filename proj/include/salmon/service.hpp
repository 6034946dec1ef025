#pragma once

// Read-only query and projection API over a fitted run directory. The HTTP server
// and the command-line tools render the same payloads through this class.

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "salmon/decision.hpp"
#include "salmon/posterior.hpp"

namespace salmon::service {

using nlohmann::json;

struct ServiceSettings {
    std::uint64_t seed = 20240601;  // projection seed, fixed for the server's lifetime
    std::size_t n_draws = 1000;     // subsample size unless full_draws
    bool full_draws = false;
    decision::ProjectionSettings projection;
};

struct Response {
    int status = 200;
    std::string body;
};

class Api {
public:
    Api(post::PosteriorStore store, ServiceSettings settings);

    const post::PosteriorStore& store() const { return store_; }
    const ServiceSettings& settings() const { return settings_; }
    const std::vector<std::size_t>& draw_ids() const { return draw_ids_; }

    json health() const;
    json stocks() const;
    json summary() const;
    /// Posterior smolt quantiles per year; throws NotFoundError for an unknown stock.
    json smolts(const std::string& stock, const std::vector<double>& levels) const;
    json project(const json& policy) const;
    json compare(const std::vector<std::string>& ids) const;
    std::vector<decision::ProjectionResult> compare(std::span<const decision::Policy> policies) const;

    /// Built-in policies, addressable by name in compare().
    std::vector<decision::Policy> builtin_policies() const;

    /// Routes one request. Library errors become 400/404 payloads, never exceptions.
    Response handle(const std::string& method, const std::string& path,
                    const std::multimap<std::string, std::string>& query, const std::string& body) const;

private:
    post::PosteriorStore store_;
    ServiceSettings settings_;
    std::vector<std::size_t> draw_ids_;
    std::vector<lh::Parameters> draws_;  // parsed once, in draw_ids_ order
};

/// Exact payload text shared by the server and the CLI.
std::string render(const json& payload);
json error_payload(const std::string& code, const std::string& message);

/// Comma-separated probabilities; defaults to the projection quantile levels when empty.
std::vector<double> parse_levels(const std::string& text);

/// Blocks serving `api` until `stop` becomes true (checked periodically). Port 0 picks a
/// free port; `on_listening` receives the bound port before requests are accepted.
void serve(const Api& api, const std::string& host, int port, std::size_t workers, std::atomic<bool>& stop,
           const std::function<void(int)>& on_listening = {});

}  // namespace salmon::service
