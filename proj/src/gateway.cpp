#include "semtool/gateway.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>

#include <httplib.h>

#include "semtool/errors.hpp"
#include "semtool/pipeline.hpp"

namespace semtool {

using nlohmann::json;

namespace {

Gateway::Response json_response(int status, const json& body) {
    Gateway::Response r;
    r.status = status;
    r.body = body.dump();
    r.headers["Content-Type"] = "application/json";
    return r;
}

Gateway::Response error_response(int status, const std::string& message) {
    return json_response(status, json{{"error", message}});
}

std::string threshold_key(const std::optional<double>& t) {
    if (!t) return "none";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", *t);
    return buf;
}

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace

// ---------------------------------------------------------------------------
// ResponseCache
// ---------------------------------------------------------------------------

std::optional<std::string> ResponseCache::get(const std::string& key) {
    std::lock_guard lock(mutex_);
    const auto it = lookup_.find(key);
    if (it == lookup_.end()) return std::nullopt;
    order_.splice(order_.begin(), order_, it->second);
    return it->second->second;
}

void ResponseCache::put(const std::string& key, std::string body) {
    std::lock_guard lock(mutex_);
    if (capacity_ == 0) return;
    if (const auto it = lookup_.find(key); it != lookup_.end()) {
        it->second->second = std::move(body);
        order_.splice(order_.begin(), order_, it->second);
        return;
    }
    order_.emplace_front(key, std::move(body));
    lookup_[key] = order_.begin();
    while (order_.size() > capacity_) {
        lookup_.erase(order_.back().first);
        order_.pop_back();
    }
}

void ResponseCache::clear() {
    std::lock_guard lock(mutex_);
    order_.clear();
    lookup_.clear();
}

std::size_t ResponseCache::size() const {
    std::lock_guard lock(mutex_);
    return order_.size();
}

json llm_tool_definition(const IndexedTool& tool) {
    const auto raw = json::parse(tool.raw_schema_text, nullptr, false);
    json def;
    def["name"] = tool.tool_key.qualified();
    def["description"] = raw.is_object() && raw.contains("description") && raw["description"].is_string()
                             ? raw["description"]
                             : json("");
    if (raw.is_object() && raw.contains("inputSchema") && raw["inputSchema"].is_object()) {
        def["input_schema"] = raw["inputSchema"];
    } else {
        def["input_schema"] = {{"type", "object"}, {"properties", json::object()}};
    }
    return def;
}

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

struct Gateway::Server {
    httplib::Server http;
    int port = -1;
};

Gateway::Gateway(GatewayConfig config, std::unique_ptr<Embedder> embedder, TransportFactory factory)
    : config_(std::move(config)),
      embedder_(embedder ? std::move(embedder) : make_embedder(config_.provider)),
      factory_(std::move(factory)),
      cache_(config_.cache_enabled ? config_.cache_capacity : 0) {
    if (config_.default_k < 1) throw UsageError("default_k must be at least 1");
    if (!config_.auth_token_env.empty()) {
        const char* token = std::getenv(config_.auth_token_env.c_str());
        if (token == nullptr || *token == '\0') {
            throw UsageError("environment variable " + config_.auth_token_env + " is not set");
        }
        auth_token_ = token;
    }
    snapshot_ = build_snapshot();
}

Gateway::~Gateway() { stop(); }

std::shared_ptr<const IndexSnapshot> Gateway::build_snapshot() const {
    auto built = build_from_config(config_, *embedder_, now_ms(), factory_);
    return std::make_shared<const IndexSnapshot>(std::move(built.snapshot));
}

std::shared_ptr<const IndexSnapshot> Gateway::snapshot() const {
    std::lock_guard lock(snapshot_mutex_);
    return snapshot_;
}

void Gateway::publish(std::shared_ptr<const IndexSnapshot> next) {
    {
        std::lock_guard lock(snapshot_mutex_);
        snapshot_ = std::move(next);
    }
    // Keys carry the catalog hash, so stale entries could never match a new
    // catalog; clearing just frees the memory.
    cache_.clear();
}

bool Gateway::authorized(const std::string& header) const {
    return auth_token_.empty() || header == "Bearer " + auth_token_;
}

Gateway::Response Gateway::handle_select(const std::string& request_body) {
    const auto req = json::parse(request_body, nullptr, false);
    if (req.is_discarded() || !req.is_object()) return error_response(400, "request body must be a JSON object");
    if (!req.contains("query") || !req["query"].is_string()) return error_response(400, "'query' must be a string");
    const auto query = req["query"].get<std::string>();
    if (query.find_first_not_of(" \t\r\n") == std::string::npos) {
        return error_response(400, "'query' must not be empty");
    }

    std::int64_t k = config_.default_k;
    if (req.contains("k") && !req["k"].is_null()) {
        if (!req["k"].is_number_integer()) return error_response(400, "'k' must be an integer");
        k = req["k"].get<std::int64_t>();
        if (k < 1) return error_response(400, "'k' must be at least 1");
    }
    std::optional<double> threshold = config_.default_threshold;
    if (req.contains("threshold")) {
        if (req["threshold"].is_null()) {
            threshold.reset();
        } else if (req["threshold"].is_number()) {
            threshold = req["threshold"].get<double>();
        } else {
            return error_response(400, "'threshold' must be a number");
        }
    }

    if (config_.discovery == DiscoveryMode::Strict && reindexing_.load()) {
        return error_response(503, "index is being rebuilt");
    }

    const auto snap = snapshot();
    const auto key = snap->catalog_hash + '\0' + snap->provider_id + '\0' + query + '\0' + std::to_string(k) +
                     '\0' + threshold_key(threshold);
    if (auto cached = cache_.get(key)) {
        Response r;
        r.body = std::move(*cached);
        r.headers["Content-Type"] = "application/json";
        r.headers["X-Cache"] = "hit";
        return r;
    }

    Selection sel;
    try {
        sel = select_tools(*snap, *embedder_, query, k, threshold);
    } catch (const UsageError& e) {
        return error_response(400, e.what());
    } catch (const std::exception& e) {
        return error_response(500, e.what());
    }

    json body;
    body["query"] = sel.query_text;
    body["k"] = sel.k_requested;
    body["threshold"] = sel.threshold ? json(*sel.threshold) : json(nullptr);
    body["catalog_hash"] = sel.catalog_hash;
    body["tools"] = json::array();
    body["scores"] = json::array();
    for (const auto& r : sel.ranked) {
        const auto* entry = snap->find(r.tool_key);
        body["tools"].push_back(llm_tool_definition(*entry));
        body["scores"].push_back({{"name", r.tool_key.qualified()}, {"score", r.score}});
    }
    body["selected_tokens"] = sel.selected_tokens;
    body["baseline_tokens"] = sel.baseline_tokens;
    body["trr"] = sel.trr;
    body["fallback_applied"] = sel.fallback_applied;
    body["latency_ms"] = sel.retrieval_latency_ms;

    auto response = json_response(200, body);
    response.headers["X-Cache"] = "miss";
    cache_.put(key, response.body);
    return response;
}

Gateway::Response Gateway::handle_reindex() {
    std::lock_guard serial(reindex_mutex_);
    reindexing_.store(true);
    std::shared_ptr<const IndexSnapshot> next;
    try {
        next = build_snapshot();
    } catch (const std::exception& e) {
        reindexing_.store(false);
        return json_response(502, json{{"rebuilt", false}, {"error", e.what()}});
    }
    const auto hash = next->catalog_hash;
    const auto size = next->entries.size();
    publish(std::move(next));
    reindexing_.store(false);
    return json_response(200, json{{"rebuilt", true}, {"catalog_hash", hash}, {"catalog_size", size}});
}

Gateway::Response Gateway::handle_health() const {
    const auto snap = snapshot();
    return json_response(200, json{{"catalog_size", snap->entries.size()},
                                   {"catalog_hash", snap->catalog_hash},
                                   {"provider_id", snap->provider_id},
                                   {"dimension", snap->dimension},
                                   {"reindexing", reindexing_.load()}});
}

Gateway::Response Gateway::handle_tools() const {
    const auto snap = snapshot();
    json tools = json::array();
    for (const auto& e : snap->entries) {
        auto def = llm_tool_definition(e);
        def["schema_tokens"] = e.schema_token_count;
        tools.push_back(std::move(def));
    }
    return json_response(200, json{{"catalog_hash", snap->catalog_hash}, {"tools", std::move(tools)}});
}

int Gateway::bind() {
    if (!server_) server_ = std::make_unique<Server>();
    auto& http = server_->http;

    auto reply = [](httplib::Response& res, const Response& r) {
        res.status = r.status;
        for (const auto& [k, v] : r.headers) {
            if (k != "Content-Type") res.set_header(k, v);
        }
        res.set_content(r.body, "application/json");
    };
    auto guarded = [this, reply](auto handler) {
        return [this, reply, handler](const httplib::Request& req, httplib::Response& res) {
            if (!authorized(req.get_header_value("Authorization"))) {
                reply(res, error_response(401, "missing or invalid bearer token"));
                return;
            }
            reply(res, handler(req));
        };
    };

    http.Post("/v1/select", guarded([this](const httplib::Request& req) { return handle_select(req.body); }));
    http.Post("/v1/reindex", guarded([this](const httplib::Request&) { return handle_reindex(); }));
    http.Get("/v1/tools", guarded([this](const httplib::Request&) { return handle_tools(); }));
    http.Get("/v1/health", [this, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, handle_health());
    });

    int port = config_.port;
    if (port == 0) {
        port = http.bind_to_any_port(config_.host);
    } else if (!http.bind_to_port(config_.host, port)) {
        port = -1;
    }
    if (port < 0) {
        throw Error("cannot bind " + config_.host + ":" + std::to_string(config_.port));
    }
    server_->port = port;
    return port;
}

void Gateway::listen_after_bind() {
    if (!server_ || server_->port < 0) throw UsageError("gateway is not bound");
    server_->http.listen_after_bind();
}

void Gateway::serve() {
    bind();
    listen_after_bind();
}

void Gateway::stop() {
    if (server_) server_->http.stop();
}

}  // namespace semtool
