#include "semtool/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "semtool/errors.hpp"

namespace semtool {

using nlohmann::json;

namespace {

std::string resolve(const std::string& base_dir, const std::string& path) {
    std::filesystem::path p(path);
    if (p.is_absolute() || base_dir.empty()) return path;
    return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

template <typename T>
T get_or(const json& node, const char* key, T fallback) {
    if (!node.contains(key) || node[key].is_null()) return fallback;
    try {
        return node[key].get<T>();
    } catch (const json::exception&) {
        throw UsageError(std::string("config field '") + key + "' has the wrong type");
    }
}

}  // namespace

std::optional<std::size_t> known_model_dimension(const std::string& model) {
    if (model == "text-embedding-ada-002") return 1536;
    if (model == "text-embedding-3-small") return 1536;
    if (model == "text-embedding-3-large") return 3072;
    return std::nullopt;
}

ProviderSpec parse_provider(const json& node) {
    ProviderSpec spec;
    if (node.is_null()) return spec;
    if (!node.is_object()) throw UsageError("config 'provider' must be an object");

    const auto kind = get_or<std::string>(node, "kind", "reference-local");
    if (kind == "reference-local" || kind == "reference") {
        spec.kind = ProviderKind::ReferenceLocal;
        spec.provider_id = get_or<std::string>(node, "id", "reference-local");
        spec.dimension = get_or<std::size_t>(node, "dimension", spec.dimension);
    } else if (kind == "remote-http" || kind == "remote") {
        spec.kind = ProviderKind::RemoteHttp;
        spec.model_name = get_or<std::string>(node, "model", "");
        spec.provider_id = get_or<std::string>(node, "id", spec.model_name);
        spec.url = get_or<std::string>(node, "url", "");
        spec.api_key_env = get_or<std::string>(node, "api_key_env", "");
        spec.batch_size = get_or<std::size_t>(node, "batch_size", spec.batch_size);
        spec.max_in_flight = get_or<std::size_t>(node, "max_in_flight", spec.max_in_flight);
        spec.max_retries = get_or<unsigned>(node, "max_retries", spec.max_retries);
        spec.timeout = std::chrono::milliseconds(get_or<std::int64_t>(node, "timeout_ms", spec.timeout.count()));

        const auto known = known_model_dimension(spec.model_name);
        if (node.contains("dimension")) {
            spec.dimension = get_or<std::size_t>(node, "dimension", 0);
            if (known && *known != spec.dimension) {
                throw UsageError("model " + spec.model_name + " produces " + std::to_string(*known) +
                                 "-dimensional vectors, config says " + std::to_string(spec.dimension));
            }
        } else if (known) {
            spec.dimension = *known;
        } else {
            throw UsageError("remote provider needs a 'dimension' for model '" + spec.model_name + "'");
        }
        if (spec.url.empty() || spec.model_name.empty()) {
            throw UsageError("remote provider needs 'url' and 'model'");
        }
    } else {
        throw UsageError("unknown provider kind '" + kind + "'");
    }
    if (spec.dimension == 0) throw UsageError("provider dimension must be positive");
    if (spec.provider_id.empty()) throw UsageError("provider id must not be empty");
    return spec;
}

GatewayConfig parse_config(const std::string& json_text, const std::string& base_dir) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw UsageError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw UsageError("config must be a JSON object");

    GatewayConfig cfg;
    if (doc.contains("servers")) {
        if (!doc["servers"].is_array()) throw UsageError("config 'servers' must be an array");
        for (const auto& s : doc["servers"]) {
            if (!s.is_object()) throw UsageError("each server entry must be an object");
            ServerEndpoint ep;
            ep.server_id = get_or<std::string>(s, "id", "");
            ep.transport = parse_transport_kind(get_or<std::string>(s, "transport", "stdio"));
            ep.address = get_or<std::string>(s, "address", "");
            ep.display_name = get_or<std::string>(s, "display_name", ep.server_id);
            ep.timeout = std::chrono::milliseconds(get_or<std::int64_t>(s, "timeout_ms", ep.timeout.count()));
            if (ep.address.empty()) throw UsageError("server '" + ep.server_id + "' has no address");
            if (ep.transport == TransportKind::Replay) ep.address = resolve(base_dir, ep.address);
            cfg.endpoints.push_back(std::move(ep));
        }
    }

    const auto discovery = get_or<std::string>(doc, "discovery", "strict");
    if (discovery == "strict") {
        cfg.discovery = DiscoveryMode::Strict;
    } else if (discovery == "best-effort") {
        cfg.discovery = DiscoveryMode::BestEffort;
    } else {
        throw UsageError("discovery must be 'strict' or 'best-effort'");
    }

    if (doc.contains("provider")) cfg.provider = parse_provider(doc["provider"]);
    cfg.tokenizer = TokenizerSpec::parse(get_or<std::string>(doc, "tokenizer", "whitespace-punct"));
    if (cfg.tokenizer.kind == TokenizerKind::ExternalVocab) {
        cfg.tokenizer.vocab_path = resolve(base_dir, cfg.tokenizer.vocab_path);
    }
    if (doc.contains("enrichment_file") && !doc["enrichment_file"].is_null()) {
        cfg.enrichment_file = resolve(base_dir, get_or<std::string>(doc, "enrichment_file", ""));
    }

    if (doc.contains("select")) {
        const auto& sel = doc["select"];
        cfg.default_k = get_or<std::int64_t>(sel, "default_k", cfg.default_k);
        if (sel.contains("default_threshold") && !sel["default_threshold"].is_null()) {
            cfg.default_threshold = get_or<double>(sel, "default_threshold", 0.0);
        }
    }
    if (cfg.default_k < 1) throw UsageError("select.default_k must be at least 1");

    if (doc.contains("listen")) {
        cfg.host = get_or<std::string>(doc["listen"], "host", cfg.host);
        cfg.port = get_or<int>(doc["listen"], "port", cfg.port);
    }
    if (doc.contains("cache")) {
        cfg.cache_enabled = get_or<bool>(doc["cache"], "enabled", cfg.cache_enabled);
        const auto capacity = get_or<std::int64_t>(doc["cache"], "capacity",
                                                   static_cast<std::int64_t>(cfg.cache_capacity));
        if (capacity < 0) throw UsageError("cache.capacity must be non-negative");
        cfg.cache_capacity = static_cast<std::size_t>(capacity);
    }
    cfg.auth_token_env = get_or<std::string>(doc, "auth_token_env", "");
    return cfg;
}

GatewayConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    const auto dir = std::filesystem::path(path).parent_path().string();
    return parse_config(buf.str(), dir.empty() ? "." : dir);
}

CatalogBuild build_from_config(const GatewayConfig& config, const Embedder& embedder,
                               std::int64_t build_timestamp_ms, const TransportFactory& factory) {
    CatalogBuild out;
    out.catalog = snapshot_catalog(config.endpoints, config.discovery, factory);
    if (out.catalog.tools.empty()) throw ValidationError("discovered catalog is empty");

    BuildOptions options;
    options.build_timestamp_ms = build_timestamp_ms;
    if (config.enrichment_file) options.enrichments = load_enrichments(*config.enrichment_file);
    const Tokenizer tokenizer(config.tokenizer);
    out.snapshot = build_index(out.catalog.tools, embedder, tokenizer, options);
    return out;
}

}  // namespace semtool
