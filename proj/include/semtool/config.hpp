#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "semtool/embedding.hpp"
#include "semtool/index.hpp"
#include "semtool/mcp_client.hpp"
#include "semtool/tokens.hpp"

namespace semtool {

// Settings shared by the indexer and the gateway. Loaded from a JSON document:
//
//   {
//     "servers": [{"id": "filesystem", "transport": "stdio|http|replay",
//                  "address": "...", "display_name": "...", "timeout_ms": 10000}],
//     "discovery": "strict" | "best-effort",
//     "provider": {"kind": "reference-local", "id": "...", "dimension": 1024}
//               | {"kind": "remote-http", "id": "...", "model": "...", "url": "...",
//                  "api_key_env": "...", "dimension": 1536, "batch_size": 64,
//                  "max_in_flight": 4, "max_retries": 3, "timeout_ms": 30000},
//     "tokenizer": "whitespace-punct",
//     "enrichment_file": "enrichments.tsv",
//     "select": {"default_k": 3, "default_threshold": null},
//     "listen": {"host": "127.0.0.1", "port": 8088},
//     "cache": {"enabled": true, "capacity": 256},
//     "auth_token_env": "SEMTOOL_GATEWAY_TOKEN"
//   }
//
// Relative replay transcript, enrichment and vocabulary paths resolve
// against the config file's directory.
struct GatewayConfig {
    std::vector<ServerEndpoint> endpoints;
    DiscoveryMode discovery = DiscoveryMode::Strict;
    ProviderSpec provider;
    TokenizerSpec tokenizer;
    std::optional<std::string> enrichment_file;
    std::int64_t default_k = 3;
    std::optional<double> default_threshold;
    std::string host = "127.0.0.1";
    int port = 8088;
    bool cache_enabled = true;
    std::size_t cache_capacity = 256;
    std::string auth_token_env;
};

// Dimension of well-known remote embedding models, if we know it.
std::optional<std::size_t> known_model_dimension(const std::string& model);

GatewayConfig parse_config(const std::string& json_text, const std::string& base_dir = ".");
GatewayConfig load_config(const std::string& path);

ProviderSpec parse_provider(const nlohmann::json& node);

struct CatalogBuild {
    Catalog catalog;
    IndexSnapshot snapshot;
};

// Discovery followed by index construction, as configured.
CatalogBuild build_from_config(const GatewayConfig& config, const Embedder& embedder,
                               std::int64_t build_timestamp_ms,
                               const TransportFactory& factory = make_transport);

}  // namespace semtool
