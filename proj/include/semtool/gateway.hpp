#pragma once

#include <atomic>
#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include <json.hpp>

#include "semtool/config.hpp"
#include "semtool/embedding.hpp"
#include "semtool/index.hpp"
#include "semtool/mcp_client.hpp"

namespace semtool {

// Thread-safe LRU map from request key to response body. Capacity 0 stores nothing.
class ResponseCache {
public:
    explicit ResponseCache(std::size_t capacity) : capacity_(capacity) {}

    std::optional<std::string> get(const std::string& key);
    void put(const std::string& key, std::string body);
    void clear();
    std::size_t size() const;

private:
    using Entry = std::pair<std::string, std::string>;

    mutable std::mutex mutex_;
    std::size_t capacity_;
    std::list<Entry> order_;  // most recent first
    std::unordered_map<std::string, std::list<Entry>::iterator> lookup_;
};

// Tool definition handed to an LLM orchestrator:
//   {"name": "server_id.tool", "description": ..., "input_schema": {...}}
nlohmann::json llm_tool_definition(const IndexedTool& tool);

class Gateway {
public:
    struct Response {
        int status = 200;
        std::string body;
        std::map<std::string, std::string> headers;
    };

    // Builds the initial index; throws if discovery or the build fails.
    Gateway(GatewayConfig config, std::unique_ptr<Embedder> embedder = nullptr,
            TransportFactory factory = make_transport);
    ~Gateway();

    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    // POST /v1/select {query, k?, threshold?}
    Response handle_select(const std::string& request_body);
    // POST /v1/reindex
    Response handle_reindex();
    // GET /v1/health
    Response handle_health() const;
    // GET /v1/tools
    Response handle_tools() const;

    std::shared_ptr<const IndexSnapshot> snapshot() const;

    // HTTP serving. bind() returns the bound port (config port 0 picks a free one).
    int bind();
    void listen_after_bind();  // blocks until stop()
    void serve();              // bind + listen
    void stop();

private:
    struct Server;

    std::shared_ptr<const IndexSnapshot> build_snapshot() const;
    void publish(std::shared_ptr<const IndexSnapshot> next);
    bool authorized(const std::string& authorization_header) const;

    GatewayConfig config_;
    std::unique_ptr<Embedder> embedder_;
    TransportFactory factory_;
    std::string auth_token_;

    mutable std::mutex snapshot_mutex_;
    std::shared_ptr<const IndexSnapshot> snapshot_;

    std::mutex reindex_mutex_;
    std::atomic<bool> reindexing_{false};
    ResponseCache cache_;
    std::unique_ptr<Server> server_;
};

}  // namespace semtool
