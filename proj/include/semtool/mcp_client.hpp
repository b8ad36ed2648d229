#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "semtool/tool_key.hpp"

namespace semtool {

// ---------------------------------------------------------------------------
// Catalog types
// ---------------------------------------------------------------------------

enum class TransportKind { StdioSubprocess, Http, Replay };

std::string to_string(TransportKind kind);
// Accepts "stdio", "stdio-subprocess", "http", "replay".
TransportKind parse_transport_kind(const std::string& text);

struct ServerEndpoint {
    std::string server_id;
    TransportKind transport = TransportKind::StdioSubprocess;
    // Command line for stdio, URL for http, transcript path for replay.
    std::string address;
    std::string display_name;
    std::chrono::milliseconds timeout{10000};
};

struct ToolParameter {
    std::string name;
    std::string type;
    std::string description;
    bool required = false;

    bool operator==(const ToolParameter&) const = default;
};

struct ToolSchema {
    std::string server_id;
    std::string name;
    std::string description;
    std::vector<ToolParameter> parameters;  // advertised order
    std::string raw_schema_text;            // canonical JSON of the advertised tool object

    ToolKey key() const { return {server_id, name}; }
    bool operator==(const ToolSchema&) const = default;
};

struct DiscoveryDiagnostic {
    std::string server_id;
    std::string message;
};

struct Catalog {
    std::vector<ToolSchema> tools;
    std::int64_t captured_at_ms = 0;
    std::vector<DiscoveryDiagnostic> diagnostics;
};

enum class DiscoveryMode { Strict, BestEffort };

// Sorted keys, no insignificant whitespace. Throws ProtocolError on bad JSON.
std::string canonicalize_json(const std::string& text);

// Builds a ToolSchema from one entry of a tools/list result.
ToolSchema normalize_tool(const std::string& server_id, const nlohmann::ordered_json& tool);

// ---------------------------------------------------------------------------
// Transports: one JSON-RPC message per line.
// ---------------------------------------------------------------------------

class Transport {
public:
    virtual ~Transport() = default;

    // Sends a request line and returns the response line for it.
    virtual std::string request(const std::string& line) = 0;
    // Sends a notification; no response is expected.
    virtual void notify(const std::string& line) = 0;
};

// Spawns `/bin/sh -c command` and speaks newline-delimited JSON-RPC on its stdio.
class StdioTransport final : public Transport {
public:
    StdioTransport(const std::string& command, std::chrono::milliseconds timeout);
    ~StdioTransport() override;

    StdioTransport(const StdioTransport&) = delete;
    StdioTransport& operator=(const StdioTransport&) = delete;

    std::string request(const std::string& line) override;
    void notify(const std::string& line) override;

private:
    void write_line(const std::string& line);
    std::string read_line();

    int fd_ = -1;
    int pid_ = -1;
    std::chrono::milliseconds timeout_;
    std::string buffer_;
};

// MCP over HTTP POST (JSON or single-event SSE replies).
class HttpTransport final : public Transport {
public:
    HttpTransport(const std::string& url, std::chrono::milliseconds timeout);
    ~HttpTransport() override;

    std::string request(const std::string& line) override;
    void notify(const std::string& line) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Replays a transcript of alternating request/response lines. Requests must
// match the recorded bytes exactly. Notifications are not recorded.
class ReplayTransport final : public Transport {
public:
    explicit ReplayTransport(const std::string& path);
    explicit ReplayTransport(std::vector<std::string> lines);

    std::string request(const std::string& line) override;
    void notify(const std::string& line) override;

private:
    std::vector<std::string> lines_;
    size_t pos_ = 0;
};

// Forwards to another transport and writes each exchange as two transcript lines.
class RecordingTransport final : public Transport {
public:
    RecordingTransport(std::unique_ptr<Transport> inner, std::ostream& sink);

    std::string request(const std::string& line) override;
    void notify(const std::string& line) override;

private:
    std::unique_ptr<Transport> inner_;
    std::ostream& sink_;
};

// Answers requests in-process; handler returns nullopt for notifications.
class InProcessTransport final : public Transport {
public:
    using Handler = std::function<std::optional<std::string>(const std::string&)>;
    explicit InProcessTransport(Handler handler) : handler_(std::move(handler)) {}

    std::string request(const std::string& line) override;
    void notify(const std::string& line) override;

private:
    Handler handler_;
};

using TransportFactory = std::function<std::unique_ptr<Transport>(const ServerEndpoint&)>;

std::unique_ptr<Transport> make_transport(const ServerEndpoint& endpoint);

// ---------------------------------------------------------------------------
// Minimal MCP server logic for a fixed tool list. Backs the fixture server
// binary and in-process tests.
// ---------------------------------------------------------------------------

class CatalogResponder {
public:
    // page_size == 0 disables pagination.
    CatalogResponder(nlohmann::ordered_json tools, size_t page_size = 0,
                     std::string server_name = "fixture");

    // Loads {"tools": [...]} (extra keys ignored).
    static CatalogResponder from_file(const std::string& path, size_t page_size = 0);

    std::optional<std::string> handle(const std::string& line) const;

private:
    nlohmann::ordered_json tools_;
    size_t page_size_;
    std::string server_name_;
};

// ---------------------------------------------------------------------------
// Discovery
// ---------------------------------------------------------------------------

// Runs initialize + paginated tools/list over an open transport.
std::vector<ToolSchema> list_tools(Transport& transport, const std::string& server_id);

std::vector<ToolSchema> list_tools(const ServerEndpoint& endpoint,
                                   const TransportFactory& factory = make_transport);

// Queries every endpoint concurrently and merges the results. Strict mode
// fails on the first broken server; best-effort records a diagnostic and
// only fails when nothing is reachable.
Catalog snapshot_catalog(const std::vector<ServerEndpoint>& endpoints, DiscoveryMode mode,
                         const TransportFactory& factory = make_transport);

}  // namespace semtool
