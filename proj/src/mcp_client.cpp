#include "semtool/mcp_client.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "semtool/errors.hpp"
#include "url.hpp"

namespace semtool {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kProtocolVersion = "2024-11-05";
constexpr size_t kMaxPages = 10000;

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::string describe_type(const ordered_json& prop) {
    if (!prop.is_object()) return "any";
    const auto it = prop.find("type");
    if (it != prop.end()) {
        if (it->is_string()) return it->get<std::string>();
        if (it->is_array()) {
            std::string joined;
            for (const auto& t : *it) {
                if (!t.is_string()) continue;
                if (!joined.empty()) joined += "|";
                joined += t.get<std::string>();
            }
            if (!joined.empty()) return joined;
        }
    }
    if (prop.contains("enum")) return "enum";
    return "any";
}

// Parses a JSON-RPC response and returns its result, checking the id.
ordered_json expect_result(const std::string& line, std::int64_t id) {
    ordered_json msg;
    try {
        msg = ordered_json::parse(line);
    } catch (const ordered_json::parse_error& e) {
        throw ProtocolError(std::string("malformed JSON-RPC response: ") + e.what());
    }
    if (!msg.is_object()) throw ProtocolError("JSON-RPC response is not an object");
    const auto id_it = msg.find("id");
    if (id_it == msg.end() || !id_it->is_number_integer() || id_it->get<std::int64_t>() != id) {
        throw ProtocolError("JSON-RPC response id does not match request id " + std::to_string(id));
    }
    if (const auto err = msg.find("error"); err != msg.end()) {
        std::string text = "server error";
        if (err->is_object() && err->contains("message") && (*err)["message"].is_string()) {
            text += ": " + (*err)["message"].get<std::string>();
        }
        throw ProtocolError(text);
    }
    const auto result = msg.find("result");
    if (result == msg.end() || !result->is_object()) {
        throw ProtocolError("JSON-RPC response has no result object");
    }
    return *result;
}

std::string make_request(std::int64_t id, const std::string& method, json params) {
    json msg = {{"jsonrpc", "2.0"}, {"id", id}, {"method", method}, {"params", std::move(params)}};
    return msg.dump();
}

}  // namespace

std::string to_string(TransportKind kind) {
    switch (kind) {
        case TransportKind::StdioSubprocess: return "stdio";
        case TransportKind::Http: return "http";
        case TransportKind::Replay: return "replay";
    }
    return "unknown";
}

TransportKind parse_transport_kind(const std::string& text) {
    if (text == "stdio" || text == "stdio-subprocess") return TransportKind::StdioSubprocess;
    if (text == "http") return TransportKind::Http;
    if (text == "replay") return TransportKind::Replay;
    throw UsageError("unknown transport '" + text + "'");
}

std::string canonicalize_json(const std::string& text) {
    try {
        return json::parse(text).dump();
    } catch (const json::parse_error& e) {
        throw ProtocolError(std::string("invalid JSON: ") + e.what());
    }
}

ToolSchema normalize_tool(const std::string& server_id, const ordered_json& tool) {
    if (!tool.is_object()) throw ProtocolError("tool entry is not an object");
    const auto name_it = tool.find("name");
    if (name_it == tool.end() || !name_it->is_string() || name_it->get<std::string>().empty()) {
        throw ProtocolError("tool entry has no name");
    }

    ToolSchema out;
    out.server_id = server_id;
    out.name = name_it->get<std::string>();
    if (const auto d = tool.find("description"); d != tool.end() && d->is_string()) {
        out.description = d->get<std::string>();
    }

    if (const auto schema = tool.find("inputSchema"); schema != tool.end() && schema->is_object()) {
        std::set<std::string> required;
        if (const auto req = schema->find("required"); req != schema->end() && req->is_array()) {
            for (const auto& r : *req) {
                if (r.is_string()) required.insert(r.get<std::string>());
            }
        }
        if (const auto props = schema->find("properties");
            props != schema->end() && props->is_object()) {
            for (const auto& [pname, prop] : props->items()) {
                ToolParameter p;
                p.name = pname;
                p.type = describe_type(prop);
                if (prop.is_object()) {
                    if (const auto pd = prop.find("description");
                        pd != prop.end() && pd->is_string()) {
                        p.description = pd->get<std::string>();
                    }
                }
                p.required = required.count(pname) > 0;
                out.parameters.push_back(std::move(p));
            }
        }
    }

    out.raw_schema_text = canonicalize_json(tool.dump());
    return out;
}

// ---------------------------------------------------------------------------
// StdioTransport
// ---------------------------------------------------------------------------

StdioTransport::StdioTransport(const std::string& command, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
        throw TransportError(std::string("socketpair failed: ") + std::strerror(errno));
    }
    const pid_t pid = ::fork();
    if (pid < 0) {
        ::close(sv[0]);
        ::close(sv[1]);
        throw TransportError(std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid == 0) {
        ::dup2(sv[1], STDIN_FILENO);
        ::dup2(sv[1], STDOUT_FILENO);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(sv[1]);
    fd_ = sv[0];
    pid_ = pid;
}

StdioTransport::~StdioTransport() {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
    }
    if (pid_ > 0) {
        int status = 0;
        for (int i = 0; i < 100; ++i) {
            if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
    }
}

void StdioTransport::write_line(const std::string& line) {
    std::string payload = line + "\n";
    size_t off = 0;
    while (off < payload.size()) {
        const auto n = ::send(fd_, payload.data() + off, payload.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw TransportError(std::string("write to MCP server failed: ") + std::strerror(errno));
        }
        off += static_cast<size_t>(n);
    }
}

std::string StdioTransport::read_line() {
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;) {
        if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (remaining.count() <= 0) throw TransportError("timed out waiting for MCP server");
        pollfd pfd{fd_, POLLIN, 0};
        const int rc = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw TransportError(std::string("poll failed: ") + std::strerror(errno));
        }
        if (rc == 0) throw TransportError("timed out waiting for MCP server");
        char chunk[4096];
        const auto n = ::recv(fd_, chunk, sizeof(chunk), 0);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw TransportError(std::string("read from MCP server failed: ") + std::strerror(errno));
        }
        if (n == 0) throw TransportError("MCP server closed its output");
        buffer_.append(chunk, static_cast<size_t>(n));
    }
}

std::string StdioTransport::request(const std::string& line) {
    write_line(line);
    for (;;) {
        std::string reply = read_line();
        if (reply.empty()) continue;
        // Skip server-initiated requests and notifications (they carry "method").
        auto parsed = json::parse(reply, nullptr, false);
        if (parsed.is_object() && parsed.contains("method")) continue;
        return reply;
    }
}

void StdioTransport::notify(const std::string& line) { write_line(line); }

// ---------------------------------------------------------------------------
// HttpTransport
// ---------------------------------------------------------------------------

struct HttpTransport::Impl {
    explicit Impl(const std::string& url, std::chrono::milliseconds timeout)
        : parts(detail::split_url(url)), client(parts.origin) {
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
    }

    httplib::Result post(const std::string& body) {
        httplib::Headers headers{{"Accept", "application/json, text/event-stream"}};
        if (!session_id.empty()) headers.emplace("Mcp-Session-Id", session_id);
        auto res = client.Post(parts.path, headers, body, "application/json");
        if (!res) {
            throw TransportError("HTTP request to MCP server failed: " +
                                 httplib::to_string(res.error()));
        }
        if (res->has_header("Mcp-Session-Id")) session_id = res->get_header_value("Mcp-Session-Id");
        return res;
    }

    detail::SplitUrl parts;
    httplib::Client client;
    std::string session_id;
};

HttpTransport::HttpTransport(const std::string& url, std::chrono::milliseconds timeout)
    : impl_(std::make_unique<Impl>(url, timeout)) {}

HttpTransport::~HttpTransport() = default;

std::string HttpTransport::request(const std::string& line) {
    auto res = impl_->post(line);
    if (res->status >= 500) {
        throw TransportError("MCP server returned HTTP " + std::to_string(res->status));
    }
    if (res->status < 200 || res->status >= 300) {
        throw ProtocolError("MCP server returned HTTP " + std::to_string(res->status));
    }
    const auto content_type = res->get_header_value("Content-Type");
    if (content_type.find("text/event-stream") == std::string::npos) return res->body;

    // Pick the first SSE event whose data is a JSON-RPC response.
    std::istringstream in(res->body);
    std::string row;
    std::string data;
    auto flush = [&]() -> std::optional<std::string> {
        if (data.empty()) return std::nullopt;
        auto parsed = json::parse(data, nullptr, false);
        std::string out;
        out.swap(data);
        if (parsed.is_object() && parsed.contains("id") && !parsed.contains("method")) return out;
        return std::nullopt;
    };
    while (std::getline(in, row)) {
        if (!row.empty() && row.back() == '\r') row.pop_back();
        if (row.empty()) {
            if (auto hit = flush()) return *hit;
            continue;
        }
        if (row.rfind("data:", 0) == 0) {
            auto payload = row.substr(5);
            if (!payload.empty() && payload.front() == ' ') payload.erase(0, 1);
            if (!data.empty()) data += "\n";
            data += payload;
        }
    }
    if (auto hit = flush()) return *hit;
    throw ProtocolError("SSE reply carried no JSON-RPC response");
}

void HttpTransport::notify(const std::string& line) {
    auto res = impl_->post(line);
    if (res->status >= 400) {
        throw TransportError("MCP server rejected notification with HTTP " +
                             std::to_string(res->status));
    }
}

// ---------------------------------------------------------------------------
// Replay / recording / in-process
// ---------------------------------------------------------------------------

ReplayTransport::ReplayTransport(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TransportError("cannot open transcript " + path);
    std::string line;
    while (std::getline(in, line)) lines_.push_back(line);
}

ReplayTransport::ReplayTransport(std::vector<std::string> lines) : lines_(std::move(lines)) {}

std::string ReplayTransport::request(const std::string& line) {
    if (pos_ + 1 >= lines_.size()) throw TransportError("transcript exhausted");
    if (lines_[pos_] != line) {
        throw ProtocolError("request does not match transcript line " + std::to_string(pos_ + 1));
    }
    std::string reply = lines_[pos_ + 1];
    pos_ += 2;
    return reply;
}

void ReplayTransport::notify(const std::string&) {}

RecordingTransport::RecordingTransport(std::unique_ptr<Transport> inner, std::ostream& sink)
    : inner_(std::move(inner)), sink_(sink) {}

std::string RecordingTransport::request(const std::string& line) {
    auto reply = inner_->request(line);
    sink_ << line << '\n' << reply << '\n';
    return reply;
}

void RecordingTransport::notify(const std::string& line) { inner_->notify(line); }

std::string InProcessTransport::request(const std::string& line) {
    auto reply = handler_(line);
    if (!reply) throw ProtocolError("in-process server sent no reply to a request");
    return *reply;
}

void InProcessTransport::notify(const std::string& line) { (void)handler_(line); }

std::unique_ptr<Transport> make_transport(const ServerEndpoint& endpoint) {
    switch (endpoint.transport) {
        case TransportKind::StdioSubprocess:
            return std::make_unique<StdioTransport>(endpoint.address, endpoint.timeout);
        case TransportKind::Http:
            return std::make_unique<HttpTransport>(endpoint.address, endpoint.timeout);
        case TransportKind::Replay:
            return std::make_unique<ReplayTransport>(endpoint.address);
    }
    throw UsageError("unknown transport");
}

// ---------------------------------------------------------------------------
// CatalogResponder
// ---------------------------------------------------------------------------

CatalogResponder::CatalogResponder(ordered_json tools, size_t page_size, std::string server_name)
    : tools_(std::move(tools)), page_size_(page_size), server_name_(std::move(server_name)) {
    if (!tools_.is_array()) throw UsageError("fixture tools must be an array");
}

CatalogResponder CatalogResponder::from_file(const std::string& path, size_t page_size) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open fixture catalog " + path);
    ordered_json doc;
    try {
        doc = ordered_json::parse(in);
    } catch (const ordered_json::parse_error& e) {
        throw UsageError("fixture catalog " + path + ": " + e.what());
    }
    std::string name = doc.value("server_id", "fixture");
    return CatalogResponder(doc.at("tools"), page_size, std::move(name));
}

std::optional<std::string> CatalogResponder::handle(const std::string& line) const {
    auto msg = ordered_json::parse(line, nullptr, false);
    auto reply = [](const ordered_json& id, ordered_json body, bool is_error) {
        ordered_json out;
        out["jsonrpc"] = "2.0";
        out["id"] = id;
        out[is_error ? "error" : "result"] = std::move(body);
        return out.dump();
    };
    if (msg.is_discarded() || !msg.is_object()) {
        return reply(nullptr, {{"code", -32700}, {"message", "parse error"}}, true);
    }
    if (!msg.contains("id")) return std::nullopt;
    const auto id = msg["id"];
    const auto method = msg.value("method", "");

    if (method == "initialize") {
        ordered_json result;
        result["protocolVersion"] = kProtocolVersion;
        result["capabilities"] = {{"tools", {{"listChanged", false}}}};
        result["serverInfo"] = {{"name", server_name_}, {"version", "1.0.0"}};
        return reply(id, std::move(result), false);
    }
    if (method == "ping") return reply(id, ordered_json::object(), false);
    if (method == "tools/list") {
        size_t offset = 0;
        if (msg.contains("params") && msg["params"].is_object() && msg["params"].contains("cursor")) {
            const auto& cursor = msg["params"]["cursor"];
            const auto text = cursor.is_string() ? cursor.get<std::string>() : std::string();
            const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), offset);
            if (ec != std::errc() || ptr != text.data() + text.size() || offset > tools_.size()) {
                return reply(id, {{"code", -32602}, {"message", "invalid cursor"}}, true);
            }
        }
        const size_t end = page_size_ == 0 ? tools_.size()
                                           : std::min(tools_.size(), offset + page_size_);
        ordered_json page = ordered_json::array();
        for (size_t i = offset; i < end; ++i) page.push_back(tools_[i]);
        ordered_json result;
        result["tools"] = std::move(page);
        if (end < tools_.size()) result["nextCursor"] = std::to_string(end);
        return reply(id, std::move(result), false);
    }
    return reply(id, {{"code", -32601}, {"message", "method not found: " + method}}, true);
}

// ---------------------------------------------------------------------------
// Discovery
// ---------------------------------------------------------------------------

std::vector<ToolSchema> list_tools(Transport& transport, const std::string& server_id) {
    std::int64_t next_id = 1;

    const json init_params = {
        {"protocolVersion", kProtocolVersion},
        {"capabilities", json::object()},
        {"clientInfo", {{"name", "semtool"}, {"version", "0.1.0"}}},
    };
    const auto init_id = next_id++;
    (void)expect_result(transport.request(make_request(init_id, "initialize", init_params)), init_id);
    transport.notify(json{{"jsonrpc", "2.0"}, {"method", "notifications/initialized"}}.dump());

    std::vector<ToolSchema> tools;
    std::optional<std::string> cursor;
    std::set<std::string> seen_cursors;
    for (size_t page = 0; page < kMaxPages; ++page) {
        json params = json::object();
        if (cursor) params["cursor"] = *cursor;
        const auto id = next_id++;
        const auto result = expect_result(transport.request(make_request(id, "tools/list", params)), id);
        const auto list = result.find("tools");
        if (list == result.end() || !list->is_array()) {
            throw ProtocolError("tools/list result has no tools array");
        }
        for (const auto& tool : *list) tools.push_back(normalize_tool(server_id, tool));

        const auto next = result.find("nextCursor");
        if (next == result.end() || next->is_null()) return tools;
        if (!next->is_string()) throw ProtocolError("nextCursor is not a string");
        cursor = next->get<std::string>();
        if (!seen_cursors.insert(*cursor).second) {
            throw ProtocolError("server repeated pagination cursor '" + *cursor + "'");
        }
    }
    throw ProtocolError("tools/list pagination did not terminate");
}

std::vector<ToolSchema> list_tools(const ServerEndpoint& endpoint, const TransportFactory& factory) {
    auto transport = factory(endpoint);
    return list_tools(*transport, endpoint.server_id);
}

Catalog snapshot_catalog(const std::vector<ServerEndpoint>& endpoints, DiscoveryMode mode,
                         const TransportFactory& factory) {
    if (endpoints.empty()) throw UsageError("no MCP server endpoints configured");
    std::set<std::string> ids;
    for (const auto& ep : endpoints) {
        if (!is_valid_server_id(ep.server_id)) {
            throw ValidationError("invalid server_id '" + ep.server_id + "' (expected [a-z0-9_-]+)");
        }
        if (!ids.insert(ep.server_id).second) {
            throw ValidationError("duplicate server_id '" + ep.server_id + "'");
        }
    }

    std::vector<std::future<std::vector<ToolSchema>>> pending;
    pending.reserve(endpoints.size());
    for (const auto& ep : endpoints) {
        pending.push_back(std::async(std::launch::async,
                                     [&factory, ep] { return list_tools(ep, factory); }));
    }

    Catalog catalog;
    catalog.captured_at_ms = now_ms();
    size_t live = 0;
    for (size_t i = 0; i < endpoints.size(); ++i) {
        try {
            auto tools = pending[i].get();
            ++live;
            for (auto& t : tools) catalog.tools.push_back(std::move(t));
        } catch (const std::exception& e) {
            catalog.diagnostics.push_back({endpoints[i].server_id, e.what()});
        }
    }

    if (!catalog.diagnostics.empty() && (mode == DiscoveryMode::Strict || live == 0)) {
        std::string text = live == 0 ? "no MCP server reachable" : "discovery failed";
        for (const auto& d : catalog.diagnostics) text += "; " + d.server_id + ": " + d.message;
        throw TransportError(text);
    }

    std::set<ToolKey> keys;
    for (const auto& t : catalog.tools) {
        if (!keys.insert(t.key()).second) {
            throw ValidationError("duplicate tool '" + t.key().qualified() + "' in catalog");
        }
    }
    return catalog;
}

}  // namespace semtool
