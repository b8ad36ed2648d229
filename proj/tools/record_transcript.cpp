// Runs discovery against a live stdio MCP server and writes the exchange as a
// replay transcript.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "semtool/mcp_client.hpp"

int main(int argc, char** argv) {
    std::string command;
    std::string server_id;
    std::string out_path;
    int timeout_ms = 10000;
    CLI::App app{"Record an MCP discovery transcript", "record_transcript"};
    app.add_option("--command", command, "Server command line (run via /bin/sh -c)")->required();
    app.add_option("--server-id", server_id, "Server id used for normalization")->required();
    app.add_option("--out", out_path, "Transcript file")->required();
    app.add_option("--timeout-ms", timeout_ms, "Per-message timeout");
    CLI11_PARSE(app, argc, argv);

    try {
        std::ofstream sink(out_path, std::ios::binary | std::ios::trunc);
        if (!sink) throw std::runtime_error("cannot write " + out_path);
        semtool::RecordingTransport transport(
            std::make_unique<semtool::StdioTransport>(command, std::chrono::milliseconds(timeout_ms)), sink);
        const auto tools = semtool::list_tools(transport, server_id);
        std::cout << server_id << ": " << tools.size() << " tools -> " << out_path << "\n";
    } catch (const std::exception& e) {
        std::cerr << "record_transcript: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
