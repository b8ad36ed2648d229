// Serves a fixed tool catalog as an MCP server over stdio, one JSON-RPC
// message per line. Used to record the bundled transcripts and in tests.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "semtool/mcp_client.hpp"

int main(int argc, char** argv) {
    std::string catalog;
    size_t page_size = 0;
    CLI::App app{"Fixture MCP server", "fixture_mcp_server"};
    app.add_option("--catalog", catalog, "JSON file with a \"tools\" array")->required();
    app.add_option("--page-size", page_size, "tools/list page size (0 = no paging)");
    CLI11_PARSE(app, argc, argv);

    try {
        const auto responder = semtool::CatalogResponder::from_file(catalog, page_size);
        std::string line;
        while (std::getline(std::cin, line)) {
            if (line.empty()) continue;
            if (auto reply = responder.handle(line)) std::cout << *reply << std::endl;
        }
    } catch (const std::exception& e) {
        std::cerr << "fixture_mcp_server: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
