#pragma once

#include <map>
#include <optional>
#include <string>

#include "semtool/mcp_client.hpp"
#include "semtool/tool_key.hpp"

namespace semtool {

struct ToolDocument {
    ToolKey tool_key;
    std::string text;
    bool enrichment_used = false;
};

// Expanded descriptions keyed by tool.
using EnrichmentTable = std::map<ToolKey, std::string>;

// Renders the four-line embedding document:
//
//   Tool: <name>
//   Purpose: <description>
//   Capabilities: <enrichment, or the description again>
//   Parameters: <p1 (type, required): desc; p2 (type, optional): desc> | none
ToolDocument render_document(const ToolSchema& tool,
                             const std::optional<std::string>& enrichment = std::nullopt);

// Reads a tab-separated sidecar: server_id <TAB> name <TAB> expanded text.
// Blank lines and lines starting with '#' are skipped.
EnrichmentTable load_enrichments(const std::string& path);

}  // namespace semtool
