#include "semtool/doc_builder.hpp"

#include <fstream>

#include "semtool/errors.hpp"

namespace semtool {

namespace {

// Newlines inside a field would break the fixed line structure.
std::string single_line(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) out.push_back(c == '\n' || c == '\r' ? ' ' : c);
    return out;
}

std::string render_parameters(const std::vector<ToolParameter>& params) {
    if (params.empty()) return "none";
    std::string out;
    for (const auto& p : params) {
        if (!out.empty()) out += "; ";
        out += p.name + " (" + p.type + ", " + (p.required ? "required" : "optional") + "): " +
               p.description;
    }
    return single_line(out);
}

}  // namespace

ToolDocument render_document(const ToolSchema& tool, const std::optional<std::string>& enrichment) {
    const bool enriched = enrichment.has_value() && !enrichment->empty();
    const auto description = single_line(tool.description);
    const auto capabilities = enriched ? single_line(*enrichment) : description;

    ToolDocument doc;
    doc.tool_key = tool.key();
    doc.enrichment_used = enriched;
    doc.text = "Tool: " + single_line(tool.name) + "\nPurpose: " + description +
               "\nCapabilities: " + capabilities + "\nParameters: " + render_parameters(tool.parameters);
    return doc;
}

EnrichmentTable load_enrichments(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open enrichment file " + path);
    EnrichmentTable table;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
        if (t2 == std::string::npos) {
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": expected server_id<TAB>name<TAB>text");
        }
        ToolKey key{line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1)};
        if (!table.emplace(key, line.substr(t2 + 1)).second) {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": duplicate entry for " +
                                  key.qualified());
        }
    }
    return table;
}

}  // namespace semtool
