#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "semtool/doc_builder.hpp"
#include "semtool/embedding.hpp"
#include "semtool/mcp_client.hpp"
#include "semtool/tokens.hpp"
#include "semtool/tool_key.hpp"

namespace semtool {

struct IndexedTool {
    ToolKey tool_key;
    EmbeddingVector vector;
    std::string document_text;
    std::uint64_t schema_token_count = 0;  // tokens of raw_schema_text, not of the document
    std::string raw_schema_text;

    bool operator==(const IndexedTool&) const = default;
};

// Immutable built index. Entries are sorted by tool_key.
struct IndexSnapshot {
    std::vector<IndexedTool> entries;
    std::string provider_id;
    std::string tokenizer_id;
    std::uint32_t dimension = 0;
    std::int64_t build_timestamp_ms = 0;
    std::string catalog_hash;

    // Binary search over the sorted entries; nullptr when absent.
    const IndexedTool* find(const ToolKey& key) const;
    std::uint64_t baseline_tokens() const;

    bool operator==(const IndexSnapshot&) const = default;
};

struct ScoredTool {
    ToolKey tool_key;
    double score = 0.0;

    bool operator==(const ScoredTool&) const = default;
};

// SHA-256 hex over every (server_id, name, raw_schema_text), in key order.
std::string compute_catalog_hash(const std::vector<ToolSchema>& tools);

struct BuildOptions {
    EnrichmentTable enrichments;
    std::int64_t build_timestamp_ms = 0;
};

// Renders, embeds and token-counts every tool. Any failure aborts the build.
IndexSnapshot build_index(const std::vector<ToolSchema>& catalog, const Embedder& embedder,
                          const Tokenizer& tokenizer, const BuildOptions& options = {});

// Exact scoring of every entry. Entries scoring below `threshold` are dropped
// first, then the best k are kept, ordered by score descending and tool_key
// ascending on ties.
std::vector<ScoredTool> search(const IndexSnapshot& snapshot, const EmbeddingVector& query,
                               std::int64_t k, std::optional<double> threshold = std::nullopt);

// Binary file format (all integers little-endian):
//   magic "SEMTIDX\0", u32 version, u64 total file length,
//   str provider_id, str tokenizer_id, u32 dimension, i64 build_timestamp_ms,
//   str catalog_hash, u64 entry count,
//   per entry: str server_id, str name, str document_text, str raw_schema_text,
//              u64 schema_token_count, dimension x f32 vector,
//   32-byte SHA-256 of everything before it.
// Strings are a u32 byte length followed by the bytes.
inline constexpr std::uint32_t kIndexFormatVersion = 1;

std::string serialize_snapshot(const IndexSnapshot& snapshot);
IndexSnapshot deserialize_snapshot(std::string_view bytes);

// Writes via a temporary file and rename.
void persist_snapshot(const IndexSnapshot& snapshot, const std::string& path);
IndexSnapshot load_snapshot(const std::string& path);

// One line per entry: "server.name<TAB>tokens<TAB>v0 v1 ... v7".
std::string export_text(const IndexSnapshot& snapshot);

}  // namespace semtool
